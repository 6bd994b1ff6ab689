#include "atomic_sm/gradcheck.hpp"

#include <cmath>

#include "atomic_sm/synthetic.hpp"
#include "atomic_sm/training.hpp"

namespace atomic_sm::model {

GradCheckFixture make_gradcheck_fixture(const ModelConfig& config, std::uint64_t seed, std::size_t stocks) {
  if (stocks < 6) throw std::invalid_argument("gradcheck fixture needs at least 6 stocks");
  data::SynthConfig synth;
  synth.stocks = stocks;
  synth.days = std::max<std::size_t>(10, config.lookback + 3);
  synth.signal = data::SignalType::none;
  const auto market = data::generate_synthetic(synth, seed);

  data::WindowConfig wc;
  wc.lookback = config.lookback;
  const auto sections = data::group_by_date(data::build_windows(market.series, wc));
  const auto& section = sections.front();

  // 0-1-2 direct chain, 3 and 4 under a common parent, the rest isolated.
  const auto& e = market.universe.entries();
  const Date from = market.series.begin()->second.front().date;
  const std::vector<graph::RelationRecord> relations = {
      {e[0].entity, "P127", e[1].entity, from},
      {e[2].entity, "P355", e[1].entity, from},
      {e[3].entity, "P127", "Q999999", from},
      {e[4].entity, "P127", "Q999999", from},
  };
  const auto g = graph::build_graph(relations, market.universe, from);

  GradCheckFixture f{AtomicModel::initialize(config, seed), {}};
  f.model.fit_scalers(sections);
  // Fresh initialization leaves the fused features around 1e-4, where the
  // LeakyReLU and ELU kinks sit within a finite-difference step. Redraw every
  // tensor at a larger scale so activations are O(0.1).
  Rng rng(seed, "gradcheck.point");
  for (auto& p : f.model.parameters()) {
    const auto& shape = p.tensor.shape();
    double fan_in = shape.size() >= 2 ? static_cast<double>(shape[0]) : 0.0;
    if (shape.size() == 3) fan_in *= static_cast<double>(shape[2]);
    const double bound = fan_in > 0.0 ? 2.0 / std::sqrt(fan_in) : 0.5;
    for (double& v : p.tensor.mutable_data()) v = rng.uniform(-bound, bound);
  }
  f.day = f.model.prepare(section, g);
  return f;
}

ad::GradCheckReport full_model_grad_check(const GradCheckFixture& fixture, const ad::GradCheckOptions& options) {
  auto loss = [&](ad::Tape& tape) {
    const auto out = fixture.model.forward(tape, fixture.day);
    return train::loss(tape, out.probabilities, fixture.day.labels);
  };
  return ad::grad_check(loss, fixture.model.parameters(), options);
}

}  // namespace atomic_sm::model
