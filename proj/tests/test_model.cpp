#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "atomic_sm/gradcheck.hpp"
#include "atomic_sm/model.hpp"
#include "atomic_sm/synthetic.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace atomic_sm;
using namespace atomic_sm::model;
using ad::Tape;
using ad::Tensor;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return Tensor::matrix(r, c, std::move(v));
}

oracle::Vec row(const Tensor& t, std::size_t i) {
  oracle::Vec v(t.dim(1));
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = t.at(i, k);
  return v;
}

graph::StockGraph random_graph(std::size_t n, Rng& rng, double density = 0.4) {
  std::vector<std::string> nodes;
  for (std::size_t i = 0; i < n; ++i) nodes.push_back("N" + std::to_string(i));
  graph::StockGraph g(Date(2020, 1, 1), nodes);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(density)) g.add_edge(i, j, graph::EdgeOrder::first, "test");
  return g;
}

std::vector<std::vector<bool>> dense_adjacency(const graph::StockGraph& g) {
  std::vector<std::vector<bool>> adj(g.size(), std::vector<bool>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) adj[i][j] = g.has_edge(i, j);
  return adj;
}

}  // namespace

// ---- encoders -------------------------------------------------------------------------

TEST_CASE("single-day sequence: attention weight 1 and encoding equals the hidden state") {
  Rng rng(1);
  const auto p = TemporalEncoderParams::init(3, 8, rng);
  Tape tape;
  const auto out = encode_sequence(tape, random_matrix(1, 3, rng), p);
  CHECK(out.attention.item() == 1.0);
  for (std::size_t k = 0; k < 8; ++k) CHECK(out.encoding.at(0, k) == out.hidden[0].at(0, k));
}

TEST_CASE("encoders match the straight-line oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto price = TemporalEncoderParams::init(3, 64, rng);
    const auto media = TemporalEncoderParams::init(2, 16, rng);
    for (std::size_t days : {3, 5}) {
      const Tensor pf = random_matrix(days, 3, rng, 2.0);
      const Tensor mf = random_matrix(days, 2, rng, 2.0);
      Tape tape;
      const Tensor q = encode_technical(tape, pf, price);
      const Tensor c = encode_media(tape, mf, media);
      const auto q_ref = oracle::lstm_attention(oracle::to_mat(pf), price);
      const auto c_ref = oracle::lstm_attention(oracle::to_mat(mf), media);
      CHECK(q.shape() == ad::Shape{1, 64});
      for (std::size_t k = 0; k < 64; ++k) CHECK(std::abs(q.at(0, k) - q_ref.encoding[k]) <= 1e-12);
      for (std::size_t k = 0; k < 16; ++k) CHECK(std::abs(c.at(0, k) - c_ref.encoding[k]) <= 1e-12);
    }
  }
}

TEST_CASE("batched encoding equals per-stock encoding") {
  Rng rng(3);
  const auto p = TemporalEncoderParams::init(3, 16, rng);
  std::vector<Tensor> seqs;
  for (int i = 0; i < 4; ++i) seqs.push_back(random_matrix(5, 3, rng));
  std::vector<const Tensor*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  Tape tape;
  const auto batched = encode_sequences(tape, to_steps(ptrs), p);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto ref = oracle::lstm_attention(oracle::to_mat(seqs[i]), p);
    for (std::size_t k = 0; k < 16; ++k) CHECK(std::abs(batched.encoding.at(i, k) - ref.encoding[k]) <= 1e-12);
  }
}

TEST_CASE("temporal attention is a probability vector and the encoding lies in the hidden-state hull") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(500 + seed);
    const auto p = TemporalEncoderParams::init(3, 12, rng);
    const std::size_t days = 1 + rng.below(8);
    Tape tape(Tape::Mode::inference);
    const auto out = encode_sequence(tape, random_matrix(days, 3, rng, 5.0), p);
    double total = 0.0;
    for (double b : out.attention.data()) {
      CHECK(b >= 0.0);
      total += b;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
    for (std::size_t k = 0; k < 12; ++k) {
      double lo = 1e9, hi = -1e9;
      for (const auto& h : out.hidden) {
        lo = std::min(lo, h.at(0, k));
        hi = std::max(hi, h.at(0, k));
      }
      CHECK(out.encoding.at(0, k) >= lo - 1e-15);
      CHECK(out.encoding.at(0, k) <= hi + 1e-15);
    }
  }
}

TEST_CASE("floored score ratios give finite media encodings") {
  Rng rng(2);
  const auto p = TemporalEncoderParams::init(2, 16, rng);
  Tape tape;
  const auto c = encode_media(tape, Tensor::matrix(5, 2, {1e-4, 10, 10, 1e-4, 0, 0, 10, 10, 1e-4, 1e-4}), p);
  for (double v : c.data()) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(encode_media(tape, Tensor::matrix(1, 2, {NAN, 1.0}), p), std::domain_error);
}

TEST_CASE("fusion examples") {
  Rng rng(4);
  FusionParams zero{Tensor::zeros({4, 3, 2}), Tensor::zeros({3})};
  Tape tape;
  const Tensor fused = fuse(tape, random_matrix(1, 4, rng), random_matrix(1, 2, rng), zero);
  for (double v : fused.data()) CHECK(v == 0.0);

  FusionParams scalar{Tensor({1, 1, 1}, {1.0}), Tensor::zeros({1})};
  CHECK(fuse(tape, Tensor::matrix(1, 1, {2}), Tensor::matrix(1, 1, {3}), scalar).item() == std::tanh(6.0));

  CHECK_THROWS_AS(fuse(tape, random_matrix(1, 5, rng), random_matrix(1, 2, rng), zero), ad::ShapeError);
}

TEST_CASE("fusion matches the triple-loop oracle") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t dh = 1 + rng.below(6), df = 1 + rng.below(6), dm = 1 + rng.below(6), n = 1 + rng.below(4);
    auto p = FusionParams::init(dh, df, dm, rng);
    for (double& b : p.bias.mutable_data()) b = rng.uniform(-1, 1);
    const Tensor q = random_matrix(n, dh, rng), c = random_matrix(n, dm, rng);
    Tape tape;
    const Tensor x = fuse(tape, q, c, p);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ref = oracle::bilinear(row(q, i), row(c, i), p);
      for (std::size_t k = 0; k < df; ++k) CHECK(std::abs(x.at(i, k) - ref[k]) <= 1e-12);
    }
  }
}

TEST_CASE("fusion without tanh is bilinear") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(100 + seed);
    auto p = FusionParams::init(5, 4, 3, rng);
    const Tensor q1 = random_matrix(2, 5, rng), q2 = random_matrix(2, 5, rng), c = random_matrix(2, 3, rng);
    const double alpha = rng.uniform(-3, 3);
    Tape tape(Tape::Mode::inference);
    const Tensor base = fuse(tape, q1, c, p, false);
    const Tensor scaled = fuse(tape, ad::scale(tape, q1, alpha), c, p, false);
    const Tensor sum = fuse(tape, ad::add(tape, q1, q2), c, p, false);
    const Tensor other = fuse(tape, q2, c, p, false);
    for (std::size_t i = 0; i < base.numel(); ++i) {
      CHECK(std::abs(scaled[i] - alpha * base[i]) <= 1e-12);
      CHECK(std::abs(sum[i] - (base[i] + other[i])) <= 1e-12);
    }
  }
}

TEST_CASE("encoder and fusion gradients match finite differences") {
  Rng rng(6);
  const auto price = TemporalEncoderParams::init(3, 6, rng);
  const auto media = TemporalEncoderParams::init(2, 4, rng);
  const auto fusion = FusionParams::init(6, 5, 4, rng);
  const Tensor pf = random_matrix(5, 3, rng, 2.0), mf = random_matrix(5, 2, rng, 2.0);
  const Tensor w = random_matrix(1, 5, rng);
  auto f = [&](Tape& tape) {
    const Tensor x = fuse(tape, encode_technical(tape, pf, price), encode_media(tape, mf, media), fusion);
    return ad::sum(tape, ad::mul(tape, x, w));
  };
  std::vector<ad::NamedTensor> params = price.named("technical");
  for (auto& p : media.named("media")) params.push_back(p);
  for (auto& p : fusion.named("fusion")) params.push_back(p);
  const auto report = ad::grad_check(f, params);
  CHECK(report.max_relative_error() < 1e-4);
}

// ---- GAT and head -----------------------------------------------------------------------

TEST_CASE("isolated node attends only to itself") {
  Rng rng(7);
  const auto p = GatParams::init(5, 3, 2, rng);
  graph::StockGraph g(Date(2020, 1, 1), {"A", "B"});
  const Tensor x = random_matrix(2, 5, rng);
  Tape tape;
  const auto out = gat_forward(tape, x, g, p);
  for (std::size_t h = 0; h < 2; ++h) {
    CHECK(out.attention[h].at(0, 0) == 1.0);
    CHECK(out.attention[h].at(0, 1) == 0.0);
  }
  const auto ref = oracle::gat_dense(oracle::to_mat(x), dense_adjacency(g), p);
  for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(out.features.at(0, k) - ref.features[0][k]) <= 1e-12);
}

TEST_CASE("two connected nodes with identical features split attention evenly") {
  Rng rng(8);
  const auto p = GatParams::init(4, 3, 4, rng);
  graph::StockGraph g(Date(2020, 1, 1), {"A", "B"});
  g.add_edge(0, 1, graph::EdgeOrder::first, "A-B");
  const auto r = random_matrix(1, 4, rng);
  std::vector<double> v(r.data().begin(), r.data().end());
  v.insert(v.end(), r.data().begin(), r.data().end());
  Tape tape;
  const auto out = gat_forward(tape, Tensor::matrix(2, 4, v), g, p);
  for (const auto& a : out.attention)
    for (double x : a.data()) CHECK(x == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("GAT matches the dense-mask oracle and attention rows are stochastic") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t n = 1 + rng.below(6);
    const auto p = GatParams::init(6, 4, 4, rng);
    const auto g = random_graph(n, rng);
    const Tensor x = random_matrix(n, 6, rng, 2.0);
    Tape tape;
    const auto out = gat_forward(tape, x, g, p);
    const auto ref = oracle::gat_dense(oracle::to_mat(x), dense_adjacency(g), p);
    CAPTURE(seed);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < 16; ++k) CHECK(std::abs(out.features.at(i, k) - ref.features[i][k]) <= 1e-12);
      for (std::size_t h = 0; h < 4; ++h) {
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double a = out.attention[h].at(i, j);
          CHECK(a >= 0.0);
          if (!g.has_edge(i, j)) CHECK(a == 0.0);
          CHECK(std::abs(a - ref.attention[h][i][j]) <= 1e-12);
          total += a;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("GAT is permutation equivariant") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(200 + seed);
    const std::size_t n = 2 + rng.below(5);
    const auto p = GatParams::init(5, 3, 4, rng);
    const auto g = random_graph(n, rng);
    const Tensor x = random_matrix(n, 5, rng);

    std::vector<std::string> order = g.nodes();
    rng.shuffle(std::span(order));
    const auto pg = g.induced(order);
    std::vector<double> px;
    for (const auto& name : order) {
      const auto r = row(x, *g.index_of(name));
      px.insert(px.end(), r.begin(), r.end());
    }
    Tape tape;
    const auto a = gat_forward(tape, x, g, p);
    const auto b = gat_forward(tape, Tensor::matrix(n, 5, px), pg, p);
    for (std::size_t pi = 0; pi < n; ++pi) {
      const std::size_t i = *g.index_of(order[pi]);
      for (std::size_t k = 0; k < 12; ++k) CHECK(std::abs(a.features.at(i, k) - b.features.at(pi, k)) <= 1e-12);
    }
  }
}

TEST_CASE("GAT locality: only neighbors influence a node") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(300 + seed);
    const std::size_t n = 2 + rng.below(5);
    const auto p = GatParams::init(4, 3, 2, rng);
    const auto g = random_graph(n, rng, 0.3);
    const Tensor x = random_matrix(n, 4, rng);
    const std::size_t j = rng.below(n);
    Tensor y = x.clone();
    for (std::size_t k = 0; k < 4; ++k) y.mutable_data()[j * 4 + k] += rng.uniform(0.5, 1.0);
    Tape tape;
    const auto a = gat_forward(tape, x, g, p);
    const auto b = gat_forward(tape, y, g, p);
    for (std::size_t i = 0; i < n; ++i) {
      bool changed = false;
      for (std::size_t k = 0; k < 6; ++k) changed = changed || a.features.at(i, k) != b.features.at(i, k);
      if (!g.has_edge(i, j)) CHECK_FALSE(changed);
    }
  }
}

TEST_CASE("GAT contract errors") {
  Rng rng(9);
  const auto p = GatParams::init(4, 3, 2, rng);
  graph::StockGraph g(Date(2020, 1, 1), {"A", "B", "C"});
  Tape tape;
  CHECK_THROWS_AS(gat_forward(tape, random_matrix(2, 4, rng), g, p), ad::ShapeError);
  CHECK_THROWS_AS(gat_forward(tape, random_matrix(3, 5, rng), g, p), ad::ShapeError);
}

TEST_CASE("classifier head examples") {
  Rng rng(10);
  Tape tape;
  HeadParams zero{Tensor::zeros({3, 1}), Tensor::scalar(0.0)};
  const Tensor half = classify(tape, random_matrix(4, 3, rng), zero);
  for (double p : half.data()) CHECK(p == 0.5);

  HeadParams big{Tensor::zeros({3, 1}), Tensor::scalar(50.0)};
  // 1 - p is below 1e-20 (p itself rounds to 1 in double precision).
  const double p = classify(tape, random_matrix(1, 3, rng), big).item();
  CHECK(1.0 - p < 1e-20);
  CHECK(1.0 / (1.0 + std::exp(50.0)) < 1e-20);

  HeadParams hand{Tensor::matrix(2, 1, {0.5, -1.0}), Tensor::scalar(0.25)};
  const Tensor z = Tensor::matrix(2, 2, {1.0, 2.0, -0.5, 0.3});
  const Tensor probs = classify(tape, z, hand);
  CHECK(probs.shape() == ad::Shape{2});
  CHECK(std::abs(probs[0] - 1.0 / (1.0 + std::exp(-(0.5 - 2.0 + 0.25)))) <= 1e-12);
  CHECK(std::abs(probs[1] - 1.0 / (1.0 + std::exp(-(-0.25 - 0.3 + 0.25)))) <= 1e-12);
}

TEST_CASE("GAT and head gradients match finite differences on small graphs") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(400 + seed);
    const std::size_t n = 2 + rng.below(5);
    const auto gat = GatParams::init(5, 3, 4, rng);
    const auto head = HeadParams::init(12, rng);
    const auto g = random_graph(n, rng, 0.5);
    Tensor x = random_matrix(n, 5, rng);
    x.set_requires_grad(true);
    std::vector<double> labels(n);
    for (auto& l : labels) l = rng.bernoulli(0.5) ? 1.0 : 0.0;
    auto f = [&](Tape& tape) {
      return ad::binary_cross_entropy(tape, classify(tape, gat_forward(tape, x, g, gat).features, head), labels);
    };
    auto params = gat.named("gat");
    for (auto& p : head.named("head")) params.push_back(p);
    params.push_back({"x", x});
    CAPTURE(seed);
    CHECK(ad::grad_check(f, params).max_relative_error() < 1e-4);
  }
}

// ---- whole model ---------------------------------------------------------------------

TEST_CASE("full model gradients match finite differences at reduced width") {
  ModelConfig c;
  c.price_hidden = 6;
  c.media_hidden = 4;
  c.fused_size = 5;
  c.gat_head_size = 3;
  const auto fixture = make_gradcheck_fixture(c, 17);
  CHECK(fixture.day.symbols.size() == 6);
  CHECK(fixture.day.graph.edge_count() >= 3);
  const auto report = full_model_grad_check(fixture);
  for (const auto& e : report.entries) {
    CAPTURE(e.name);
    CHECK(e.max_relative_error < 1e-4);
  }
}

TEST_CASE("model parameters have stable names and shapes") {
  const auto m = AtomicModel::initialize(ModelConfig{}, 1);
  const auto params = m.parameters();
  std::map<std::string, ad::Shape> shapes;
  for (const auto& p : params) shapes[p.name] = p.tensor.shape();
  CHECK(shapes.at("technical.w_input") == ad::Shape{3, 256});
  CHECK(shapes.at("technical.w_hidden") == ad::Shape{64, 256});
  CHECK(shapes.at("media.w_input") == ad::Shape{2, 64});
  CHECK(shapes.at("fusion.weight") == ad::Shape{64, 64, 16});
  CHECK(shapes.at("gat.head3.projection") == ad::Shape{64, 16});
  CHECK(shapes.at("gat.head0.attention") == ad::Shape{32, 1});
  CHECK(shapes.at("head.weight") == ad::Shape{64, 1});
  // Forget-gate bias starts at 1.
  const auto& bias = m.parameters()[2].tensor;
  CHECK(bias[64] == 1.0);
  CHECK(bias[0] == 0.0);
}

TEST_CASE("initialization is deterministic in the seed") {
  const auto a = AtomicModel::initialize(ModelConfig{}, 5);
  const auto b = AtomicModel::initialize(ModelConfig{}, 5);
  const auto c = AtomicModel::initialize(ModelConfig{}, 6);
  CHECK(checkpoint_to_string(a) == checkpoint_to_string(b));
  CHECK(checkpoint_to_string(a) != checkpoint_to_string(c));
}

TEST_CASE("checkpoint round trip is exact") {
  ModelConfig c;
  c.price_hidden = 8;
  c.fused_size = 6;
  auto m = AtomicModel::initialize(c, 3);
  data::SynthConfig sc;
  sc.stocks = 4;
  sc.days = 20;
  const auto sections = data::group_by_date(data::build_windows(data::generate_synthetic(sc, 3).series, {}));
  m.fit_scalers(sections);
  m.metadata()["train_end"] = "2019-02-01";
  test_support::TempDir dir("ckpt");
  save_checkpoint(dir / "m.txt", m);
  const auto back = load_checkpoint(dir / "m.txt");
  CHECK(back.config() == m.config());
  CHECK(back.metadata() == m.metadata());
  CHECK(back.price_scaler().mean == m.price_scaler().mean);
  const auto pa = m.parameters(), pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(pa[i].tensor.shape() == pb[i].tensor.shape());
    CHECK(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
  }
  CHECK(checkpoint_to_string(back) == checkpoint_to_string(m));
  CHECK_THROWS_AS(checkpoint_from_string("not a checkpoint"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.txt"), std::exception);
}

TEST_CASE("clone shares no storage") {
  const auto a = AtomicModel::initialize(ModelConfig{}, 1);
  auto b = a.clone();
  const auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK_FALSE(pa[i].tensor.same_storage(pb[i].tensor));
  pb[0].tensor.mutable_data()[0] += 1.0;
  CHECK(pa[0].tensor[0] != pb[0].tensor[0]);
}

TEST_CASE("feature scaler standardizes training columns") {
  const Tensor a = Tensor::matrix(2, 2, {1, 10, 3, 30});
  const Tensor b = Tensor::matrix(1, 2, {5, 50});
  const std::vector<const Tensor*> ms = {&a, &b};
  const auto s = FeatureScaler::fit(ms);
  CHECK(s.mean[0] == doctest::Approx(3.0));
  CHECK(s.mean[1] == doctest::Approx(30.0));
  CHECK(s.scale[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
  const Tensor z = s.apply(b);
  CHECK(z.at(0, 0) == doctest::Approx(2.0 / std::sqrt(8.0 / 3.0)));
}

TEST_CASE("attention dump lists neighborhood triplets") {
  Rng rng(11);
  const auto p = GatParams::init(3, 2, 2, rng);
  graph::StockGraph g(Date(2020, 1, 1), {"A", "B", "C"});
  g.add_edge(0, 2, graph::EdgeOrder::first, "A-C");
  Tape tape;
  const auto out = gat_forward(tape, random_matrix(3, 3, rng), g, p);
  const auto text = attention_triplets("2020-01-02", g, out.attention);
  // 2 heads x (2 + 1 + 2) neighborhood entries
  CHECK(std::count(text.begin(), text.end(), '\n') == 10);
  CHECK(text.find("2020-01-02,1,C,A,") != std::string::npos);
}
