#include "atomic_sm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "atomic_sm/text_io.hpp"

namespace atomic_sm::train {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning_rate must be >= 0");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (patience == 0 || patience >= max_epochs) throw std::invalid_argument("patience must be in [1, max_epochs)");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must be in (0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
    throw std::invalid_argument("invalid Adam moments");
  }
}

ad::Tensor loss(ad::Tape& tape, const ad::Tensor& probabilities, std::span<const double> labels) {
  return ad::binary_cross_entropy(tape, probabilities, labels, 1e-12);
}

double loss_value(std::span<const double> probabilities, std::span<const double> labels) {
  ad::Tape tape(ad::Tape::Mode::inference);
  return loss(tape, ad::Tensor::vector({probabilities.begin(), probabilities.end()}), labels).item();
}

// ---- Adam ------------------------------------------------------------------------

Adam::Adam(std::vector<ad::NamedTensor> params, const TrainConfig& config)
    : params_(std::move(params)),
      lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::rebind(std::vector<ad::NamedTensor> params) {
  if (params.size() != params_.size()) throw std::invalid_argument("Adam::rebind: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].tensor.numel() != m_[i].size()) throw std::invalid_argument("Adam::rebind: shape mismatch");
  }
  params_ = std::move(params);
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto values = params_[k].tensor.mutable_data();
    const auto grad = params_[k].tensor.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
      values[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

// ---- epochs -------------------------------------------------------------------------

TrainState make_state(const model::AtomicModel& model, const TrainConfig& config) {
  config.validate();
  TrainState state;
  state.optimizer = Adam(model.parameters(), config);
  state.rng = Rng(config.seed, "train.shuffle");
  state.best_checkpoint = model.clone();
  return state;
}

void train_epoch(TrainState& state, model::AtomicModel& model, std::span<const model::DayInput> train_days,
                 const TrainConfig& config) {
  if (train_days.empty()) throw std::invalid_argument("train_epoch: no training days");
  std::vector<std::size_t> order(train_days.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  state.rng.shuffle(std::span(order));

  double loss_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    state.optimizer.zero_grad();
    ad::Tape tape;
    ad::Tensor total;
    std::vector<Date> dates;
    for (std::size_t b = start; b < end; ++b) {
      const auto& day = train_days[order[b]];
      dates.push_back(day.date);
      const auto forward = model.forward(tape, day);
      const ad::Tensor day_loss = loss(tape, forward.probabilities, day.labels);
      total = b == start ? day_loss : ad::add(tape, total, day_loss);
    }
    const ad::Tensor batch_loss = ad::scale(tape, total, 1.0 / static_cast<double>(end - start));
    const double value = batch_loss.item();
    if (!std::isfinite(value)) {
      std::string list;
      for (const auto& d : dates) list += " " + d.to_string();
      throw NumericalError("non-finite training loss at epoch " + std::to_string(state.epoch + 1) +
                               "; batch dates:" + list,
                           dates);
    }
    tape.backward(batch_loss);
    state.optimizer.step();
    loss_sum += value;
    ++batches;
  }
  state.last_train_loss = loss_sum / static_cast<double>(batches);
  ++state.epoch;
}

// ---- evaluation ----------------------------------------------------------------------

std::vector<eval::PredictionRecord> predict(const model::AtomicModel& model, std::span<const model::DayInput> days) {
  std::vector<eval::PredictionRecord> out;
  for (const auto& day : days) {
    ad::Tape tape(ad::Tape::Mode::inference);
    const auto p = model.forward(tape, day).probabilities;
    for (std::size_t i = 0; i < day.symbols.size(); ++i) {
      out.push_back(eval::PredictionRecord{day.date, day.symbols[i], p[i], day.labels[i] > 0.5 ? 1 : 0});
    }
  }
  return out;
}

Metrics evaluate(const model::AtomicModel& model, std::span<const model::DayInput> days, double threshold,
                 F1Mode mode) {
  const auto preds = predict(model, days);
  Metrics m;
  m.counts = eval::confusion(preds, threshold);
  const auto fa = eval::f1_accuracy(m.counts);
  m.f1 = mode == F1Mode::positive ? fa.f1 : eval::macro_f1(m.counts);
  m.accuracy = fa.accuracy;
  m.mcc = eval::mcc(m.counts);
  return m;
}

FitResult fit(const model::AtomicModel& initial, const TrainingData& data, const TrainConfig& config,
              const std::function<void(const EpochRecord&)>& on_epoch) {
  if (data.validation.empty()) throw std::invalid_argument("fit: no validation days");
  model::AtomicModel model = initial.clone();
  TrainState state = make_state(model, config);
  FitResult result;

  while (state.epoch < config.max_epochs) {
    train_epoch(state, model, data.train, config);
    const Metrics val = evaluate(model, data.validation, config.threshold, config.f1_mode);
    const EpochRecord record{state.epoch, state.last_train_loss, val.f1, val.accuracy, val.mcc};
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (val.f1 > state.best_validation_f1) {
      state.best_validation_f1 = val.f1;
      state.best_epoch = state.epoch;
      state.best_checkpoint.assign_parameters(model);
      state.epochs_since_improvement = 0;
    } else if (++state.epochs_since_improvement >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  result.model = std::move(state.best_checkpoint);
  result.best_epoch = state.best_epoch;
  result.best_validation_f1 = state.best_validation_f1;
  return result;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::string out = "epoch,train_loss,val_f1,val_acc,val_mcc\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + io::format_double(r.train_loss) + "," + io::format_double(r.val_f1) + "," +
           io::format_double(r.val_acc) + "," + io::format_double(r.val_mcc) + "\n";
  }
  return out;
}

}  // namespace atomic_sm::train
