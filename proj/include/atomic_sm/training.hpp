#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "atomic_sm/autodiff.hpp"
#include "atomic_sm/evaluation.hpp"
#include "atomic_sm/model.hpp"
#include "atomic_sm/rng.hpp"

namespace atomic_sm::train {

enum class F1Mode { positive, macro };

struct TrainConfig {
  double learning_rate = 4e-4;
  std::size_t max_epochs = 8000;
  std::size_t batch_size = 8;  // trading days per optimizer step
  std::size_t patience = 50;   // epochs without validation-F1 improvement
  std::uint64_t seed = 42;
  double threshold = 0.5;
  F1Mode f1_mode = F1Mode::positive;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// NaN or infinite loss; carries the dates of the offending batch.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::vector<Date> batch_dates)
      : std::runtime_error(what), batch_dates_(std::move(batch_dates)) {}
  const std::vector<Date>& batch_dates() const { return batch_dates_; }

 private:
  std::vector<Date> batch_dates_;
};

/// Mean binary cross-entropy with probability clamping at 1e-12.
ad::Tensor loss(ad::Tape& tape, const ad::Tensor& probabilities, std::span<const double> labels);
double loss_value(std::span<const double> probabilities, std::span<const double> labels);

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ad::NamedTensor> params, const TrainConfig& config);

  void zero_grad();
  void step();
  std::size_t steps() const { return step_; }
  /// Rebinds to another model's parameters of identical shapes, keeping moments.
  void rebind(std::vector<ad::NamedTensor> params);

 private:
  std::vector<ad::NamedTensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
  double lr_ = 0.0, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
  double val_acc = 0.0;
  double val_mcc = 0.0;
};

struct TrainState {
  std::size_t epoch = 0;
  double best_validation_f1 = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  model::AtomicModel best_checkpoint;
  std::size_t epochs_since_improvement = 0;
  double last_train_loss = 0.0;
  Adam optimizer;
  Rng rng{0};
};

TrainState make_state(const model::AtomicModel& model, const TrainConfig& config);

/// One pass over the training days in shuffled batches of `batch_size` days.
/// Each step zeroes gradients, averages the per-day losses of the batch,
/// back-propagates and applies Adam.
void train_epoch(TrainState& state, model::AtomicModel& model, std::span<const model::DayInput> train_days,
                 const TrainConfig& config);

struct Metrics {
  eval::ConfusionCounts counts;
  double f1 = 0.0;
  double accuracy = 0.0;
  double mcc = 0.0;
};

std::vector<eval::PredictionRecord> predict(const model::AtomicModel& model, std::span<const model::DayInput> days);
Metrics evaluate(const model::AtomicModel& model, std::span<const model::DayInput> days, double threshold = 0.5,
                 F1Mode mode = F1Mode::positive);

/// The only data fit() sees; there is deliberately no test field.
struct TrainingData {
  std::span<const model::DayInput> train;
  std::span<const model::DayInput> validation;
};

struct FitResult {
  model::AtomicModel model;  // best validation-F1 checkpoint
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_validation_f1 = 0.0;
  bool stopped_early = false;
};

FitResult fit(const model::AtomicModel& initial, const TrainingData& data, const TrainConfig& config,
              const std::function<void(const EpochRecord&)>& on_epoch = {});

/// `epoch,train_loss,val_f1,val_acc,val_mcc`
std::string history_csv(std::span<const EpochRecord> history);

}  // namespace atomic_sm::train
