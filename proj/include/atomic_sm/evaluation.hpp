#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "atomic_sm/date.hpp"

namespace atomic_sm::eval {

class EvalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UndefinedSharpeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct PredictionRecord {
  Date date;
  std::string symbol;
  double probability = 0.5;
  int label = 0;
};

/// A probability at or above `threshold` counts as a positive prediction.
ConfusionCounts confusion(std::span<const PredictionRecord> predictions, double threshold = 0.5);

/// Matthews correlation; 0 when any denominator factor is zero.
double mcc(const ConfusionCounts& c);

struct F1Accuracy {
  double f1 = 0.0;
  double accuracy = 0.0;
};

/// Positive-class F1 and accuracy; zero denominators give 0.
F1Accuracy f1_accuracy(const ConfusionCounts& c);
/// Mean of the positive-class and negative-class F1 scores.
double macro_f1(const ConfusionCounts& c);

std::vector<PredictionRecord> read_predictions_csv(const std::filesystem::path& path);
void write_predictions_csv(const std::filesystem::path& path, std::span<const PredictionRecord> predictions);

struct PriceBar {
  double open = 0.0;
  double adj_close = 0.0;
};

/// Per-symbol daily bars, used for entry and exit prices.
class PriceTable {
 public:
  void add(const std::string& symbol, Date date, PriceBar bar);
  const PriceBar* find(const std::string& symbol, Date date) const;
  /// First trading day of `symbol` strictly after `date`.
  std::optional<Date> next_date(const std::string& symbol, Date date) const;
  std::vector<std::string> symbols() const;

 private:
  std::map<std::string, std::map<Date, PriceBar>> bars_;
};

struct StrategyConfig {
  std::size_t top_k = 4;
  double threshold = 0.5;         // only probability > threshold qualifies
  double transaction_cost = 0.0;  // fraction of notional charged per round trip
};

struct Trade {
  Date date;
  std::string symbol;
  double buy_price = 0.0;
  double sell_price = 0.0;
  double simple_return = 0.0;
};

struct BacktestResult {
  std::vector<Date> dates;
  std::vector<double> daily_returns;
  double cumulative_return = 0.0;
  std::optional<double> sharpe;
  std::string sharpe_error;
  std::vector<Trade> trade_log;
  std::vector<std::string> skipped;  // trades dropped for missing prices
};

/// Each prediction date: buy up to k highest-probability qualifiers at that day's
/// adjusted close, sell at the next trading day's open, equal weight. Ties break
/// by symbol. A day with nothing to buy returns 0.
BacktestResult run_strategy(std::span<const PredictionRecord> predictions, const PriceTable& prices,
                            const StrategyConfig& config = {});

/// mean(r - rf) / sample_sd(r) * sqrt(periods_per_year). `risk_free` is annual
/// and converted to a per-period rate by division.
double sharpe(std::span<const double> daily_returns, double periods_per_year = 252.0, double risk_free = 0.0);

double cumulative_return(std::span<const double> daily_returns);

struct PerformanceRow {
  std::string name;
  double cumulative_return = 0.0;
  std::optional<double> sharpe;
  std::string sharpe_error;
};

struct BenchmarkReport {
  PerformanceRow strategy;
  PerformanceRow benchmark;
  std::vector<Date> dates;
  std::vector<double> strategy_cumulative;
  std::vector<double> benchmark_cumulative;

  /// `date,strategy_cum_return,benchmark_cum_return`
  std::string series_csv() const;
  /// Two-row summary table (strategy, benchmark).
  std::string summary() const;
};

/// Benchmark return on each backtest date uses the same holding period as the
/// strategy: that day's adjusted close to the next trading day's open.
BenchmarkReport compare_benchmark(const BacktestResult& result, const std::map<Date, PriceBar>& benchmark,
                                  const std::string& strategy_name = "ATOMIC-SM",
                                  const std::string& benchmark_name = "Benchmark");

}  // namespace atomic_sm::eval
