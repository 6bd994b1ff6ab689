#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "atomic_sm/autodiff.hpp"
#include "atomic_sm/date.hpp"

namespace atomic_sm::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Consecutive trading days further apart than the configured calendar tolerance.
class GapError : public DataError {
 public:
  using DataError::DataError;
};

class SplitError : public DataError {
 public:
  using DataError::DataError;
};

struct MarketDay {
  Date date;
  std::string symbol;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double adj_close = 0.0;
  double sentiment = 0.0;  // [0, 1]
  double activity = 0.0;   // >= 0

  bool operator==(const MarketDay&) const = default;
};

struct PriceRow {
  Date date;
  std::string symbol;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double adj_close = 0.0;
};

struct SentimentRow {
  Date date;
  std::string symbol;
  double sentiment = 0.0;
  double activity = 0.0;
};

/// Counters collected while ingesting and windowing; written as a key-value file.
struct IngestionReport {
  std::size_t price_rows = 0;
  std::size_t sentiment_rows = 0;
  std::size_t merged_days = 0;
  std::size_t ohlc_order_flags = 0;  // low > high or low > adj_close, retained
  std::size_t sentiment_carried_forward = 0;
  std::size_t days_without_prior_sentiment = 0;  // dropped: nothing to carry forward
  std::size_t score_floor_events = 0;
  std::size_t score_cap_events = 0;
  std::size_t windows_built = 0;
  std::size_t windows_skipped_gap = 0;
  std::vector<std::string> notes;

  std::string to_string() const;
  void save(const std::filesystem::path& path) const;
};

using SeriesBySymbol = std::map<std::string, std::vector<MarketDay>>;

std::vector<PriceRow> read_price_csv(const std::filesystem::path& path);
std::vector<SentimentRow> read_sentiment_csv(const std::filesystem::path& path);
void write_price_csv(const std::filesystem::path& path, std::span<const PriceRow> rows);
void write_sentiment_csv(const std::filesystem::path& path, std::span<const SentimentRow> rows);

std::vector<PriceRow> price_rows(const SeriesBySymbol& series);
std::vector<SentimentRow> sentiment_rows(const SeriesBySymbol& series);

/// Joins price and score rows per (symbol, date), sorted by date. A trading day
/// with no score row carries the previous day's scores forward.
SeriesBySymbol merge_series(std::span<const PriceRow> prices, std::span<const SentimentRow> sentiments,
                            IngestionReport* report = nullptr);

struct WindowConfig {
  std::size_t lookback = 5;
  int max_gap_days = 5;  // calendar days allowed between consecutive trading days
  double score_floor = 1e-4;
  double score_cap = 10.0;
};

/// Day-over-day ratios of (adj_close, high, low): rows.size()-1 rows by 3 columns.
ad::Tensor normalize_prices(std::span<const MarketDay> days, int max_gap_days = 5);

struct ScoreRatios {
  std::vector<double> ratios;
  std::size_t floor_events = 0;
  std::size_t cap_events = 0;
};

/// S_i / S_{i-1} with the previous score floored at `floor` and the ratio capped at `cap`.
ScoreRatios normalize_scores(std::span<const double> scores, double floor = 1e-4, double cap = 10.0);

enum class Label { negative = 0, positive = 1 };

struct SampleWindow {
  std::string symbol;
  Date target_date;
  ad::Tensor price_feats;  // T x 3
  ad::Tensor media_feats;  // T x 2
  Label label = Label::negative;
};

/// Positive iff the next trading day's adj_close is strictly greater.
Label label_for(const MarketDay& target, const MarketDay& next);

std::vector<SampleWindow> build_windows(const SeriesBySymbol& series, const WindowConfig& config,
                                        IngestionReport* report = nullptr);

/// All stocks' windows sharing one target date, ordered by symbol.
struct CrossSection {
  Date date;
  std::vector<SampleWindow> windows;
};

std::vector<CrossSection> group_by_date(std::vector<SampleWindow> windows);

struct SplitRatios {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

struct DatasetSplit {
  std::vector<CrossSection> train;
  std::vector<CrossSection> validation;
  std::vector<CrossSection> test;
};

/// Number of dates per subset for `n` distinct dates. Validation and test take
/// floor(n * ratio) (at least one each); the remainder goes to training.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios = {});

DatasetSplit split_dataset(std::vector<CrossSection> sections, const SplitRatios& ratios = {});

}  // namespace atomic_sm::data
