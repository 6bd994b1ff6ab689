#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "atomic_sm/date.hpp"
#include "atomic_sm/market_data.hpp"
#include "atomic_sm/relation_graph.hpp"
#include "atomic_sm/text_io.hpp"

namespace atomic_sm::data {

enum class SignalType {
  none,                // labels independent of every feature
  sentiment_rule,      // sentiment ratio > threshold predicts an up move with probability p
  neighbor_contagion,  // a follower repeats its related leader's latest move with probability p
};

const char* to_string(SignalType type);
SignalType parse_signal_type(const std::string& text);

struct SynthConfig {
  std::size_t stocks = 20;
  std::size_t days = 300;
  SignalType signal = SignalType::sentiment_rule;
  double probability = 0.8;
  double sentiment_threshold = 1.0;
  Date start{2019, 1, 2};
  double volatility = 0.015;           // typical absolute daily return
  double leader_volatility = 0.02;     // neighbor_contagion leaders
  double follower_volatility = 0.004;  // neighbor_contagion followers

  /// Throws std::invalid_argument for out-of-range fields.
  void validate() const;
  static SynthConfig from_kv(const io::KeyValueFile& kv);
  io::KeyValueFile to_kv() const;
};

struct PlantedSignal {
  std::string description;
  double bayes_accuracy = 0.5;
};

struct SyntheticMarket {
  SeriesBySymbol series;
  graph::Universe universe;
  std::vector<graph::RelationRecord> relations;
  std::vector<PriceRow> benchmark;  // equal-weight index, symbol "SPY"
  std::vector<Date> snapshot_dates; // January 1 of every covered year
  PlantedSignal signal;
};

/// Business-day price, score and relation data with a planted, analytically
/// known signal. Identical (config, seed) give identical output.
SyntheticMarket generate_synthetic(const SynthConfig& config, std::uint64_t seed);

/// Prediction of the planted sentiment rule for one window (last-day sentiment ratio).
bool sentiment_rule_predicts_up(const SampleWindow& window, double threshold);

}  // namespace atomic_sm::data
