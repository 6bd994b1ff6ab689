#include "atomic_sm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "atomic_sm/rng.hpp"

namespace atomic_sm::data {

const char* to_string(SignalType type) {
  switch (type) {
    case SignalType::none:
      return "none";
    case SignalType::sentiment_rule:
      return "sentiment_rule";
    case SignalType::neighbor_contagion:
      return "neighbor_contagion";
  }
  return "?";
}

SignalType parse_signal_type(const std::string& text) {
  if (text == "none") return SignalType::none;
  if (text == "sentiment_rule") return SignalType::sentiment_rule;
  if (text == "neighbor_contagion") return SignalType::neighbor_contagion;
  throw std::invalid_argument("unknown signal type '" + text + "'");
}

void SynthConfig::validate() const {
  if (stocks < 2) throw std::invalid_argument("synthetic config: need at least 2 stocks");
  if (days < 10) throw std::invalid_argument("synthetic config: need at least 10 days");
  if (!(probability >= 0.0 && probability <= 1.0)) throw std::invalid_argument("synthetic config: probability in [0,1]");
  if (!(sentiment_threshold > 0.0)) throw std::invalid_argument("synthetic config: sentiment_threshold must be positive");
  for (double v : {volatility, leader_volatility, follower_volatility}) {
    if (!(v > 0.0 && v < 0.2)) throw std::invalid_argument("synthetic config: volatilities must be in (0, 0.2)");
  }
}

SynthConfig SynthConfig::from_kv(const io::KeyValueFile& kv) {
  SynthConfig c;
  c.stocks = static_cast<std::size_t>(kv.get_int("stocks", static_cast<std::int64_t>(c.stocks)));
  c.days = static_cast<std::size_t>(kv.get_int("days", static_cast<std::int64_t>(c.days)));
  if (auto s = kv.get("signal")) c.signal = parse_signal_type(*s);
  c.probability = kv.get_double("probability", c.probability);
  c.sentiment_threshold = kv.get_double("sentiment_threshold", c.sentiment_threshold);
  if (auto s = kv.get("start")) c.start = Date::parse(*s);
  c.volatility = kv.get_double("volatility", c.volatility);
  c.leader_volatility = kv.get_double("leader_volatility", c.leader_volatility);
  c.follower_volatility = kv.get_double("follower_volatility", c.follower_volatility);
  c.validate();
  return c;
}

io::KeyValueFile SynthConfig::to_kv() const {
  io::KeyValueFile kv;
  kv.set("stocks", stocks);
  kv.set("days", days);
  kv.set("signal", to_string(signal));
  kv.set("probability", probability);
  kv.set("sentiment_threshold", sentiment_threshold);
  kv.set("start", start.to_string());
  kv.set("volatility", volatility);
  kv.set("leader_volatility", leader_volatility);
  kv.set("follower_volatility", follower_volatility);
  return kv;
}

namespace {

std::vector<Date> business_days(Date start, std::size_t count) {
  std::vector<Date> out;
  Date d = start;
  while (out.size() < count) {
    if (!d.is_weekend()) out.push_back(d);
    d = d.plus_days(1);
  }
  return out;
}

std::string ticker_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "SYN%02zu", i);
  return buf;
}

std::string entity_name(std::size_t i) { return "Q" + std::to_string(1000 + i); }

}  // namespace

SyntheticMarket generate_synthetic(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  Rng price_rng(seed, "synth.prices");
  Rng score_rng(seed, "synth.scores");
  Rng signal_rng(seed, "synth.signal");
  Rng relation_rng(seed, "synth.relations");

  const std::size_t n = config.stocks;
  const std::size_t days = config.days;
  const auto dates = business_days(config.start, days);
  const bool contagion = config.signal == SignalType::neighbor_contagion;
  auto is_follower = [&](std::size_t i) { return contagion && i % 2 == 1; };
  auto vol_of = [&](std::size_t i) {
    if (!contagion) return config.volatility;
    return is_follower(i) ? config.follower_volatility : config.leader_volatility;
  };

  // Scores are i.i.d. per day, so every ratio is a fresh draw.
  std::vector<std::vector<double>> sentiment(n, std::vector<double>(days));
  std::vector<std::vector<double>> activity(n, std::vector<double>(days));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < days; ++d) {
      sentiment[i][d] = score_rng.uniform(0.2, 0.8);
      activity[i][d] = score_rng.uniform(50.0, 150.0);
    }

  // dir[i][d]: sign of the close-to-close move into day d (d >= 1).
  std::vector<std::vector<int>> dir(n, std::vector<int>(days, 1));
  auto noisy = [&](int planted) { return signal_rng.bernoulli(config.probability) ? planted : -planted; };
  for (std::size_t d = 1; d < days; ++d) {
    for (std::size_t i = 0; i < n; ++i) {
      int planted = signal_rng.bernoulli(0.5) ? 1 : -1;
      switch (config.signal) {
        case SignalType::none:
          dir[i][d] = planted;
          break;
        case SignalType::sentiment_rule:
          if (d >= 2) {
            const double ratio = sentiment[i][d - 1] / sentiment[i][d - 2];
            dir[i][d] = noisy(ratio > config.sentiment_threshold ? 1 : -1);
          } else {
            dir[i][d] = planted;
          }
          break;
        case SignalType::neighbor_contagion:
          dir[i][d] = is_follower(i) && d >= 2 ? noisy(dir[i - 1][d - 1]) : planted;
          break;
      }
    }
  }

  SyntheticMarket market;
  std::vector<double> mean_move(days, 0.0), mean_gap(days, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string symbol = ticker_name(i);
    auto& series = market.series[symbol];
    const double vol = vol_of(i);
    double close = price_rng.uniform(20.0, 200.0);
    for (std::size_t d = 0; d < days; ++d) {
      double open = close;
      if (d > 0) {
        const double move = dir[i][d] * vol * price_rng.uniform(0.3, 1.7);
        const double gap_share = price_rng.uniform(0.2, 0.8);
        open = close * (1.0 + gap_share * move);
        mean_gap[d] += gap_share * move / static_cast<double>(n);
        mean_move[d] += move / static_cast<double>(n);
        close *= 1.0 + move;
      }
      const double high = std::max(open, close) * (1.0 + price_rng.uniform(0.0, 0.5 * vol));
      const double low = std::min(open, close) * (1.0 - price_rng.uniform(0.0, 0.5 * vol));
      series.push_back(MarketDay{dates[d], symbol, open, high, low, close, sentiment[i][d], activity[i][d]});
    }
  }

  // Benchmark: equal-weight index over the same holding convention.
  double level = 100.0;
  for (std::size_t d = 0; d < days; ++d) {
    const double open = d == 0 ? level : level * (1.0 + mean_gap[d]);
    if (d > 0) level *= 1.0 + mean_move[d];
    market.benchmark.push_back(PriceRow{dates[d], "SPY", open, std::max(open, level), std::min(open, level), level});
  }

  std::vector<graph::UniverseEntry> entries;
  for (std::size_t i = 0; i < n; ++i) entries.push_back({ticker_name(i), entity_name(i)});
  market.universe = graph::Universe(entries);

  // Valid from the first snapshot date so every snapshot sees the relations.
  const Date valid_from(config.start.year(), 1, 1);
  if (contagion) {
    for (std::size_t i = 1; i < n; i += 2) {
      market.relations.push_back({entity_name(i), "P127", entity_name(i - 1), valid_from});
    }
  } else {
    // A sparse mix of direct and shared-parent relations, plus one ignored property.
    std::set<std::pair<std::size_t, std::size_t>> used;
    const std::size_t direct = std::max<std::size_t>(1, n / 4);
    const char* props[] = {"P127", "P355", "P836", "P1553", "PContract"};
    while (used.size() < direct) {
      const auto a = static_cast<std::size_t>(relation_rng.below(n));
      const auto b = static_cast<std::size_t>(relation_rng.below(n));
      if (a == b || !used.insert({std::min(a, b), std::max(a, b)}).second) continue;
      market.relations.push_back({entity_name(a), props[relation_rng.below(5)], entity_name(b), valid_from});
    }
    const std::string parent = "Q9000";
    for (std::size_t k = 0; k < std::min<std::size_t>(3, n); ++k) {
      market.relations.push_back({entity_name(relation_rng.below(n)), "P355", parent, valid_from});
    }
    market.relations.push_back({entity_name(0), "P31", entity_name(n - 1), valid_from});  // not whitelisted
  }

  for (int y = dates.front().year(); y <= dates.back().year(); ++y) market.snapshot_dates.push_back(Date(y, 1, 1));

  const double p = std::max(config.probability, 1.0 - config.probability);
  char text[256];
  switch (config.signal) {
    case SignalType::none:
      market.signal = {"labels independent of features", 0.5};
      break;
    case SignalType::sentiment_rule:
      std::snprintf(text, sizeof text, "up move follows sentiment ratio > %g with probability %g",
                    config.sentiment_threshold, config.probability);
      market.signal = {text, p};
      break;
    case SignalType::neighbor_contagion: {
      const double followers = static_cast<double>(n / 2);
      std::snprintf(text, sizeof text, "followers repeat their related leader's latest move with probability %g",
                    config.probability);
      market.signal = {text, (followers * p + (static_cast<double>(n) - followers) * 0.5) / static_cast<double>(n)};
      break;
    }
  }
  return market;
}

bool sentiment_rule_predicts_up(const SampleWindow& window, double threshold) {
  const std::size_t last = window.media_feats.dim(0) - 1;
  return window.media_feats.at(last, 0) > threshold;
}

}  // namespace atomic_sm::data
