#include "atomic_sm/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "atomic_sm/text_io.hpp"

namespace atomic_sm::data {

namespace {

const std::vector<std::string> kPriceHeader = {"date", "symbol", "open", "high", "low", "adj_close"};
const std::vector<std::string> kSentimentHeader = {"date", "symbol", "sentiment", "activity"};

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

Date parse_date_field(const std::string& text, const std::filesystem::path& path, std::size_t line) {
  try {
    return Date::parse(text);
  } catch (const std::invalid_argument& e) {
    throw io::FormatError(where(path, line) + ": " + e.what());
  }
}

}  // namespace

std::string IngestionReport::to_string() const {
  io::KeyValueFile kv;
  kv.set("price_rows", price_rows);
  kv.set("sentiment_rows", sentiment_rows);
  kv.set("merged_days", merged_days);
  kv.set("ohlc_order_flags", ohlc_order_flags);
  kv.set("sentiment_carried_forward", sentiment_carried_forward);
  kv.set("days_without_prior_sentiment", days_without_prior_sentiment);
  kv.set("score_floor_events", score_floor_events);
  kv.set("score_cap_events", score_cap_events);
  kv.set("windows_built", windows_built);
  kv.set("windows_skipped_gap", windows_skipped_gap);
  std::string out = "# ingestion report\n" + kv.to_string();
  for (const auto& note : notes) out += "# " + note + "\n";
  return out;
}

void IngestionReport::save(const std::filesystem::path& path) const { io::write_text_file(path, to_string()); }

// ---- CSV ------------------------------------------------------------------------

std::vector<PriceRow> read_price_csv(const std::filesystem::path& path) {
  const auto table = io::read_csv(path, kPriceHeader);
  std::vector<PriceRow> rows;
  rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    const auto at = where(path, table.line_numbers[r]);
    PriceRow row;
    row.date = parse_date_field(f[0], path, table.line_numbers[r]);
    row.symbol = f[1];
    if (row.symbol.empty()) throw io::FormatError(at + ": empty symbol");
    row.open = io::parse_double(f[2], at + " open");
    row.high = io::parse_double(f[3], at + " high");
    row.low = io::parse_double(f[4], at + " low");
    row.adj_close = io::parse_double(f[5], at + " adj_close");
    for (double v : {row.open, row.high, row.low, row.adj_close}) {
      if (!(v > 0.0) || !std::isfinite(v)) throw DataError(at + ": prices must be positive and finite");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SentimentRow> read_sentiment_csv(const std::filesystem::path& path) {
  const auto table = io::read_csv(path, kSentimentHeader);
  std::vector<SentimentRow> rows;
  rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    const auto at = where(path, table.line_numbers[r]);
    SentimentRow row;
    row.date = parse_date_field(f[0], path, table.line_numbers[r]);
    row.symbol = f[1];
    row.sentiment = io::parse_double(f[2], at + " sentiment");
    row.activity = io::parse_double(f[3], at + " activity");
    if (!(row.sentiment >= 0.0 && row.sentiment <= 1.0)) throw DataError(at + ": sentiment outside [0, 1]");
    if (!(row.activity >= 0.0) || !std::isfinite(row.activity)) throw DataError(at + ": negative activity");
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_price_csv(const std::filesystem::path& path, std::span<const PriceRow> rows) {
  std::string out = "date,symbol,open,high,low,adj_close\n";
  for (const auto& r : rows) {
    out += r.date.to_string() + "," + r.symbol + "," + io::format_double(r.open) + "," + io::format_double(r.high) +
           "," + io::format_double(r.low) + "," + io::format_double(r.adj_close) + "\n";
  }
  io::write_text_file(path, out);
}

void write_sentiment_csv(const std::filesystem::path& path, std::span<const SentimentRow> rows) {
  std::string out = "date,symbol,sentiment,activity\n";
  for (const auto& r : rows) {
    out += r.date.to_string() + "," + r.symbol + "," + io::format_double(r.sentiment) + "," +
           io::format_double(r.activity) + "\n";
  }
  io::write_text_file(path, out);
}

std::vector<PriceRow> price_rows(const SeriesBySymbol& series) {
  std::vector<PriceRow> rows;
  for (const auto& [symbol, days] : series)
    for (const auto& d : days) rows.push_back({d.date, symbol, d.open, d.high, d.low, d.adj_close});
  std::stable_sort(rows.begin(), rows.end(), [](const PriceRow& a, const PriceRow& b) { return a.date < b.date; });
  return rows;
}

std::vector<SentimentRow> sentiment_rows(const SeriesBySymbol& series) {
  std::vector<SentimentRow> rows;
  for (const auto& [symbol, days] : series)
    for (const auto& d : days) rows.push_back({d.date, symbol, d.sentiment, d.activity});
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SentimentRow& a, const SentimentRow& b) { return a.date < b.date; });
  return rows;
}

// ---- merge ----------------------------------------------------------------------

SeriesBySymbol merge_series(std::span<const PriceRow> prices, std::span<const SentimentRow> sentiments,
                            IngestionReport* report) {
  IngestionReport local;
  IngestionReport& rep = report ? *report : local;
  rep.price_rows += prices.size();
  rep.sentiment_rows += sentiments.size();

  std::map<std::string, std::map<Date, const SentimentRow*>> scores;
  for (const auto& s : sentiments) scores[s.symbol][s.date] = &s;

  std::map<std::string, std::map<Date, const PriceRow*>> by_symbol;
  for (const auto& p : prices) {
    auto& slot = by_symbol[p.symbol][p.date];
    if (slot) throw DataError("duplicate price row for " + p.symbol + " on " + p.date.to_string());
    slot = &p;
  }

  SeriesBySymbol series;
  for (const auto& [symbol, days] : by_symbol) {
    const auto sit = scores.find(symbol);
    const SentimentRow* last = nullptr;
    auto& out = series[symbol];
    for (const auto& [date, p] : days) {
      const SentimentRow* s = nullptr;
      if (sit != scores.end()) {
        const auto hit = sit->second.find(date);
        if (hit != sit->second.end()) s = hit->second;
      }
      if (!s) {
        if (!last) {
          ++rep.days_without_prior_sentiment;
          continue;
        }
        ++rep.sentiment_carried_forward;
        s = last;
      }
      last = s;
      if (p->low > p->high || p->low > p->adj_close) ++rep.ohlc_order_flags;
      out.push_back(MarketDay{date, symbol, p->open, p->high, p->low, p->adj_close, s->sentiment, s->activity});
    }
    rep.merged_days += out.size();
    if (out.empty()) series.erase(symbol);
  }
  if (rep.sentiment_carried_forward > 0) {
    rep.notes.push_back("sentiment carried forward on " + std::to_string(rep.sentiment_carried_forward) + " days");
  }
  return series;
}

// ---- normalization -----------------------------------------------------------------

ad::Tensor normalize_prices(std::span<const MarketDay> days, int max_gap_days) {
  if (days.size() < 2) throw DataError("normalize_prices: need at least two days");
  for (const auto& d : days) {
    if (!(d.adj_close > 0.0 && d.high > 0.0 && d.low > 0.0)) {
      throw DataError("nonpositive price for " + d.symbol + " on " + d.date.to_string());
    }
  }
  std::vector<double> out;
  out.reserve((days.size() - 1) * 3);
  for (std::size_t t = 1; t < days.size(); ++t) {
    const auto gap = days[t].date.days_since(days[t - 1].date);
    if (gap <= 0 || gap > max_gap_days) {
      throw GapError("gap of " + std::to_string(gap) + " days for " + days[t].symbol + " before " +
                     days[t].date.to_string());
    }
    out.push_back(days[t].adj_close / days[t - 1].adj_close);
    out.push_back(days[t].high / days[t - 1].high);
    out.push_back(days[t].low / days[t - 1].low);
  }
  return ad::Tensor::matrix(days.size() - 1, 3, std::move(out));
}

ScoreRatios normalize_scores(std::span<const double> scores, double floor, double cap) {
  ScoreRatios result;
  if (scores.size() < 2) return result;
  result.ratios.reserve(scores.size() - 1);
  for (std::size_t i = 1; i < scores.size(); ++i) {
    double prev = scores[i - 1];
    if (prev < floor) {
      prev = floor;
      ++result.floor_events;
    }
    double ratio = scores[i] / prev;
    if (ratio > cap) {
      ratio = cap;
      ++result.cap_events;
    }
    result.ratios.push_back(ratio);
  }
  return result;
}

// ---- windows -----------------------------------------------------------------------

Label label_for(const MarketDay& target, const MarketDay& next) {
  return next.adj_close > target.adj_close ? Label::positive : Label::negative;
}

std::vector<SampleWindow> build_windows(const SeriesBySymbol& series, const WindowConfig& config,
                                        IngestionReport* report) {
  if (config.lookback == 0) throw DataError("lookback must be positive");
  IngestionReport local;
  IngestionReport& rep = report ? *report : local;
  const std::size_t T = config.lookback;

  std::vector<SampleWindow> windows;
  for (const auto& [symbol, days] : series) {
    if (days.size() < T + 2) {
      if (!days.empty()) rep.notes.push_back(symbol + ": insufficient history for any window");
      continue;
    }
    std::vector<double> sentiment, activity;
    for (const auto& d : days) {
      sentiment.push_back(d.sentiment);
      activity.push_back(d.activity);
    }
    const auto s_ratio = normalize_scores(sentiment, config.score_floor, config.score_cap);
    const auto a_ratio = normalize_scores(activity, config.score_floor, config.score_cap);
    rep.score_floor_events += s_ratio.floor_events + a_ratio.floor_events;
    rep.score_cap_events += s_ratio.cap_events + a_ratio.cap_events;

    // Target index t uses days t-T..t for features and day t+1 for the label only.
    for (std::size_t t = T; t + 1 < days.size(); ++t) {
      const auto next_gap = days[t + 1].date.days_since(days[t].date);
      ad::Tensor price;
      try {
        if (next_gap <= 0 || next_gap > config.max_gap_days) throw GapError("label day gap");
        price = normalize_prices(std::span(days).subspan(t - T, T + 1), config.max_gap_days);
      } catch (const GapError&) {
        ++rep.windows_skipped_gap;
        continue;
      }
      std::vector<double> media;
      media.reserve(T * 2);
      // ratio index r corresponds to day r+1
      for (std::size_t d = t - T + 1; d <= t; ++d) {
        media.push_back(s_ratio.ratios[d - 1]);
        media.push_back(a_ratio.ratios[d - 1]);
      }
      windows.push_back(SampleWindow{symbol, days[t].date, std::move(price), ad::Tensor::matrix(T, 2, std::move(media)),
                                     label_for(days[t], days[t + 1])});
      ++rep.windows_built;
    }
  }
  return windows;
}

std::vector<CrossSection> group_by_date(std::vector<SampleWindow> windows) {
  std::map<Date, std::vector<SampleWindow>> grouped;
  for (auto& w : windows) grouped[w.target_date].push_back(std::move(w));
  std::vector<CrossSection> sections;
  sections.reserve(grouped.size());
  for (auto& [date, ws] : grouped) {
    std::sort(ws.begin(), ws.end(), [](const SampleWindow& a, const SampleWindow& b) { return a.symbol < b.symbol; });
    sections.push_back(CrossSection{date, std::move(ws)});
  }
  return sections;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
  if (n < 3) throw SplitError("split needs at least 3 distinct dates, got " + std::to_string(n));
  if (ratios.train <= 0.0 || ratios.validation <= 0.0 || ratios.test <= 0.0) {
    throw SplitError("split ratios must be positive");
  }
  const double total = ratios.train + ratios.validation + ratios.test;
  auto portion = [&](double r) {
    const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r / total + 1e-9));
    return std::max<std::size_t>(k, 1);
  };
  const std::size_t val = portion(ratios.validation);
  const std::size_t test = portion(ratios.test);
  if (val + test >= n) throw SplitError("split leaves no training dates");
  return {n - val - test, val, test};
}

DatasetSplit split_dataset(std::vector<CrossSection> sections, const SplitRatios& ratios) {
  std::sort(sections.begin(), sections.end(), [](const CrossSection& a, const CrossSection& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < sections.size(); ++i) {
    if (sections[i].date == sections[i - 1].date) throw SplitError("duplicate cross-section date");
  }
  const auto [n_train, n_val, n_test] = split_sizes(sections.size(), ratios);
  DatasetSplit split;
  auto it = std::make_move_iterator(sections.begin());
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  split.validation.assign(it + static_cast<std::ptrdiff_t>(n_train), it + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(it + static_cast<std::ptrdiff_t>(n_train + n_val), std::make_move_iterator(sections.end()));
  (void)n_test;
  return split;
}

}  // namespace atomic_sm::data
