#include "atomic_sm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "atomic_sm/text_io.hpp"

namespace atomic_sm::eval {

ConfusionCounts confusion(std::span<const PredictionRecord> predictions, double threshold) {
  if (predictions.empty()) throw EvalError("confusion: no predictions");
  ConfusionCounts c;
  for (const auto& p : predictions) {
    const bool predicted = p.probability >= threshold;
    const bool actual = p.label == 1;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double mcc(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

F1Accuracy f1_accuracy(const ConfusionCounts& c) {
  F1Accuracy out;
  const double f1_denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp + c.fn);
  out.f1 = f1_denom > 0.0 ? 2.0 * static_cast<double>(c.tp) / f1_denom : 0.0;
  out.accuracy = c.total() > 0 ? static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()) : 0.0;
  return out;
}

double macro_f1(const ConfusionCounts& c) {
  const ConfusionCounts flipped{c.tn, c.tp, c.fn, c.fp};
  return 0.5 * (f1_accuracy(c).f1 + f1_accuracy(flipped).f1);
}

std::vector<PredictionRecord> read_predictions_csv(const std::filesystem::path& path) {
  const auto table = io::read_csv(path, {"date", "symbol", "probability", "label"});
  std::vector<PredictionRecord> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    const std::string at = path.string() + ":" + std::to_string(table.line_numbers[r]);
    PredictionRecord p;
    try {
      p.date = Date::parse(f[0]);
    } catch (const std::invalid_argument& e) {
      throw io::FormatError(at + ": " + e.what());
    }
    p.symbol = f[1];
    p.probability = io::parse_double(f[2], at + " probability");
    const auto label = io::parse_int(f[3], at + " label");
    if (label != 0 && label != 1) throw io::FormatError(at + ": label must be 0 or 1");
    p.label = static_cast<int>(label);
    out.push_back(std::move(p));
  }
  return out;
}

void write_predictions_csv(const std::filesystem::path& path, std::span<const PredictionRecord> predictions) {
  std::string out = "date,symbol,probability,label\n";
  for (const auto& p : predictions) {
    out += p.date.to_string() + "," + p.symbol + "," + io::format_double(p.probability) + "," +
           std::to_string(p.label) + "\n";
  }
  io::write_text_file(path, out);
}

// ---- PriceTable ------------------------------------------------------------------

void PriceTable::add(const std::string& symbol, Date date, PriceBar bar) { bars_[symbol][date] = bar; }

const PriceBar* PriceTable::find(const std::string& symbol, Date date) const {
  const auto s = bars_.find(symbol);
  if (s == bars_.end()) return nullptr;
  const auto d = s->second.find(date);
  return d == s->second.end() ? nullptr : &d->second;
}

std::optional<Date> PriceTable::next_date(const std::string& symbol, Date date) const {
  const auto s = bars_.find(symbol);
  if (s == bars_.end()) return std::nullopt;
  const auto d = s->second.upper_bound(date);
  if (d == s->second.end()) return std::nullopt;
  return d->first;
}

std::vector<std::string> PriceTable::symbols() const {
  std::vector<std::string> out;
  for (const auto& [s, bars] : bars_) out.push_back(s);
  return out;
}

// ---- strategy --------------------------------------------------------------------

double cumulative_return(std::span<const double> daily_returns) {
  double growth = 1.0;
  for (double r : daily_returns) growth *= 1.0 + r;
  return growth - 1.0;
}

BacktestResult run_strategy(std::span<const PredictionRecord> predictions, const PriceTable& prices,
                            const StrategyConfig& config) {
  std::map<Date, std::vector<const PredictionRecord*>> by_date;
  for (const auto& p : predictions) by_date[p.date].push_back(&p);

  BacktestResult result;
  for (auto& [date, day] : by_date) {
    std::vector<const PredictionRecord*> qualifiers;
    for (const auto* p : day)
      if (p->probability > config.threshold) qualifiers.push_back(p);
    std::sort(qualifiers.begin(), qualifiers.end(), [](const PredictionRecord* a, const PredictionRecord* b) {
      if (a->probability != b->probability) return a->probability > b->probability;
      return a->symbol < b->symbol;
    });
    if (qualifiers.size() > config.top_k) qualifiers.resize(config.top_k);

    std::vector<double> trade_returns;
    for (const auto* p : qualifiers) {
      const PriceBar* entry = prices.find(p->symbol, date);
      const auto exit_date = prices.next_date(p->symbol, date);
      const PriceBar* exit = exit_date ? prices.find(p->symbol, *exit_date) : nullptr;
      if (!entry || !exit) {
        result.skipped.push_back(date.to_string() + " " + p->symbol + ": missing " +
                                 (entry ? "next-day open" : "entry close"));
        continue;
      }
      const double r = exit->open / entry->adj_close - 1.0 - config.transaction_cost;
      trade_returns.push_back(r);
      result.trade_log.push_back(Trade{date, p->symbol, entry->adj_close, exit->open, r});
    }
    double daily = 0.0;
    for (double r : trade_returns) daily += r;
    if (!trade_returns.empty()) daily /= static_cast<double>(trade_returns.size());
    result.dates.push_back(date);
    result.daily_returns.push_back(daily);
  }
  result.cumulative_return = cumulative_return(result.daily_returns);
  try {
    result.sharpe = sharpe(result.daily_returns);
  } catch (const UndefinedSharpeError& e) {
    result.sharpe_error = e.what();
  }
  return result;
}

double sharpe(std::span<const double> daily_returns, double periods_per_year, double risk_free) {
  const std::size_t n = daily_returns.size();
  if (n < 2) throw UndefinedSharpeError("Sharpe ratio needs at least two returns");
  const double rf = risk_free / periods_per_year;
  double mean = 0.0;
  for (double r : daily_returns) mean += r - rf;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double r : daily_returns) {
    const double d = (r - rf) - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw UndefinedSharpeError("Sharpe ratio undefined: zero return variance");
  return mean / sd * std::sqrt(periods_per_year);
}

// ---- benchmark ---------------------------------------------------------------------

namespace {

PerformanceRow make_row(const std::string& name, std::span<const double> returns) {
  PerformanceRow row;
  row.name = name;
  row.cumulative_return = cumulative_return(returns);
  try {
    row.sharpe = sharpe(returns);
  } catch (const UndefinedSharpeError& e) {
    row.sharpe_error = e.what();
  }
  return row;
}

std::vector<double> running_cumulative(std::span<const double> returns) {
  std::vector<double> out;
  double growth = 1.0;
  for (double r : returns) {
    growth *= 1.0 + r;
    out.push_back(growth - 1.0);
  }
  return out;
}

}  // namespace

BenchmarkReport compare_benchmark(const BacktestResult& result, const std::map<Date, PriceBar>& benchmark,
                                  const std::string& strategy_name, const std::string& benchmark_name) {
  std::vector<double> bench_returns;
  for (const auto& date : result.dates) {
    const auto entry = benchmark.find(date);
    const auto exit = entry == benchmark.end() ? benchmark.end() : std::next(entry);
    if (entry == benchmark.end() || exit == benchmark.end()) {
      throw EvalError("benchmark series does not cover " + date.to_string() + " and the following trading day");
    }
    bench_returns.push_back(exit->second.open / entry->second.adj_close - 1.0);
  }
  BenchmarkReport report;
  report.strategy = make_row(strategy_name, result.daily_returns);
  report.benchmark = make_row(benchmark_name, bench_returns);
  report.dates = result.dates;
  report.strategy_cumulative = running_cumulative(result.daily_returns);
  report.benchmark_cumulative = running_cumulative(bench_returns);
  return report;
}

std::string BenchmarkReport::series_csv() const {
  std::string out = "date,strategy_cum_return,benchmark_cum_return\n";
  for (std::size_t i = 0; i < dates.size(); ++i) {
    out += dates[i].to_string() + "," + io::format_double(strategy_cumulative[i]) + "," +
           io::format_double(benchmark_cumulative[i]) + "\n";
  }
  return out;
}

std::string BenchmarkReport::summary() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %20s %14s\n", "", "Cumulative Returns", "Sharpe Ratio");
  out += line;
  for (const auto* row : {&strategy, &benchmark}) {
    char sharpe_text[32];
    if (row->sharpe) std::snprintf(sharpe_text, sizeof sharpe_text, "%.2f", *row->sharpe);
    else std::snprintf(sharpe_text, sizeof sharpe_text, "undefined");
    std::snprintf(line, sizeof line, "%-24s %19.2f%% %14s\n", row->name.c_str(), 100.0 * row->cumulative_return,
                  sharpe_text);
    out += line;
  }
  for (const auto* row : {&strategy, &benchmark}) {
    if (!row->sharpe_error.empty()) out += "# " + row->name + ": " + row->sharpe_error + "\n";
  }
  return out;
}

}  // namespace atomic_sm::eval
