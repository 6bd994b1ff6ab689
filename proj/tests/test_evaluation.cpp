#include <doctest.h>

#include <cmath>

#include "atomic_sm/evaluation.hpp"
#include "atomic_sm/rng.hpp"
#include "atomic_sm/synthetic.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace atomic_sm;
using namespace atomic_sm::eval;

namespace {

const Date d1(2021, 3, 1), d2(2021, 3, 2), d3(2021, 3, 3), d4(2021, 3, 4);

PredictionRecord rec(Date d, const std::string& s, double p, int y = 0) { return {d, s, p, y}; }

}  // namespace

// ---- metrics ------------------------------------------------------------------------

TEST_CASE("confusion counts and the threshold boundary") {
  const std::vector<PredictionRecord> preds = {rec(d1, "A", 0.9, 1), rec(d1, "B", 0.5, 0), rec(d1, "C", 0.49, 1),
                                               rec(d1, "D", 0.1, 0)};
  const auto c = confusion(preds);
  CHECK(c == ConfusionCounts{1, 1, 1, 1});
  CHECK_THROWS_AS(confusion({}), EvalError);

  std::vector<PredictionRecord> all_pos;
  for (int i = 0; i < 7; ++i) all_pos.push_back(rec(d1, "S" + std::to_string(i), 0.8, 1));
  CHECK(confusion(all_pos) == ConfusionCounts{7, 0, 0, 0});
}

TEST_CASE("confusion matches a manual tally on random records") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PredictionRecord> preds;
    for (int i = 0; i < 10; ++i) preds.push_back(rec(d1, "S", rng.uniform(), rng.bernoulli(0.5)));
    ConfusionCounts want;
    for (const auto& p : preds) {
      const bool yes = p.probability >= 0.5;
      if (yes && p.label) ++want.tp;
      if (yes && !p.label) ++want.fp;
      if (!yes && p.label) ++want.fn;
      if (!yes && !p.label) ++want.tn;
    }
    CHECK(confusion(preds) == want);
  }
}

TEST_CASE("MCC, F1 and accuracy fixtures") {
  CHECK(mcc({10, 10, 0, 0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mcc({0, 0, 10, 10}) == doctest::Approx(-1.0).epsilon(1e-12));
  const ConfusionCounts mixed{6, 5, 4, 5};
  CHECK(std::abs(mcc(mixed) - 10.0 / std::sqrt(10.0 * 11.0 * 9.0 * 10.0)) <= 1e-12);
  CHECK(std::abs(mcc(mixed) - 0.10050) <= 1e-5);

  const auto perfect = f1_accuracy({10, 10, 0, 0});
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.accuracy == 1.0);
  CHECK(f1_accuracy({0, 3, 2, 2}).f1 == 0.0);
  const auto m = f1_accuracy(mixed);
  CHECK(std::abs(m.f1 - 12.0 / 21.0) <= 1e-12);
  CHECK(std::abs(m.accuracy - 0.55) <= 1e-12);
  CHECK(f1_accuracy({}).accuracy == 0.0);
}

TEST_CASE("MCC is zero when a denominator factor vanishes") {
  CHECK(mcc({5, 0, 5, 0}) == 0.0);
  CHECK(mcc({0, 5, 0, 5}) == 0.0);
  CHECK(mcc({}) == 0.0);
}

TEST_CASE("macro F1 averages both classes") {
  const ConfusionCounts c{6, 5, 4, 5};
  const double neg_f1 = 2.0 * 5 / (2.0 * 5 + 5 + 4);
  CHECK(std::abs(macro_f1(c) - (12.0 / 21.0 + neg_f1) / 2.0) <= 1e-12);
}

TEST_CASE("MCC symmetry and range over random counts") {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const ConfusionCounts c{rng.below(50), rng.below(50), rng.below(50), rng.below(50)};
    const double m = mcc(c);
    CHECK(m >= -1.0 - 1e-12);
    CHECK(m <= 1.0 + 1e-12);
    CHECK(std::abs(mcc({c.tn, c.tp, c.fn, c.fp}) - m) <= 1e-12);
    CHECK(std::abs(mcc({c.fp, c.fn, c.tp, c.tn}) + m) <= 1e-12);
  }
}

TEST_CASE("predictions CSV round trip") {
  test_support::TempDir dir("preds");
  Rng rng(3);
  std::vector<PredictionRecord> preds;
  for (int i = 0; i < 30; ++i) preds.push_back(rec(d1.plus_days(i), "S" + std::to_string(i % 4), rng.uniform(), i % 2));
  write_predictions_csv(dir / "p.csv", preds);
  const auto back = read_predictions_csv(dir / "p.csv");
  REQUIRE(back.size() == preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CHECK(back[i].date == preds[i].date);
    CHECK(back[i].symbol == preds[i].symbol);
    CHECK(back[i].probability == preds[i].probability);
    CHECK(back[i].label == preds[i].label);
  }
}

// ---- strategy -------------------------------------------------------------------------

TEST_CASE("fewer qualifiers than k: equal weight over those that qualify") {
  PriceTable t;
  for (const char* s : {"A", "B", "C"}) {
    t.add(s, d1, {10, 10});
  }
  t.add("A", d2, {11, 0});
  t.add("B", d2, {9, 0});
  t.add("C", d2, {20, 0});
  const std::vector<PredictionRecord> preds = {rec(d1, "A", 0.7), rec(d1, "B", 0.6), rec(d1, "C", 0.4)};
  const auto r = run_strategy(preds, t);
  REQUIRE(r.daily_returns.size() == 1);
  CHECK(r.trade_log.size() == 2);
  CHECK(std::abs(r.daily_returns[0] - (0.1 + -0.1) / 2) <= 1e-15);
}

TEST_CASE("no qualifier means a cash day") {
  PriceTable t;
  t.add("A", d1, {10, 10});
  t.add("A", d2, {12, 12});
  const std::vector<PredictionRecord> preds = {rec(d1, "A", 0.5), rec(d2, "A", 0.2)};
  const auto r = run_strategy(preds, t);
  CHECK(r.daily_returns == std::vector<double>{0.0, 0.0});
  CHECK(r.trade_log.empty());
}

TEST_CASE("three-date hand fixture") {
  // Closes on the prediction date, opens on the following date.
  PriceTable t;
  auto bar = [&](const char* s, Date d, double open, double close) { t.add(s, d, {open, close}); };
  bar("AAA", d1, 0, 100);
  bar("BBB", d1, 0, 50);
  bar("CCC", d1, 0, 20);
  bar("AAA", d2, 102, 104);
  bar("BBB", d2, 49, 48);
  bar("CCC", d2, 21, 22);
  bar("AAA", d3, 103, 100);
  bar("BBB", d3, 50, 51);
  bar("CCC", d3, 22, 23);
  bar("AAA", d4, 99, 0);
  bar("BBB", d4, 52, 0);
  bar("CCC", d4, 23, 0);
  StrategyConfig two;
  two.top_k = 2;
  const std::vector<PredictionRecord> preds = {
      rec(d1, "AAA", 0.9), rec(d1, "BBB", 0.8), rec(d1, "CCC", 0.7),   // buy AAA, BBB
      rec(d2, "AAA", 0.6), rec(d2, "BBB", 0.6), rec(d2, "CCC", 0.6),   // tie: AAA, BBB by symbol
      rec(d3, "AAA", 0.3), rec(d3, "BBB", 0.55), rec(d3, "CCC", 0.4),  // BBB only
  };
  const auto r = run_strategy(preds, t, two);
  // Day 1: AAA 100 -> 102 (+2%), BBB 50 -> 49 (-2%)  => 0
  // Day 2: AAA 104 -> 103, BBB 48 -> 50
  // Day 3: BBB 51 -> 52
  const double day2 = ((103.0 / 104.0 - 1.0) + (50.0 / 48.0 - 1.0)) / 2.0;
  const double day3 = 52.0 / 51.0 - 1.0;
  REQUIRE(r.daily_returns.size() == 3);
  CHECK(std::abs(r.daily_returns[0] - 0.0) <= 1e-15);
  CHECK(std::abs(r.daily_returns[1] - day2) <= 1e-15);
  CHECK(std::abs(r.daily_returns[2] - day3) <= 1e-15);
  CHECK(std::abs(r.cumulative_return - ((1 + day2) * (1 + day3) - 1)) <= 1e-15);
  CHECK(r.trade_log.size() == 5);
  CHECK(r.trade_log[2].symbol == "AAA");
  CHECK(r.trade_log[3].symbol == "BBB");
}

TEST_CASE("missing exit price skips the trade and logs it") {
  PriceTable t;
  t.add("A", d1, {10, 10});
  t.add("B", d1, {10, 10});
  t.add("A", d2, {11, 11});
  const std::vector<PredictionRecord> preds = {rec(d1, "A", 0.9), rec(d1, "B", 0.95)};
  const auto r = run_strategy(preds, t);
  CHECK(r.skipped.size() == 1);
  CHECK(r.trade_log.size() == 1);
  CHECK(std::abs(r.daily_returns[0] - 0.1) <= 1e-15);
}

TEST_CASE("transaction cost hook") {
  PriceTable t;
  t.add("A", d1, {10, 10});
  t.add("A", d2, {11, 11});
  StrategyConfig c;
  c.transaction_cost = 0.01;
  const std::vector<PredictionRecord> preds = {rec(d1, "A", 0.9)};
  CHECK(std::abs(run_strategy(preds, t, c).daily_returns[0] - 0.09) <= 1e-15);
}

TEST_CASE("cumulative return recomposes the daily returns") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(1 + rng.below(300));
    for (double& x : r) x = rng.uniform(-0.05, 0.05);
    double growth = 1.0;
    for (double x : r) growth *= 1.0 + x;
    CHECK(std::abs(cumulative_return(r) - (growth - 1.0)) <= 1e-12);
  }
}

TEST_CASE("oracle predictions reach the brute-force best portfolio on every date") {
  data::SynthConfig sc;
  sc.stocks = 8;
  sc.days = 60;
  const auto market = data::generate_synthetic(sc, 11);
  PriceTable t;
  for (const auto& [sym, days] : market.series)
    for (const auto& d : days) t.add(sym, d.date, {d.open, d.adj_close});
  std::vector<PredictionRecord> preds;
  std::map<Date, std::vector<double>> realized;
  for (const auto& [sym, days] : market.series)
    for (std::size_t i = 0; i + 1 < days.size(); ++i) {
      const double r = days[i + 1].open / days[i].adj_close - 1.0;
      preds.push_back(rec(days[i].date, sym, 0.5 + 0.5 * std::tanh(100.0 * r), r > 0));
      realized[days[i].date].push_back(r);
    }
  const auto result = run_strategy(preds, t);
  REQUIRE(result.dates.size() == realized.size());
  for (std::size_t i = 0; i < result.dates.size(); ++i) {
    CHECK(std::abs(result.daily_returns[i] - oracle::best_portfolio_return(realized[result.dates[i]], 4)) <= 1e-12);
  }
}

// ---- Sharpe and benchmark -------------------------------------------------------------

TEST_CASE("Sharpe examples") {
  CHECK(sharpe(std::vector<double>{0.01, -0.01, 0.02, -0.02}) == 0.0);
  CHECK_THROWS_AS(sharpe(std::vector<double>{0.01, 0.01}), UndefinedSharpeError);
  CHECK_THROWS_AS(sharpe(std::vector<double>{0.01}), UndefinedSharpeError);
  const std::vector<double> r = {0.01, -0.005, 0.02};
  const double mean = 0.025 / 3.0;
  const double sd = std::sqrt(((0.01 - mean) * (0.01 - mean) + (-0.005 - mean) * (-0.005 - mean) +
                               (0.02 - mean) * (0.02 - mean)) / 2.0);
  CHECK(std::abs(sd - 0.012583) <= 1e-6);
  CHECK(std::abs(sharpe(r) - mean / sd * std::sqrt(252.0)) <= 1e-12);
  CHECK(std::abs(sharpe(r) - 10.513) <= 1e-3);
}

TEST_CASE("benchmark equal to the traded stock gives identical rows") {
  PriceTable t;
  std::map<Date, PriceBar> bench;
  Rng rng(5);
  std::vector<PredictionRecord> preds;
  double close = 100;
  for (int i = 0; i < 12; ++i) {
    const Date d = d1.plus_days(i);
    const PriceBar b{close * rng.uniform(0.98, 1.02), close};
    t.add("A", d, b);
    bench[d] = b;
    close *= rng.uniform(0.97, 1.03);
    if (i < 11) preds.push_back(rec(d, "A", 0.9));
  }
  const auto r = run_strategy(preds, t);
  const auto rep = compare_benchmark(r, bench);
  CHECK(rep.strategy.cumulative_return == rep.benchmark.cumulative_return);
  CHECK(rep.strategy.sharpe == rep.benchmark.sharpe);
  CHECK(rep.strategy_cumulative == rep.benchmark_cumulative);
}

TEST_CASE("flat benchmark: zero return and an undefined Sharpe in the report") {
  PriceTable t;
  std::map<Date, PriceBar> bench;
  std::vector<PredictionRecord> preds;
  for (int i = 0; i < 5; ++i) {
    const Date d = d1.plus_days(i);
    t.add("A", d, {100.0 + i, 100.0 + i});
    bench[d] = {50, 50};
    if (i < 4) preds.push_back(rec(d, "A", 0.9));
  }
  const auto rep = compare_benchmark(run_strategy(preds, t), bench, "S", "Flat");
  CHECK(rep.benchmark.cumulative_return == 0.0);
  CHECK_FALSE(rep.benchmark.sharpe.has_value());
  CHECK(rep.summary().find("undefined") != std::string::npos);
  CHECK(rep.series_csv().rfind("date,strategy_cum_return,benchmark_cum_return\n", 0) == 0);
}

TEST_CASE("five-day benchmark fixture against hand computation") {
  std::map<Date, PriceBar> bench;
  const double opens[] = {0, 101, 99, 103, 104, 102};
  const double closes[] = {100, 100, 102, 103, 101, 0};
  for (int i = 0; i < 6; ++i) bench[d1.plus_days(i)] = {opens[i], closes[i]};
  BacktestResult r;
  for (int i = 0; i < 5; ++i) {
    r.dates.push_back(d1.plus_days(i));
    r.daily_returns.push_back(0.001 * i);
  }
  const auto rep = compare_benchmark(r, bench);
  double growth = 1.0;
  std::vector<double> br;
  for (int i = 0; i < 5; ++i) {
    br.push_back(opens[i + 1] / closes[i] - 1.0);
    growth *= 1.0 + br.back();
    CHECK(std::abs(rep.benchmark_cumulative[i] - (growth - 1.0)) <= 1e-15);
  }
  CHECK(std::abs(*rep.benchmark.sharpe - sharpe(br)) <= 1e-12);

  bench.erase(d1.plus_days(2));
  CHECK_THROWS_AS(compare_benchmark(r, bench), EvalError);
}
