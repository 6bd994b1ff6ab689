#include "atomic_sm/cli.hpp"

#include <algorithm>
#include <functional>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "atomic_sm/gradcheck.hpp"

namespace atomic_sm::cli {

namespace fs = std::filesystem;

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UserError("config key '" + key + "': expected true/false, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    return io::parse_double(v, key);
  } catch (const io::FormatError& e) {
    throw UserError(std::string("config key '") + key + "': " + e.what());
  }
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::int64_t n = 0;
  try {
    n = io::parse_int(v, key);
  } catch (const io::FormatError& e) {
    throw UserError(std::string("config key '") + key + "': " + e.what());
  }
  if (n < 0) throw UserError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(n);
}

Date parse_date(const std::string& key, const std::string& v) {
  try {
    return Date::parse(v);
  } catch (const std::invalid_argument& e) {
    throw UserError("config key '" + key + "': " + e.what());
  }
}

std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  for (const auto& part : io::split(v, ',')) {
    const auto t = std::string(io::trim(part));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

std::string absolute_text(const fs::path& p) { return p.empty() ? std::string() : fs::absolute(p).lexically_normal().string(); }

}  // namespace

// ---- RunConfig ----------------------------------------------------------------------

void RunConfig::apply(const std::string& key, const std::string& value, const fs::path& base_dir) {
  auto path_of = [&](const std::string& v) {
    if (v.empty()) return fs::path();
    const fs::path p(v);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };

  if (key == "prices") prices = path_of(value);
  else if (key == "sentiment") sentiment = path_of(value);
  else if (key == "relations") relations = path_of(value);
  else if (key == "universe") universe = path_of(value);
  else if (key == "benchmark") benchmark = path_of(value);
  else if (key == "out") out = path_of(value);
  else if (key == "seed") {
    seed = parse_count(key, value);
    train.seed = seed;
  } else if (key == "lookback") {
    window.lookback = parse_count(key, value);
    model.lookback = window.lookback;
  } else if (key == "max_gap_days") window.max_gap_days = static_cast<int>(parse_count(key, value));
  else if (key == "score_floor") window.score_floor = parse_real(key, value);
  else if (key == "score_cap") window.score_cap = parse_real(key, value);
  else if (key == "train_ratio") split.train = parse_real(key, value);
  else if (key == "validation_ratio") split.validation = parse_real(key, value);
  else if (key == "test_ratio") split.test = parse_real(key, value);
  else if (key == "price_hidden") model.price_hidden = parse_count(key, value);
  else if (key == "media_hidden") model.media_hidden = parse_count(key, value);
  else if (key == "fused_size") model.fused_size = parse_count(key, value);
  else if (key == "gat_head_size") model.gat_head_size = parse_count(key, value);
  else if (key == "gat_heads") model.gat_heads = parse_count(key, value);
  else if (key == "leaky_slope") model.leaky_slope = parse_real(key, value);
  else if (key == "learning_rate") train.learning_rate = parse_real(key, value);
  else if (key == "max_epochs") train.max_epochs = parse_count(key, value);
  else if (key == "batch_size") train.batch_size = parse_count(key, value);
  else if (key == "patience") train.patience = parse_count(key, value);
  else if (key == "threshold") {
    train.threshold = parse_real(key, value);
    strategy.threshold = train.threshold;
  } else if (key == "f1_mode") {
    if (value == "positive") train.f1_mode = train::F1Mode::positive;
    else if (value == "macro") train.f1_mode = train::F1Mode::macro;
    else throw UserError("config key 'f1_mode': expected positive or macro, got '" + value + "'");
  } else if (key == "top_k") strategy.top_k = parse_count(key, value);
  else if (key == "transaction_cost") strategy.transaction_cost = parse_real(key, value);
  else if (key == "whitelist") {
    const auto items = parse_list(value);
    graph.whitelist = std::set<std::string>(items.begin(), items.end());
  } else if (key == "second_order") graph.include_second_order = parse_bool(key, value);
  else if (key == "snapshots") {
    snapshots.clear();
    for (const auto& d : parse_list(value)) snapshots.push_back(parse_date(key, d));
    std::sort(snapshots.begin(), snapshots.end());
  } else if (key == "drop_edges") drop_edges = parse_bool(key, value);
  else if (key == "attention_dump") attention_dump = parse_bool(key, value);
  else if (key == "log_every") log_every = parse_count(key, value);
  else if (key.starts_with("synth.")) {
    auto kv = synth.to_kv();
    const std::string field = key.substr(6);
    if (!kv.contains(field)) throw UserError("unknown config key '" + key + "'");
    kv.set(field, value);
    try {
      synth = data::SynthConfig::from_kv(kv);
    } catch (const std::exception& e) {
      throw UserError("config key '" + key + "': " + e.what());
    }
  } else if (key.starts_with("fingerprint.")) {
    expected_fingerprints.emplace_back(key.substr(12), value);
  } else {
    throw UserError("unknown config key '" + key + "'");
  }
}

RunConfig RunConfig::resolve(const std::optional<fs::path>& file,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig c;
  if (file) {
    io::KeyValueFile kv;
    try {
      kv = io::KeyValueFile::load(*file);
    } catch (const io::FormatError& e) {
      throw UserError(e.what());
    }
    for (const auto& [k, v] : kv.entries()) c.apply(k, v, file->parent_path());
  }
  for (const auto& [k, v] : overrides) c.apply(k, v);
  return c;
}

io::KeyValueFile RunConfig::to_kv() const {
  io::KeyValueFile kv;
  kv.set("prices", absolute_text(prices));
  kv.set("sentiment", absolute_text(sentiment));
  kv.set("relations", absolute_text(relations));
  kv.set("universe", absolute_text(universe));
  kv.set("benchmark", absolute_text(benchmark));
  kv.set("seed", std::to_string(seed));
  kv.set("lookback", window.lookback);
  kv.set("max_gap_days", window.max_gap_days);
  kv.set("score_floor", window.score_floor);
  kv.set("score_cap", window.score_cap);
  kv.set("train_ratio", split.train);
  kv.set("validation_ratio", split.validation);
  kv.set("test_ratio", split.test);
  kv.set("price_hidden", model.price_hidden);
  kv.set("media_hidden", model.media_hidden);
  kv.set("fused_size", model.fused_size);
  kv.set("gat_head_size", model.gat_head_size);
  kv.set("gat_heads", model.gat_heads);
  kv.set("leaky_slope", model.leaky_slope);
  kv.set("learning_rate", train.learning_rate);
  kv.set("max_epochs", train.max_epochs);
  kv.set("batch_size", train.batch_size);
  kv.set("patience", train.patience);
  kv.set("threshold", train.threshold);
  kv.set("f1_mode", train.f1_mode == train::F1Mode::positive ? "positive" : "macro");
  kv.set("top_k", strategy.top_k);
  kv.set("transaction_cost", strategy.transaction_cost);
  kv.set("whitelist", join(std::vector<std::string>(graph.whitelist.begin(), graph.whitelist.end())));
  kv.set("second_order", graph.include_second_order ? "true" : "false");
  std::vector<std::string> snaps;
  for (const auto& d : snapshots) snaps.push_back(d.to_string());
  kv.set("snapshots", join(snaps));
  kv.set("drop_edges", drop_edges ? "true" : "false");
  kv.set("attention_dump", attention_dump ? "true" : "false");
  kv.set("log_every", log_every);
  const auto synth_kv = synth.to_kv();
  for (const auto& [k, v] : synth_kv.entries()) kv.set("synth." + k, v);
  return kv;
}

// ---- shared pipeline ----------------------------------------------------------------

namespace {

struct LoadedData {
  data::SeriesBySymbol series;
  data::IngestionReport report;
  std::vector<data::CrossSection> sections;
  std::vector<graph::StockGraph> snapshots;
  std::vector<std::pair<std::string, std::string>> fingerprints;
};

void require_file(const fs::path& p, const std::string& key) {
  if (p.empty()) throw UserError("config key '" + key + "' is required");
  if (!fs::is_regular_file(p)) throw UserError("input file not found: " + p.string() + " (" + key + ")");
}

LoadedData load_data(const RunConfig& config, std::size_t lookback) {
  require_file(config.prices, "prices");
  require_file(config.sentiment, "sentiment");
  if (!config.relations.empty()) require_file(config.relations, "relations");
  if (!config.universe.empty()) require_file(config.universe, "universe");

  LoadedData d;
  for (const auto& [name, path] : {std::pair<std::string, fs::path>{"prices", config.prices},
                                   {"sentiment", config.sentiment},
                                   {"relations", config.relations},
                                   {"universe", config.universe}}) {
    if (!path.empty()) d.fingerprints.emplace_back(name, io::file_fingerprint(path));
  }
  for (const auto& [name, want] : config.expected_fingerprints) {
    auto it = std::find_if(d.fingerprints.begin(), d.fingerprints.end(), [&](const auto& f) { return f.first == name; });
    if (it != d.fingerprints.end() && it->second != want) {
      throw UserError("input '" + name + "' differs from the manifest (fingerprint " + it->second + ", expected " +
                      want + ")");
    }
  }

  const auto prices = data::read_price_csv(config.prices);
  const auto sentiment = data::read_sentiment_csv(config.sentiment);
  d.series = data::merge_series(prices, sentiment, &d.report);
  data::WindowConfig wc = config.window;
  wc.lookback = lookback;
  d.sections = data::group_by_date(data::build_windows(d.series, wc, &d.report));
  if (d.sections.empty()) throw UserError("no complete lookback windows in " + config.prices.string());

  graph::Universe universe;
  if (!config.universe.empty()) {
    universe = graph::read_universe_csv(config.universe);
  } else {
    std::vector<graph::UniverseEntry> entries;
    for (const auto& [symbol, _] : d.series) entries.push_back({symbol, symbol});
    universe = graph::Universe(entries);
  }
  for (const auto& [symbol, _] : d.series) {
    if (!universe.entity_of(symbol)) throw UserError("symbol " + symbol + " is missing from the universe file");
  }
  std::vector<graph::RelationRecord> relations;
  if (!config.relations.empty()) relations = graph::read_relations_csv(config.relations);

  std::vector<Date> snapshot_dates = config.snapshots;
  if (snapshot_dates.empty()) {
    for (int y = d.sections.front().date.year(); y <= d.sections.back().date.year(); ++y) {
      snapshot_dates.emplace_back(y, 1, 1);
    }
  }
  for (const auto& date : snapshot_dates) d.snapshots.push_back(graph::build_graph(relations, universe, date, config.graph));
  if (d.snapshots.front().snapshot_date() > d.sections.front().date) {
    throw UserError("first graph snapshot " + d.snapshots.front().snapshot_date().to_string() +
                    " is later than the first sample date " + d.sections.front().date.to_string());
  }
  return d;
}

data::DatasetSplit split_or_throw(std::vector<data::CrossSection> sections, const data::SplitRatios& ratios) {
  try {
    return data::split_dataset(std::move(sections), ratios);
  } catch (const data::SplitError& e) {
    throw UserError(e.what());
  }
}

std::map<std::string, std::string> split_ranges(const data::DatasetSplit& split) {
  std::map<std::string, std::string> meta;
  meta["train_start"] = split.train.front().date.to_string();
  meta["train_end"] = split.train.back().date.to_string();
  meta["validation_start"] = split.validation.front().date.to_string();
  meta["validation_end"] = split.validation.back().date.to_string();
  if (!split.test.empty()) {
    meta["test_start"] = split.test.front().date.to_string();
    meta["test_end"] = split.test.back().date.to_string();
  }
  return meta;
}

Date meta_date(const model::AtomicModel& m, const std::string& key) {
  const auto it = m.metadata().find(key);
  if (it == m.metadata().end()) throw UserError("checkpoint has no '" + key + "' entry");
  return Date::parse(it->second);
}

model::AtomicModel load_model(const RunConfig& config, const std::optional<fs::path>& checkpoint) {
  const fs::path path = checkpoint.value_or(config.out / "checkpoint.txt");
  if (!fs::is_regular_file(path)) throw UserError("checkpoint not found: " + path.string());
  return model::load_checkpoint(path);
}

// Runs `body`, mapping failures to exit codes.
int guarded(std::ostream& log, const std::function<int()>& body) {
  try {
    return body();
  } catch (const UserError& e) {
    log << "error: " << e.what() << "\n";
    return user_error;
  } catch (const io::FormatError& e) {
    log << "error: " << e.what() << "\n";
    return user_error;
  } catch (const data::DataError& e) {
    log << "error: " << e.what() << "\n";
    return user_error;
  } catch (const graph::GraphConfigError& e) {
    log << "error: " << e.what() << "\n";
    return user_error;
  } catch (const graph::NoSnapshotError& e) {
    log << "error: " << e.what() << "\n";
    return user_error;
  } catch (const model::CheckpointError& e) {
    log << "error: " << e.what() << "\n";
    return user_error;
  } catch (const train::NumericalError& e) {
    log << "internal failure: " << e.what() << "\n";
    return internal_failure;
  } catch (const std::exception& e) {
    log << "internal failure: " << e.what() << "\n";
    return internal_failure;
  }
}

std::vector<data::CrossSection> sections_between(const std::vector<data::CrossSection>& all, Date from, Date to) {
  std::vector<data::CrossSection> out;
  for (const auto& s : all)
    if (s.date >= from && s.date <= to) out.push_back(s);
  return out;
}

}  // namespace

// ---- commands -----------------------------------------------------------------------

int cmd_train(const RunConfig& config, std::ostream& log) {
  return guarded(log, [&] {
    try {
      config.train.validate();
    } catch (const std::invalid_argument& e) {
      throw UserError(e.what());
    }
    auto loaded = load_data(config, config.model.lookback);
    auto split = split_or_throw(std::move(loaded.sections), config.split);
    // Only the test date range is kept (so backtest can default to it); its samples are dropped here.
    const auto ranges = split_ranges(split);
    split.test.clear();

    auto initial = model::AtomicModel::initialize(config.model, config.seed);
    initial.fit_scalers(split.train);
    const auto train_days = model::prepare_days(initial, split.train, loaded.snapshots, config.drop_edges);
    const auto val_days = model::prepare_days(initial, split.validation, loaded.snapshots, config.drop_edges);
    log << "train: " << train_days.size() << " days, validation: " << val_days.size() << " days\n";

    fs::create_directories(config.out);
    train::FitResult result;
    try {
      result = train::fit(initial, {train_days, val_days}, config.train, [&](const train::EpochRecord& r) {
        if (config.log_every != 0 && r.epoch % config.log_every == 0) {
          log << "epoch " << r.epoch << " loss " << r.train_loss << " val_f1 " << r.val_f1 << " val_acc " << r.val_acc
              << "\n";
        }
      });
    } catch (const train::NumericalError& e) {
      std::string dump = "# batch that produced a non-finite loss\n";
      for (const auto& d : e.batch_dates()) dump += d.to_string() + "\n";
      io::write_text_file(config.out / "nonfinite_batch.txt", dump);
      throw;
    }

    auto& best = result.model;
    best.metadata() = ranges;
    best.metadata()["seed"] = std::to_string(config.seed);
    best.metadata()["best_epoch"] = std::to_string(result.best_epoch);
    best.metadata()["epochs_run"] = std::to_string(result.history.size());

    model::save_checkpoint(config.out / "checkpoint.txt", best);
    io::write_text_file(config.out / "history.csv", train::history_csv(result.history));
    loaded.report.save(config.out / "ingestion_report.txt");

    std::string graphs;
    for (const auto& g : loaded.snapshots) graphs += g.to_text();
    io::write_text_file(config.out / "graphs.txt", graphs);

    auto manifest = config.to_kv();
    for (const auto& [name, fp] : loaded.fingerprints) manifest.set("fingerprint." + name, fp);
    io::write_text_file(config.out / "manifest.txt",
                        "# rerun with: atomic_sm train --config manifest.txt --out <dir>\n" + manifest.to_string());

    if (config.attention_dump) {
      std::string dump = "date,head,node,neighbor,alpha\n";
      for (const auto& day : val_days) {
        ad::Tape tape(ad::Tape::Mode::inference);
        const auto fwd = best.forward(tape, day);
        dump += model::attention_triplets(day.date.to_string(), day.graph, fwd.gat_attention);
      }
      io::write_text_file(config.out / "attention.csv", dump);
    }

    log << "best epoch " << result.best_epoch << " validation F1 " << result.best_validation_f1 << " after "
        << result.history.size() << " epochs" << (result.stopped_early ? " (early stop)" : "") << "\n";
    return static_cast<int>(ok);
  });
}

int cmd_evaluate(const RunConfig& config, const EvaluateOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    if (options.split != "train" && options.split != "validation" && options.split != "test") {
      throw UserError("split must be train, validation or test, got '" + options.split + "'");
    }
    const auto m = load_model(config, options.checkpoint);
    auto loaded = load_data(config, m.config().lookback);
    auto split = split_or_throw(std::move(loaded.sections), config.split);
    if (split.train.back().date != meta_date(m, "train_end") ||
        split.validation.back().date != meta_date(m, "validation_end")) {
      throw UserError("data or split ratios differ from the training run recorded in the checkpoint");
    }
    const auto& chosen = options.split == "train" ? split.train
                         : options.split == "validation" ? split.validation
                                                         : split.test;
    if (chosen.empty()) throw UserError("the " + options.split + " split is empty");

    const auto days = model::prepare_days(m, chosen, loaded.snapshots, config.drop_edges);
    const auto metrics = train::evaluate(m, days, config.train.threshold, config.train.f1_mode);
    const auto preds = train::predict(m, days);

    nlohmann::ordered_json j;
    j["split"] = options.split;
    j["samples"] = metrics.counts.total();
    j["f1"] = metrics.f1;
    j["accuracy"] = metrics.accuracy;
    j["mcc"] = metrics.mcc;
    j["tp"] = metrics.counts.tp;
    j["tn"] = metrics.counts.tn;
    j["fp"] = metrics.counts.fp;
    j["fn"] = metrics.counts.fn;
    j["threshold"] = config.train.threshold;

    fs::create_directories(config.out);
    io::write_text_file(config.out / "metrics.json", j.dump(2) + "\n");
    eval::write_predictions_csv(config.out / "predictions.csv", preds);
    log << options.split << ": f1 " << metrics.f1 << " accuracy " << metrics.accuracy << " mcc " << metrics.mcc
        << " (" << metrics.counts.total() << " samples)\n";
    return static_cast<int>(ok);
  });
}

int cmd_backtest(const RunConfig& config, const BacktestOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    const auto m = load_model(config, options.checkpoint);
    const Date fit_start = meta_date(m, "train_start");
    const Date fit_end = meta_date(m, "validation_end");
    const Date from = options.from ? *options.from : meta_date(m, "test_start");
    const Date to = options.to ? *options.to : meta_date(m, "test_end");
    if (to < from) throw UserError("backtest range is empty: " + from.to_string() + " > " + to.to_string());
    if (from <= fit_end && to >= fit_start && !options.allow_overlap) {
      throw UserError("backtest range " + from.to_string() + ".." + to.to_string() +
                      " overlaps the training/validation range " + fit_start.to_string() + ".." + fit_end.to_string() +
                      "; pass --allow-overlap to run anyway");
    }
    require_file(config.benchmark, "benchmark");

    auto loaded = load_data(config, m.config().lookback);
    const auto sections = sections_between(loaded.sections, from, to);
    if (sections.empty()) throw UserError("no samples between " + from.to_string() + " and " + to.to_string());
    const auto days = model::prepare_days(m, sections, loaded.snapshots, config.drop_edges);
    const auto preds = train::predict(m, days);

    eval::PriceTable table;
    for (const auto& [symbol, series] : loaded.series)
      for (const auto& d : series) table.add(symbol, d.date, {d.open, d.adj_close});
    const auto result = eval::run_strategy(preds, table, config.strategy);

    std::map<Date, eval::PriceBar> bench;
    std::set<std::string> bench_symbols;
    for (const auto& r : data::read_price_csv(config.benchmark)) {
      bench[r.date] = {r.open, r.adj_close};
      bench_symbols.insert(r.symbol);
    }
    if (bench_symbols.size() != 1) throw UserError("benchmark file must hold exactly one symbol");
    eval::BenchmarkReport report;
    try {
      report = eval::compare_benchmark(result, bench, "ATOMIC-SM", *bench_symbols.begin());
    } catch (const eval::EvalError& e) {
      throw UserError(e.what());
    }

    fs::create_directories(config.out);
    io::write_text_file(config.out / "backtest.csv", report.series_csv());
    io::write_text_file(config.out / "summary.txt", report.summary());
    std::string trades = "date,symbol,buy_price,sell_price,return\n";
    for (const auto& t : result.trade_log) {
      trades += t.date.to_string() + "," + t.symbol + "," + io::format_double(t.buy_price) + "," +
                io::format_double(t.sell_price) + "," + io::format_double(t.simple_return) + "\n";
    }
    for (const auto& s : result.skipped) trades += "# skipped " + s + "\n";
    io::write_text_file(config.out / "trades.csv", trades);
    eval::write_predictions_csv(config.out / "predictions.csv", preds);
    log << report.summary();
    return static_cast<int>(ok);
  });
}

int cmd_gradcheck(const RunConfig& config, const GradcheckOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    const auto fixture = model::make_gradcheck_fixture(config.model, config.seed);
    ad::GradCheckOptions gc;
    gc.max_coords_per_tensor = options.max_coords_per_tensor;
    const auto report = model::full_model_grad_check(fixture, gc);
    for (const auto& e : report.entries) {
      log << e.name << ": " << e.checked << " coords, max rel err " << e.max_relative_error << "\n";
    }
    log << (report.passed() ? "PASS" : "FAIL") << " max relative error " << report.max_relative_error()
        << " (tolerance " << report.tolerance << ")\n";
    return static_cast<int>(report.passed() ? ok : internal_failure);
  });
}

int cmd_gen_synth(const RunConfig& config, std::ostream& log) {
  return guarded(log, [&] {
    const auto market = data::generate_synthetic(config.synth, config.seed);
    const fs::path& out = config.out;
    fs::create_directories(out);
    const auto prices = data::price_rows(market.series);
    const auto scores = data::sentiment_rows(market.series);
    data::write_price_csv(out / "prices.csv", prices);
    data::write_sentiment_csv(out / "sentiment.csv", scores);
    data::write_price_csv(out / "benchmark.csv", market.benchmark);
    graph::write_relations_csv(out / "relations.csv", market.relations);
    graph::write_universe_csv(out / "universe.csv", market.universe);

    auto signal = config.synth.to_kv();
    signal.set("seed", std::to_string(config.seed));
    signal.set("description", market.signal.description);
    signal.set("bayes_accuracy", market.signal.bayes_accuracy);
    signal.save(out / "signal.txt");

    io::KeyValueFile run;
    run.set("prices", "prices.csv");
    run.set("sentiment", "sentiment.csv");
    run.set("relations", "relations.csv");
    run.set("universe", "universe.csv");
    run.set("benchmark", "benchmark.csv");
    run.set("seed", std::to_string(config.seed));
    std::vector<std::string> snaps;
    for (const auto& d : market.snapshot_dates) snaps.push_back(d.to_string());
    run.set("snapshots", join(snaps));
    run.save(out / "run.cfg");

    log << "wrote " << market.series.size() << " stocks x " << config.synth.days << " days to " << out.string()
        << "; planted signal: " << market.signal.description << " (Bayes accuracy " << market.signal.bayes_accuracy
        << ")\n";
    return static_cast<int>(ok);
  });
}

// ---- argument parsing ---------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stock movement prediction from prices, social-media scores and company relations"};
  app.require_subcommand(1);
  std::optional<std::string> config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::vector<std::string> sets;
  app.add_option("--config", config_file, "Flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Run seed (overrides the config file)");
  app.add_option("--out", out_dir, "Output directory (overrides the config file)");
  app.add_option("--set", sets, "Override any config key, KEY=VALUE (repeatable)")->allow_extra_args(false);
  app.fallthrough();

  auto* train_cmd = app.add_subcommand("train", "Train on the training split, select on validation F1");
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint on one split and write metrics.json");
  auto* bt_cmd = app.add_subcommand("backtest", "Run the top-k strategy over a date range");
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full model's gradients");
  auto* gs_cmd = app.add_subcommand("gen-synth", "Write a synthetic market with a planted signal");

  EvaluateOptions eval_opts;
  std::optional<std::string> eval_ckpt;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file (default <out>/checkpoint.txt)");
  eval_cmd->add_option("--split", eval_opts.split, "train, validation or test")->capture_default_str();

  BacktestOptions bt_opts;
  std::optional<std::string> bt_ckpt, bt_from, bt_to;
  bt_cmd->add_option("--checkpoint", bt_ckpt, "Checkpoint file (default <out>/checkpoint.txt)");
  bt_cmd->add_option("--from", bt_from, "First prediction date (default: first test date)");
  bt_cmd->add_option("--to", bt_to, "Last prediction date (default: last test date)");
  bt_cmd->add_flag("--allow-overlap", bt_opts.allow_overlap, "Permit dates used during training");

  GradcheckOptions gc_opts;
  gc_cmd->add_option("--max-coords", gc_opts.max_coords_per_tensor, "Coordinates checked per tensor (0 = all)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? static_cast<int>(ok) : static_cast<int>(user_error);
  }

  RunConfig config;
  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UserError("--set expects KEY=VALUE, got '" + s + "'");
      overrides.emplace_back(std::string(io::trim(s.substr(0, eq))), std::string(io::trim(s.substr(eq + 1))));
    }
    if (seed) overrides.emplace_back("seed", std::to_string(*seed));
    if (out_dir) overrides.emplace_back("out", *out_dir);
    config = RunConfig::resolve(config_file ? std::optional<fs::path>(*config_file) : std::nullopt, overrides);
    if (eval_ckpt) eval_opts.checkpoint = fs::path(*eval_ckpt);
    if (bt_ckpt) bt_opts.checkpoint = fs::path(*bt_ckpt);
    if (bt_from) bt_opts.from = parse_date("--from", *bt_from);
    if (bt_to) bt_opts.to = parse_date("--to", *bt_to);
  } catch (const UserError& e) {
    err << "error: " << e.what() << "\n";
    return user_error;
  }

  if (*train_cmd) return cmd_train(config, err);
  if (*eval_cmd) return cmd_evaluate(config, eval_opts, err);
  if (*bt_cmd) return cmd_backtest(config, bt_opts, err);
  if (*gc_cmd) return cmd_gradcheck(config, gc_opts, err);
  if (*gs_cmd) return cmd_gen_synth(config, err);
  return user_error;
}

}  // namespace atomic_sm::cli
