#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "atomic_sm/evaluation.hpp"
#include "atomic_sm/market_data.hpp"
#include "atomic_sm/model.hpp"
#include "atomic_sm/relation_graph.hpp"
#include "atomic_sm/synthetic.hpp"
#include "atomic_sm/text_io.hpp"
#include "atomic_sm/training.hpp"

namespace atomic_sm::cli {

enum ExitCode : int { ok = 0, internal_failure = 1, user_error = 2 };

/// Bad configuration, missing input, or a refused request. Maps to exit code 2.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a command needs, resolved with precedence flag > file > default.
struct RunConfig {
  std::filesystem::path prices;
  std::filesystem::path sentiment;
  std::filesystem::path relations;  // optional: no relations means self-loops only
  std::filesystem::path universe;   // optional: defaults to ticker == entity
  std::filesystem::path benchmark;  // required by backtest
  std::filesystem::path out = "out";
  std::uint64_t seed = 42;

  data::WindowConfig window;
  data::SplitRatios split;
  model::ModelConfig model;
  train::TrainConfig train;
  eval::StrategyConfig strategy;
  graph::GraphConfig graph;
  std::vector<Date> snapshots;  // empty: January 1 of every covered year
  bool drop_edges = false;
  bool attention_dump = false;
  std::size_t log_every = 10;   // epochs between progress lines; 0 silences them
  data::SynthConfig synth;

  /// Fingerprints recorded in a manifest; checked against the inputs when present.
  std::vector<std::pair<std::string, std::string>> expected_fingerprints;

  /// Applies one `key = value` setting. Relative paths resolve against `base_dir`.
  /// Throws UserError on an unknown key or a malformed value.
  void apply(const std::string& key, const std::string& value, const std::filesystem::path& base_dir = {});

  /// Loads a config file (paths relative to its directory), then applies
  /// `overrides` (paths relative to the working directory).
  static RunConfig resolve(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides);

  /// Every setting in `key = value` form, with absolute paths. Loading this text
  /// back yields an equivalent RunConfig.
  io::KeyValueFile to_kv() const;
};

struct EvaluateOptions {
  std::optional<std::filesystem::path> checkpoint;  // default: <out>/checkpoint.txt
  std::string split = "test";
};

struct BacktestOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<Date> from;  // default: first test date of the training run
  std::optional<Date> to;    // default: last test date of the training run
  bool allow_overlap = false;
};

struct GradcheckOptions {
  std::size_t max_coords_per_tensor = 0;  // 0 checks every coordinate
};

int cmd_train(const RunConfig& config, std::ostream& log);
int cmd_evaluate(const RunConfig& config, const EvaluateOptions& options, std::ostream& log);
int cmd_backtest(const RunConfig& config, const BacktestOptions& options, std::ostream& log);
int cmd_gradcheck(const RunConfig& config, const GradcheckOptions& options, std::ostream& log);
int cmd_gen_synth(const RunConfig& config, std::ostream& log);

/// Parses arguments (argv[0] is the program name) and dispatches to a command.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace atomic_sm::cli
