#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "atomic_sm/autodiff.hpp"
#include "atomic_sm/date.hpp"

namespace atomic_sm::graph {

class GraphConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NoSnapshotError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct RelationRecord {
  std::string subject;
  std::string property;
  std::string object;
  Date valid_from;
};

struct UniverseEntry {
  std::string ticker;
  std::string entity;
};

/// Ticker <-> entity id bijection.
class Universe {
 public:
  Universe() = default;
  /// Throws GraphConfigError on a repeated ticker or entity.
  explicit Universe(std::vector<UniverseEntry> entries);

  std::size_t size() const { return by_ticker_.size(); }
  /// Tickers in canonical (lexicographic) order.
  std::vector<std::string> tickers() const;
  std::optional<std::string> entity_of(const std::string& ticker) const;
  std::optional<std::string> ticker_of(const std::string& entity) const;
  const std::vector<UniverseEntry>& entries() const { return entries_; }

 private:
  std::vector<UniverseEntry> entries_;
  std::map<std::string, std::string> by_ticker_;
  std::map<std::string, std::string> by_entity_;
};

/// Ownership and control properties plus the contract relation (configurable id).
std::set<std::string> default_property_whitelist();

struct GraphConfig {
  std::set<std::string> whitelist = default_property_whitelist();
  bool include_second_order = true;
};

enum class EdgeOrder { self, first, second };
const char* to_string(EdgeOrder order);

struct EdgeInfo {
  EdgeOrder order = EdgeOrder::self;
  /// Human-readable relation paths, e.g. "AAA -P127-> BBB" or "AAA -P127-> Q9 <-P355- CCC".
  std::vector<std::string> chains;
};

struct BuildStats {
  std::size_t records_used = 0;
  std::size_t records_not_whitelisted = 0;
  std::size_t records_not_yet_valid = 0;
};

/// Undirected, self-looped relation graph over an ordered list of tickers.
class StockGraph {
 public:
  StockGraph() = default;
  StockGraph(Date snapshot_date, std::vector<std::string> nodes);

  const Date& snapshot_date() const { return snapshot_date_; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::string>& nodes() const { return nodes_; }
  std::optional<std::size_t> index_of(const std::string& ticker) const;

  /// Sorted neighbor indices of node i, including i itself.
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_.at(i); }
  bool has_edge(std::size_t i, std::size_t j) const;
  /// Metadata for edge (i, j); self-loops report EdgeOrder::self.
  const EdgeInfo* edge(std::size_t i, std::size_t j) const;
  std::size_t edge_count() const { return edges_.size(); }  // undirected, excluding self-loops

  /// Adds (i, j) and (j, i). A first-order edge supersedes a second-order one.
  void add_edge(std::size_t i, std::size_t j, EdgeOrder order, const std::string& chain);

  /// Row-major N x N neighborhood mask, true for j in N_i.
  ad::Mask adjacency_mask() const;

  /// Subgraph on `tickers` in the given order. Throws std::out_of_range on an unknown ticker.
  StockGraph induced(std::span<const std::string> tickers) const;
  /// Same nodes, self-loops only.
  StockGraph without_edges() const;

  /// Adjacency-list text export (see docs/data-formats.md).
  std::string to_text() const;

  bool operator==(const StockGraph& other) const;

 private:
  Date snapshot_date_;
  std::vector<std::string> nodes_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::map<std::pair<std::size_t, std::size_t>, EdgeInfo> edges_;  // key (min, max)
};

/// First-order edges join tickers whose entities share a whitelisted record (either
/// direction); second-order edges join tickers whose entities both touch a common
/// intermediate entity through whitelisted records. Records with valid_from after
/// `snapshot_date` are ignored.
StockGraph build_graph(std::span<const RelationRecord> records, const Universe& universe, Date snapshot_date,
                       const GraphConfig& config = {}, BuildStats* stats = nullptr);

/// Latest snapshot with snapshot_date <= date. `snapshots` must be sorted by date.
const StockGraph& snapshot_for_date(std::span<const StockGraph> snapshots, Date date);

std::vector<RelationRecord> read_relations_csv(const std::filesystem::path& path);
void write_relations_csv(const std::filesystem::path& path, std::span<const RelationRecord> records);
Universe read_universe_csv(const std::filesystem::path& path);
void write_universe_csv(const std::filesystem::path& path, const Universe& universe);

}  // namespace atomic_sm::graph
