#include "atomic_sm/relation_graph.hpp"

#include <algorithm>

#include "atomic_sm/text_io.hpp"

namespace atomic_sm::graph {

// ---- Universe -------------------------------------------------------------------

Universe::Universe(std::vector<UniverseEntry> entries) : entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (e.ticker.empty() || e.entity.empty()) throw GraphConfigError("universe entry with empty ticker or entity");
    if (!by_ticker_.emplace(e.ticker, e.entity).second) {
      throw GraphConfigError("ticker '" + e.ticker + "' mapped to more than one entity");
    }
    if (!by_entity_.emplace(e.entity, e.ticker).second) {
      throw GraphConfigError("entity '" + e.entity + "' mapped to more than one ticker");
    }
  }
}

std::vector<std::string> Universe::tickers() const {
  std::vector<std::string> out;
  out.reserve(by_ticker_.size());
  for (const auto& [t, e] : by_ticker_) out.push_back(t);
  return out;
}

std::optional<std::string> Universe::entity_of(const std::string& ticker) const {
  const auto it = by_ticker_.find(ticker);
  if (it == by_ticker_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> Universe::ticker_of(const std::string& entity) const {
  const auto it = by_entity_.find(entity);
  if (it == by_entity_.end()) return std::nullopt;
  return it->second;
}

std::set<std::string> default_property_whitelist() {
  // owned by, subsidiary of, controlled by, has part, has contract with
  return {"P127", "P355", "P836", "P1553", "PContract"};
}

const char* to_string(EdgeOrder order) {
  switch (order) {
    case EdgeOrder::self:
      return "self";
    case EdgeOrder::first:
      return "first";
    case EdgeOrder::second:
      return "second";
  }
  return "?";
}

// ---- StockGraph -------------------------------------------------------------------

StockGraph::StockGraph(Date snapshot_date, std::vector<std::string> nodes)
    : snapshot_date_(snapshot_date), nodes_(std::move(nodes)), neighbors_(nodes_.size()) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!index_.emplace(nodes_[i], i).second) throw GraphConfigError("duplicate node '" + nodes_[i] + "'");
    neighbors_[i].push_back(i);
  }
}

std::optional<std::size_t> StockGraph::index_of(const std::string& ticker) const {
  const auto it = index_.find(ticker);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool StockGraph::has_edge(std::size_t i, std::size_t j) const {
  const auto& n = neighbors_.at(i);
  return std::binary_search(n.begin(), n.end(), j);
}

const EdgeInfo* StockGraph::edge(std::size_t i, std::size_t j) const {
  static const EdgeInfo self_loop{EdgeOrder::self, {}};
  if (i == j) return i < size() ? &self_loop : nullptr;
  const auto it = edges_.find({std::min(i, j), std::max(i, j)});
  return it == edges_.end() ? nullptr : &it->second;
}

void StockGraph::add_edge(std::size_t i, std::size_t j, EdgeOrder order, const std::string& chain) {
  if (i >= size() || j >= size()) throw std::out_of_range("add_edge: node index out of range");
  if (i == j) return;
  auto [it, inserted] = edges_.try_emplace({std::min(i, j), std::max(i, j)});
  EdgeInfo& info = it->second;
  if (inserted) {
    info.order = order;
    for (auto [a, b] : {std::pair{i, j}, std::pair{j, i}}) {
      auto& n = neighbors_[a];
      n.insert(std::lower_bound(n.begin(), n.end(), b), b);
    }
  } else if (order == EdgeOrder::first && info.order == EdgeOrder::second) {
    info.order = EdgeOrder::first;
    info.chains.clear();
  } else if (order != info.order) {
    return;  // second-order path on an existing first-order edge
  }
  if (!chain.empty()) {
    auto pos = std::lower_bound(info.chains.begin(), info.chains.end(), chain);
    if (pos == info.chains.end() || *pos != chain) info.chains.insert(pos, chain);
  }
}

ad::Mask StockGraph::adjacency_mask() const {
  const std::size_t n = size();
  ad::Mask mask(n * n, false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : neighbors_[i]) mask[i * n + j] = true;
  return mask;
}

StockGraph StockGraph::induced(std::span<const std::string> tickers) const {
  StockGraph sub(snapshot_date_, std::vector<std::string>(tickers.begin(), tickers.end()));
  std::vector<std::size_t> original;
  for (const auto& t : tickers) {
    const auto idx = index_of(t);
    if (!idx) throw std::out_of_range("ticker '" + t + "' is not a node of the graph");
    original.push_back(*idx);
  }
  for (std::size_t a = 0; a < original.size(); ++a)
    for (std::size_t b = a + 1; b < original.size(); ++b) {
      const EdgeInfo* info = edge(original[a], original[b]);
      if (!info) continue;
      if (info->chains.empty()) {
        sub.add_edge(a, b, info->order, "");
      } else {
        for (const auto& c : info->chains) sub.add_edge(a, b, info->order, c);
      }
    }
  return sub;
}

StockGraph StockGraph::without_edges() const { return StockGraph(snapshot_date_, nodes_); }

std::string StockGraph::to_text() const {
  std::string out = "# stock relation graph\n";
  out += "snapshot_date " + snapshot_date_.to_string() + "\n";
  out += "nodes " + std::to_string(size()) + "\n";
  for (std::size_t i = 0; i < size(); ++i) out += "node " + std::to_string(i) + " " + nodes_[i] + "\n";
  out += "edges " + std::to_string(edges_.size()) + "\n";
  for (const auto& [key, info] : edges_) {
    out += "edge " + std::to_string(key.first) + " " + std::to_string(key.second) + " " + to_string(info.order);
    for (const auto& c : info.chains) out += " | " + c;
    out += "\n";
  }
  return out;
}

bool StockGraph::operator==(const StockGraph& other) const {
  if (snapshot_date_ != other.snapshot_date_ || nodes_ != other.nodes_ || neighbors_ != other.neighbors_) return false;
  if (edges_.size() != other.edges_.size()) return false;
  for (auto a = edges_.begin(), b = other.edges_.begin(); a != edges_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.order != b->second.order || a->second.chains != b->second.chains) {
      return false;
    }
  }
  return true;
}

// ---- construction -----------------------------------------------------------------

StockGraph build_graph(std::span<const RelationRecord> records, const Universe& universe, Date snapshot_date,
                       const GraphConfig& config, BuildStats* stats) {
  BuildStats local;
  BuildStats& st = stats ? *stats : local;
  StockGraph graph(snapshot_date, universe.tickers());

  // Incident whitelisted records per entity, rendered as path fragments.
  struct Incidence {
    std::string other;
    std::string fragment_out;  // read from this entity toward `other`
  };
  std::map<std::string, std::vector<Incidence>> incident;

  for (const auto& r : records) {
    if (!config.whitelist.count(r.property)) {
      ++st.records_not_whitelisted;
      continue;
    }
    if (r.valid_from > snapshot_date) {
      ++st.records_not_yet_valid;
      continue;
    }
    if (r.subject == r.object) continue;
    ++st.records_used;
    incident[r.subject].push_back({r.object, "-" + r.property + "->"});
    incident[r.object].push_back({r.subject, "<-" + r.property + "-"});
  }

  auto name_of = [&](const std::string& entity) {
    const auto t = universe.ticker_of(entity);
    return t ? *t : entity;
  };

  // First order: both ends in the universe.
  for (const auto& [entity, links] : incident) {
    const auto ti = universe.ticker_of(entity);
    if (!ti) continue;
    const std::size_t i = *graph.index_of(*ti);
    for (const auto& link : links) {
      const auto tj = universe.ticker_of(link.other);
      if (!tj) continue;
      const std::size_t j = *graph.index_of(*tj);
      if (i < j) graph.add_edge(i, j, EdgeOrder::first, *ti + " " + link.fragment_out + " " + *tj);
    }
  }

  if (config.include_second_order) {
    // Second order: two distinct universe entities sharing an intermediate entity.
    for (const auto& [mid, links] : incident) {
      for (std::size_t a = 0; a < links.size(); ++a) {
        const auto ta = universe.ticker_of(links[a].other);
        if (!ta) continue;
        for (std::size_t b = 0; b < links.size(); ++b) {
          if (a == b) continue;
          const auto tb = universe.ticker_of(links[b].other);
          if (!tb || *ta >= *tb) continue;
          // links[a].fragment_out reads mid -> a; flip it to read a -> mid.
          std::string left = links[a].fragment_out;
          if (left.rfind("<-", 0) == 0) {
            left = "-" + left.substr(2, left.size() - 3) + "->";
          } else {
            left = "<-" + left.substr(1, left.size() - 3) + "-";
          }
          const std::string chain = *ta + " " + left + " " + name_of(mid) + " " + links[b].fragment_out + " " + *tb;
          graph.add_edge(*graph.index_of(*ta), *graph.index_of(*tb), EdgeOrder::second, chain);
        }
      }
    }
  }
  return graph;
}

const StockGraph& snapshot_for_date(std::span<const StockGraph> snapshots, Date date) {
  const StockGraph* best = nullptr;
  for (const auto& s : snapshots) {
    if (s.snapshot_date() <= date) best = &s;
    else break;
  }
  if (!best) throw NoSnapshotError("no graph snapshot on or before " + date.to_string());
  return *best;
}

// ---- CSV ----------------------------------------------------------------------------

std::vector<RelationRecord> read_relations_csv(const std::filesystem::path& path) {
  const auto table = io::read_csv(path, {"subject", "property", "object", "valid_from"});
  std::vector<RelationRecord> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    try {
      out.push_back({f[0], f[1], f[2], Date::parse(f[3])});
    } catch (const std::invalid_argument& e) {
      throw io::FormatError(path.string() + ":" + std::to_string(table.line_numbers[r]) + ": " + e.what());
    }
  }
  return out;
}

void write_relations_csv(const std::filesystem::path& path, std::span<const RelationRecord> records) {
  std::string out = "subject,property,object,valid_from\n";
  for (const auto& r : records) out += r.subject + "," + r.property + "," + r.object + "," + r.valid_from.to_string() + "\n";
  io::write_text_file(path, out);
}

Universe read_universe_csv(const std::filesystem::path& path) {
  const auto table = io::read_csv(path, {"ticker", "entity_id"});
  std::vector<UniverseEntry> entries;
  for (const auto& f : table.rows) entries.push_back({f[0], f[1]});
  try {
    return Universe(std::move(entries));
  } catch (const GraphConfigError& e) {
    throw GraphConfigError(path.string() + ": " + e.what());
  }
}

void write_universe_csv(const std::filesystem::path& path, const Universe& universe) {
  std::string out = "ticker,entity_id\n";
  for (const auto& e : universe.entries()) out += e.ticker + "," + e.entity + "\n";
  io::write_text_file(path, out);
}

}  // namespace atomic_sm::graph
