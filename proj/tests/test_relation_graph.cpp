#include <doctest.h>

#include <set>

#include "atomic_sm/relation_graph.hpp"
#include "atomic_sm/rng.hpp"
#include "test_support.hpp"

using namespace atomic_sm;
using namespace atomic_sm::graph;

namespace {

const Date kStart(2019, 1, 1);

Universe abc_universe() { return Universe({{"AAA", "Q1"}, {"BBB", "Q2"}, {"CCC", "Q3"}}); }

// Random records over entities Q0..Q{n-1}; the first `in_universe` of them are stocks.
std::vector<RelationRecord> random_records(Rng& rng, std::size_t entities, std::size_t count) {
  const char* props[] = {"P127", "P355", "P836", "P1553", "PContract", "P31", "P279"};
  std::vector<RelationRecord> out;
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back({"Q" + std::to_string(rng.below(entities)), props[rng.below(7)],
                   "Q" + std::to_string(rng.below(entities)), kStart.plus_days(static_cast<int>(rng.below(800)))});
  }
  return out;
}

Universe universe_of(std::size_t stocks) {
  std::vector<UniverseEntry> e;
  for (std::size_t i = 0; i < stocks; ++i) e.push_back({"T" + std::to_string(i), "Q" + std::to_string(i)});
  return Universe(e);
}

// Length-1 and length-2 whitelisted paths between stock entities, by enumeration.
std::map<std::pair<std::string, std::string>, EdgeOrder> brute_force_edges(const std::vector<RelationRecord>& recs,
                                                                           const Universe& u, Date date) {
  const auto wl = default_property_whitelist();
  std::set<std::pair<std::string, std::string>> link;  // undirected entity adjacency
  std::set<std::string> entities;
  for (const auto& r : recs) {
    if (!wl.count(r.property) || r.valid_from > date || r.subject == r.object) continue;
    link.insert({r.subject, r.object});
    link.insert({r.object, r.subject});
    entities.insert(r.subject);
    entities.insert(r.object);
  }
  std::map<std::pair<std::string, std::string>, EdgeOrder> out;
  for (const auto& a : u.tickers())
    for (const auto& b : u.tickers()) {
      if (a >= b) continue;
      const auto ea = *u.entity_of(a), eb = *u.entity_of(b);
      if (link.count({ea, eb})) {
        out[{a, b}] = EdgeOrder::first;
        continue;
      }
      for (const auto& x : entities) {
        if (x != ea && x != eb && link.count({ea, x}) && link.count({x, eb})) {
          out[{a, b}] = EdgeOrder::second;
          break;
        }
      }
    }
  return out;
}

}  // namespace

TEST_CASE("owned-by record creates a first-order edge") {
  const std::vector<RelationRecord> recs = {{"Q1", "P127", "Q2", kStart}};
  const auto g = build_graph(recs, abc_universe(), kStart);
  const auto a = *g.index_of("AAA"), b = *g.index_of("BBB"), c = *g.index_of("CCC");
  CHECK(g.has_edge(a, b));
  CHECK(g.has_edge(b, a));
  CHECK(g.edge(a, b)->order == EdgeOrder::first);
  CHECK_FALSE(g.has_edge(a, c));
  CHECK(g.edge_count() == 1);
}

TEST_CASE("no records gives isolated self-looped nodes") {
  const auto g = build_graph({}, abc_universe(), kStart);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(g.neighbors(i) == std::vector<std::size_t>{i});
    CHECK(g.edge(i, i)->order == EdgeOrder::self);
  }
}

TEST_CASE("shared intermediate outside the universe creates a second-order edge") {
  const std::vector<RelationRecord> recs = {{"Q1", "P127", "QX", kStart}, {"Q2", "P355", "QX", kStart}};
  const auto g = build_graph(recs, abc_universe(), kStart);
  const auto a = *g.index_of("AAA"), b = *g.index_of("BBB");
  REQUIRE(g.has_edge(a, b));
  CHECK(g.edge(a, b)->order == EdgeOrder::second);
  CHECK(g.edge(a, b)->chains.at(0) == "AAA -P127-> QX <-P355- BBB");

  GraphConfig first_only;
  first_only.include_second_order = false;
  CHECK_FALSE(build_graph(recs, abc_universe(), kStart, first_only).has_edge(a, b));
}

TEST_CASE("first-order supersedes second-order") {
  const std::vector<RelationRecord> recs = {
      {"Q1", "P127", "QX", kStart}, {"Q2", "P127", "QX", kStart}, {"Q2", "P836", "Q1", kStart}};
  const auto g = build_graph(recs, abc_universe(), kStart);
  CHECK(g.edge(*g.index_of("AAA"), *g.index_of("BBB"))->order == EdgeOrder::first);
}

TEST_CASE("records not yet valid or not whitelisted are ignored and counted") {
  const std::vector<RelationRecord> recs = {{"Q1", "P31", "Q2", kStart}, {"Q1", "P127", "Q3", Date(2020, 6, 1)}};
  BuildStats stats;
  const auto g = build_graph(recs, abc_universe(), Date(2020, 1, 1), {}, &stats);
  CHECK(g.edge_count() == 0);
  CHECK(stats.records_not_whitelisted == 1);
  CHECK(stats.records_not_yet_valid == 1);
}

TEST_CASE("duplicate universe mappings are configuration errors") {
  CHECK_THROWS_AS(Universe({{"AAA", "Q1"}, {"AAA", "Q2"}}), GraphConfigError);
  CHECK_THROWS_AS(Universe({{"AAA", "Q1"}, {"BBB", "Q1"}}), GraphConfigError);
}

TEST_CASE("edges equal brute-force path enumeration on random fixtures") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const std::size_t stocks = 2 + rng.below(5);
    const std::size_t entities = stocks + rng.below(5);  // total <= 10
    const auto recs = random_records(rng, entities, rng.below(14));
    const auto u = universe_of(stocks);
    const Date date = kStart.plus_days(static_cast<int>(rng.below(900)));
    const auto g = build_graph(recs, u, date);
    const auto expected = brute_force_edges(recs, u, date);
    CAPTURE(seed);
    CHECK(g.edge_count() == expected.size());
    for (const auto& [pair, order] : expected) {
      const auto i = *g.index_of(pair.first), j = *g.index_of(pair.second);
      REQUIRE(g.has_edge(i, j));
      CHECK(g.edge(i, j)->order == order);
    }
  }
}

TEST_CASE("graph properties on random records: symmetry, self-loops, idempotence, whitelist") {
  const auto wl = default_property_whitelist();
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(1000 + seed);
    const auto u = universe_of(2 + rng.below(8));
    const auto recs = random_records(rng, 10, rng.below(20));
    const auto g = build_graph(recs, u, Date(2030, 1, 1));
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(g.has_edge(i, i));
      for (std::size_t j = 0; j < g.size(); ++j) CHECK(g.has_edge(i, j) == g.has_edge(j, i));
    }
    CHECK(build_graph(recs, u, Date(2030, 1, 1)) == g);

    std::vector<RelationRecord> filtered;
    for (const auto& r : recs)
      if (wl.count(r.property)) filtered.push_back(r);
    CHECK(build_graph(filtered, u, Date(2030, 1, 1)) == g);
  }
}

TEST_CASE("adjacency mask and induced subgraph") {
  const std::vector<RelationRecord> recs = {{"Q1", "P127", "Q3", kStart}};
  const auto g = build_graph(recs, abc_universe(), kStart);
  const auto mask = g.adjacency_mask();
  // AAA(0) - CCC(2)
  CHECK(mask == ad::Mask{true, false, true, false, true, false, true, false, true});

  const std::vector<std::string> order = {"CCC", "AAA"};
  const auto sub = g.induced(order);
  CHECK(sub.nodes() == order);
  CHECK(sub.has_edge(0, 1));
  const std::vector<std::string> unknown = {"ZZZ"};
  CHECK_THROWS_AS(g.induced(unknown), std::out_of_range);
  CHECK(g.without_edges().edge_count() == 0);
}

TEST_CASE("snapshot_for_date") {
  std::vector<StockGraph> snaps;
  for (int y : {2019, 2020, 2021}) snaps.push_back(build_graph({}, abc_universe(), Date(y, 1, 1)));
  CHECK(snapshot_for_date(snaps, Date(2019, 6, 1)).snapshot_date() == Date(2019, 1, 1));
  CHECK(snapshot_for_date(snaps, Date(2020, 1, 1)).snapshot_date() == Date(2020, 1, 1));
  CHECK(snapshot_for_date(snaps, Date(2021, 12, 1)).snapshot_date() == Date(2021, 1, 1));
  CHECK_THROWS_AS(snapshot_for_date(snaps, Date(2018, 12, 31)), NoSnapshotError);

  // Linear-scan oracle over many query dates.
  for (int k = 0; k < 1200; k += 7) {
    const Date q = Date(2019, 1, 1).plus_days(k);
    Date want = snaps.front().snapshot_date();
    for (const auto& s : snaps)
      if (s.snapshot_date() <= q) want = s.snapshot_date();
    CHECK(snapshot_for_date(snaps, q).snapshot_date() == want);
  }
}

TEST_CASE("relations and universe CSV round trip; graph export lists edges") {
  test_support::TempDir dir("graph");
  Rng rng(4);
  const auto recs = random_records(rng, 8, 12);
  write_relations_csv(dir / "r.csv", recs);
  const auto back = read_relations_csv(dir / "r.csv");
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].subject == recs[i].subject);
    CHECK(back[i].property == recs[i].property);
    CHECK(back[i].object == recs[i].object);
    CHECK(back[i].valid_from == recs[i].valid_from);
  }
  const auto u = universe_of(5);
  write_universe_csv(dir / "u.csv", u);
  CHECK(read_universe_csv(dir / "u.csv").tickers() == u.tickers());

  const std::vector<RelationRecord> one = {{"Q1", "P127", "Q2", kStart}};
  const auto text = build_graph(one, abc_universe(), kStart).to_text();
  CHECK(text.find("snapshot_date 2019-01-01") != std::string::npos);
  CHECK(text.find("edge 0 1 first | AAA -P127-> BBB") != std::string::npos);
}
