#include "geometry_oracle.hpp"
#include "radio_reference.hpp"
#include "support.hpp"

#include "cellgraph/graph_builder.hpp"

#include <doctest.h>

#include <set>

using namespace cellgraph;
using doctest::Approx;

namespace {

CellGraph graph_of(const Scenario& s, bool include_m = false) {
  BuildOptions o;
  o.include_m = include_m;
  return build_graph(s, simulate(s), o);
}

const Edge* find_edge(const CellGraph& g, const std::string& a, const std::string& b) {
  for (const Edge& e : g.edges)
    if (g.nodes[static_cast<std::size_t>(e.src)] == a && g.nodes[static_cast<std::size_t>(e.dst)] == b) return &e;
  return nullptr;
}

Scenario generated(int sites, std::vector<int> carriers, std::uint64_t seed, double size = 8000.0) {
  GenerateParams p;
  p.n_sites = sites;
  p.carriers = std::move(carriers);
  p.bounds = {0, 0, size, size};
  p.seed = seed;
  return generate_scenario(p);
}

}  // namespace

TEST_SUITE("graph_builder") {

TEST_CASE("same-carrier cells 25 km apart share no edge") {
  const Scenario s = testutil::make_scenario(
      {testutil::make_cell("A", "S1", 1000, 1000, 90.0), testutil::make_cell("B", "S2", 26000, 1000, 270.0)},
      {0, 0, 27000, 2000});
  CHECK(graph_of(s).edges.empty());
}

TEST_CASE("co-sited same-azimuth cells on different carriers complement each other") {
  const Scenario s = testutil::make_scenario({testutil::make_cell("A", "S", 2000, 2000, 45.0, 65.0, 800),
                                              testutil::make_cell("B", "S", 2000, 2000, 45.0, 65.0, 2100)},
                                             {0, 0, 4000, 4000});
  const CellGraph g = graph_of(s);
  REQUIRE(g.num_edges() == 2);
  for (const Edge* e : {find_edge(g, "A", "B"), find_edge(g, "B", "A")}) {
    REQUIRE(e != nullptr);
    CHECK(e->attr.relation == Relation::complementing);
    CHECK(e->attr.distance_m == 0.0);
    CHECK(e->attr.relation_onehot() == std::array<double, 3>{0.0, 1.0, 0.0});
  }
}

TEST_CASE("edge strengths match an independent per-pixel recount") {
  const Scenario s = generated(3, {2100}, 11, 5000.0);
  const OracleResult r = simulate(s);
  const CellGraph g = build_graph(s, r, {});
  REQUIRE(g.num_edges() > 0);
  const CoverageMap& m = r.map;
  for (const Edge& e : g.edges) {
    const Cell& ci = s.cells[static_cast<std::size_t>(e.src)];
    const Cell& cj = s.cells[static_cast<std::size_t>(e.dst)];
    const testutil::RefSector sector_i{ci.position.x(), ci.position.y(), ci.azimuth_deg, ci.h_beamwidth_deg / 2.0,
                                       10000.0};
    int served = 0, within = 0, inside = 0;
    for (int p = 0; p < m.pixel_count(); ++p) {
      if (m.serving[0](p) != e.dst) continue;
      ++served;
      const Eigen::Vector2d c = m.pixel_center(p);
      if (testutil::oracle::power(ci, c.x(), c.y()) >= testutil::oracle::power(cj, c.x(), c.y()) - 12.0) ++within;
      if (sector_i.inside(c.x(), c.y())) ++inside;
    }
    REQUIRE(served > 0);
    const double interfering = static_cast<double>(within) / served;
    const double complementing = static_cast<double>(inside) / served;
    if (ci.site_id == cj.site_id) {
      CHECK(e.attr.relation == Relation::both);
      CHECK(e.attr.strength == Approx(std::max(interfering, complementing)).epsilon(1e-12));
    } else {
      CHECK(e.attr.relation == Relation::interfering);
      CHECK(e.attr.strength == Approx(interfering).epsilon(1e-12));
    }
    CHECK(e.attr.distance_m == Approx((ci.position - cj.position).norm()));
  }
}

TEST_CASE("strength is directional") {
  const Scenario s = testutil::make_scenario(
      {testutil::make_cell("BIG", "S1", 1000, 2000, 90.0, 90.0, 2100, 46.0),
       testutil::make_cell("SMALL", "S2", 2500, 2000, 270.0, 65.0, 2100, 30.0)},
      {0, 0, 4000, 4000});
  const CellGraph g = graph_of(s);
  const Edge* big_to_small = find_edge(g, "BIG", "SMALL");
  const Edge* small_to_big = find_edge(g, "SMALL", "BIG");
  REQUIRE(big_to_small != nullptr);
  REQUIRE(small_to_big != nullptr);
  CHECK(std::abs(big_to_small->attr.strength - small_to_big->attr.strength) > 0.1);
}

TEST_CASE("measurement columns add exactly four features") {
  const Scenario s = load_scenario(testutil::data_dir() / "scenario57.json");
  const OracleResult r = simulate(s);
  BuildOptions with_m;
  with_m.include_m = true;
  const CellGraph a = build_graph(s, r, {}), b = build_graph(s, r, with_m);
  CHECK(b.node_features.cols() == a.node_features.cols() + 4);
  CHECK_FALSE(a.has_measurement_columns());
  CHECK(b.has_measurement_columns());
  CHECK(b.feature_names.back() == "m_rssi_bad");
  CHECK(a.labels.size() == 2);
}

TEST_CASE("a 120-cell graph is valid and standardized on the training mask") {
  const Scenario s = generated(40, {2100}, 3, 10000.0);
  REQUIRE(s.cells.size() == 120);
  const CellGraph g = graph_of(s);
  CHECK_NOTHROW(g.validate());
  CHECK(g.masks.train.size() == 96);
  CHECK(g.masks.test.size() == 24);
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(g.node_features.cols());
  for (int v : g.masks.train) mean += g.node_features.row(v);
  mean /= 96.0;
  // Constant columns (single carrier, fixed beamwidth) stay at zero after centering.
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-9);
  for (const Edge& e : g.edges) CHECK(find_edge(g, g.nodes[static_cast<std::size_t>(e.dst)], g.nodes[static_cast<std::size_t>(e.src)]) != nullptr);
}

TEST_CASE("carrier rule: interference never crosses carriers") {
  const Scenario s = generated(8, {800, 2100}, 5, 6000.0);
  const CellGraph g = graph_of(s);
  int complementing = 0;
  for (const Edge& e : g.edges) {
    const bool same = s.cells[static_cast<std::size_t>(e.src)].carrier_mhz == s.cells[static_cast<std::size_t>(e.dst)].carrier_mhz;
    CHECK(same == (e.attr.relation != Relation::complementing));
    complementing += e.attr.relation == Relation::complementing;
  }
  CHECK(complementing > 0);
}

TEST_CASE("split sizes and determinism") {
  const Masks a = split_nodes(120, 4), b = split_nodes(120, 4);
  CHECK(a.train == b.train);
  CHECK(a.train.size() == 96);
  std::set<int> all(a.train.begin(), a.train.end());
  all.insert(a.test.begin(), a.test.end());
  CHECK(all.size() == 120);
  CHECK(split_nodes(5, 1).train.size() == 4);
  CHECK(split_nodes(120, 5).train != a.train);
}

TEST_CASE("identical inputs give identical graphs and JSON round-trips") {
  const Scenario s = load_scenario(testutil::data_dir() / "scenario57.json");
  const std::string a = to_json(graph_of(s)), b = to_json(graph_of(s));
  CHECK(a == b);
  const CellGraph back = graph_from_json(a);
  CHECK(to_json(back) == a);
  CHECK(back.node_features == graph_of(s).node_features);
  const std::string csv = geometry_table_csv(back);
  CHECK(csv.rfind("src,dst,ia,id_m,ic_x,ic_y,target_ia,target_id\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == back.num_edges() + 1);
}

TEST_CASE("malformed graphs are rejected") {
  const Scenario s = load_scenario(testutil::data_dir() / "scenario57.json");
  CellGraph g = graph_of(s);
  REQUIRE(g.num_edges() > 0);
  CHECK_THROWS_AS(graph_from_json("{\"schema_version\": 2}"), ParseError);
  CHECK_THROWS_AS(graph_from_json("not json"), ParseError);
  CellGraph loop = g;
  loop.edges[0].dst = loop.edges[0].src;
  CHECK_THROWS_AS(loop.validate(), ValidationError);
  CellGraph one_way = g;
  one_way.edges.erase(one_way.edges.begin());
  CHECK_THROWS_AS(one_way.validate(), ValidationError);
  CellGraph overlap = g;
  overlap.masks.test.push_back(overlap.masks.train.front());
  CHECK_THROWS_AS(overlap.validate(), ValidationError);
  OracleResult short_oracle = simulate(s);
  short_oracle.z_sinr.pop_back();
  CHECK_THROWS_AS(build_graph(s, short_oracle, {}), ValidationError);
}

TEST_CASE("edge features and pretext targets") {
  const CellGraph g = graph_of(load_scenario(testutil::data_dir() / "scenario57.json"));
  const Eigen::MatrixXd plain = g.edge_features(), geo = g.edge_features(true);
  CHECK(plain.cols() == kEdgeFeatureDim);
  CHECK(geo.cols() == kEdgeFeatureDim + kGeomEdgeFeatureDim);
  CHECK(geo.col(5) == g.pretext_targets("ia"));
  CHECK(geo.col(6) == g.pretext_targets("id"));
  CHECK(plain.leftCols(3).rowwise().sum().isOnes());
  CHECK_THROWS_AS(g.pretext_targets("ic"), ValidationError);
  // Reverse edges carry identical geometric targets.
  for (const Edge& e : g.edges) {
    const Edge* back = find_edge(g, g.nodes[static_cast<std::size_t>(e.dst)], g.nodes[static_cast<std::size_t>(e.src)]);
    CHECK(back->geom.target_ia == e.geom.target_ia);
    CHECK(back->geom.target_id == e.geom.target_id);
  }
}

}  // TEST_SUITE
