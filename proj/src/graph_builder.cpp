#include "cellgraph/graph_builder.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace cellgraph {

using ojson = nlohmann::ordered_json;

const char* to_string(Relation r) {
  switch (r) {
    case Relation::interfering: return "interfering";
    case Relation::complementing: return "complementing";
    case Relation::both: return "both";
  }
  return "?";
}

Relation relation_from_string(const std::string& s) {
  if (s == "interfering") return Relation::interfering;
  if (s == "complementing") return Relation::complementing;
  if (s == "both") return Relation::both;
  throw ParseError("unknown relation '" + s + "'");
}

std::array<double, 3> EdgeAttr::relation_onehot() const {
  std::array<double, 3> out{};
  out[static_cast<std::size_t>(relation)] = 1.0;
  return out;
}

std::vector<int> CellGraph::sources() const {
  std::vector<int> out;
  out.reserve(edges.size());
  for (const Edge& e : edges) out.push_back(e.src);
  return out;
}

std::vector<int> CellGraph::destinations() const {
  std::vector<int> out;
  out.reserve(edges.size());
  for (const Edge& e : edges) out.push_back(e.dst);
  return out;
}

Eigen::MatrixXd CellGraph::edge_features(bool with_geometry) const {
  const int width = kEdgeFeatureDim + (with_geometry ? kGeomEdgeFeatureDim : 0);
  Eigen::MatrixXd out(num_edges(), width);
  for (int k = 0; k < num_edges(); ++k) {
    const Edge& e = edges[static_cast<std::size_t>(k)];
    const auto oh = e.attr.relation_onehot();
    out(k, 0) = oh[0];
    out(k, 1) = oh[1];
    out(k, 2) = oh[2];
    out(k, 3) = e.attr.strength;
    out(k, 4) = e.attr.distance_m / geometry::kSectorRadiusM;
    if (with_geometry) {
      out(k, 5) = e.geom.target_ia;
      out(k, 6) = e.geom.target_id;
    }
  }
  return out;
}

Eigen::VectorXd CellGraph::pretext_targets(const std::string& pretext) const {
  Eigen::VectorXd out(num_edges());
  for (int k = 0; k < num_edges(); ++k) {
    const auto& g = edges[static_cast<std::size_t>(k)].geom;
    if (pretext == "ia")
      out(k) = g.target_ia;
    else if (pretext == "id")
      out(k) = g.target_id;
    else
      throw ValidationError("unknown pretext '" + pretext + "'");
  }
  return out;
}

bool CellGraph::has_measurement_columns() const {
  return std::any_of(feature_names.begin(), feature_names.end(),
                     [](const std::string& n) { return n.rfind("m_rssi_", 0) == 0; });
}

void CellGraph::validate() const {
  const int n = num_nodes();
  if (node_features.rows() != n || raw_features.rows() != n)
    throw ValidationError("graph: node feature rows != |V|");
  if (node_features.cols() != static_cast<Eigen::Index>(feature_names.size()) ||
      raw_features.cols() != node_features.cols())
    throw ValidationError("graph: feature width does not match feature names");
  if (includes_m != has_measurement_columns()) throw ValidationError("graph: includes_m flag disagrees with columns");
  std::set<std::pair<int, int>> pairs;
  for (const Edge& e : edges) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) throw ValidationError("graph: edge index out of range");
    if (e.src == e.dst) throw ValidationError("graph: self-loop on node " + nodes[static_cast<std::size_t>(e.src)]);
    if (!(e.attr.strength >= 0.0 && e.attr.strength <= 1.0)) throw ValidationError("graph: strength outside [0,1]");
    if (!(e.attr.distance_m >= 0.0)) throw ValidationError("graph: negative distance");
    if (!(e.geom.target_ia >= 0.0 && e.geom.target_ia <= 1.0 && e.geom.target_id >= 0.0 && e.geom.target_id <= 1.0))
      throw ValidationError("graph: pretext target outside [0,1]");
    if (!pairs.insert({e.src, e.dst}).second) throw ValidationError("graph: duplicate edge");
  }
  for (const auto& [s, d] : pairs)
    if (!pairs.count({d, s})) throw ValidationError("graph: edge without reverse direction");
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (const auto* mask : {&masks.train, &masks.test})
    for (int v : *mask) {
      if (v < 0 || v >= n) throw ValidationError("graph: mask index out of range");
      if (seen[static_cast<std::size_t>(v)]++) throw ValidationError("graph: masks overlap");
    }
  for (const auto& [kpi, z] : labels)
    if (z.rows() != n || z.cols() != 4) throw ValidationError(std::string("graph: bad label shape for ") + to_string(kpi));
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& raw, const Eigen::RowVectorXd& mean, const Eigen::RowVectorXd& sd) {
  if (raw.cols() != mean.cols() || raw.cols() != sd.cols())
    throw ValidationError("standardize: dimension mismatch");
  return ((raw.rowwise() - mean).array().rowwise() / sd.array()).matrix();
}

CellGraph with_statistics(CellGraph graph, const Eigen::RowVectorXd& mean, const Eigen::RowVectorXd& sd) {
  graph.node_features = standardize(graph.raw_features, mean, sd);
  graph.feature_mean = mean;
  graph.feature_std = sd;
  return graph;
}

Masks split_nodes(int n_nodes, std::uint64_t seed) {
  std::vector<int> perm(static_cast<std::size_t>(n_nodes));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(kTrainFraction * n_nodes + 0.5));
  Masks m;
  m.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  m.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(m.train.begin(), m.train.end());
  std::sort(m.test.begin(), m.test.end());
  return m;
}

namespace {

struct PairRelation {
  bool qualifies = false;
  Relation relation = Relation::interfering;
  double strength = 0.0;
};

}  // namespace

std::vector<Edge> derive_edges(const Scenario& scenario, const OracleResult& oracle, double grid_step_m) {
  const auto& cells = scenario.cells;
  const int n = static_cast<int>(cells.size());
  const CoverageMap& map = oracle.map;

  std::vector<std::vector<int>> served(static_cast<std::size_t>(n));
  for (std::size_t slot = 0; slot < map.carriers.size(); ++slot)
    for (int p = 0; p < map.pixel_count(); ++p)
      if (int c = map.serving[slot](p); c >= 0) served[static_cast<std::size_t>(c)].push_back(p);

  std::vector<geometry::Sector> sectors;
  for (const Cell& c : cells) sectors.push_back(geometry::sector_of(c));

  // Fraction of j's served pixels where i arrives within the interference window.
  auto interfering_strength = [&](int i, int j) {
    const auto& px = served[static_cast<std::size_t>(j)];
    if (px.empty()) return 0.0;
    const int slot = map.carrier_slot(cells[static_cast<std::size_t>(j)].carrier_mhz);
    int hit = 0;
    for (int p : px) {
      const double pi = radio::received_power_dbm(cells[static_cast<std::size_t>(i)], map.pixel_center(p));
      if (pi >= map.serving_power_dbm[static_cast<std::size_t>(slot)](p) - kInterferenceWindowDb) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(px.size());
  };
  // Fraction of j's served pixels inside i's sector.
  auto complementing_strength = [&](int i, int j) {
    const auto& px = served[static_cast<std::size_t>(j)];
    if (px.empty()) return 0.0;
    int hit = 0;
    for (int p : px)
      if (sectors[static_cast<std::size_t>(i)].contains(map.pixel_center(p))) ++hit;
    return static_cast<double>(hit) / static_cast<double>(px.size());
  };

  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Cell& ci = cells[static_cast<std::size_t>(i)];
      const Cell& cj = cells[static_cast<std::size_t>(j)];
      const bool same_carrier = ci.carrier_mhz == cj.carrier_mhz;
      const bool co_sited = ci.site_id == cj.site_id;
      PairRelation fwd, bwd;  // i->j, j->i
      if (same_carrier) {
        if (!geometry::sectors_overlap(sectors[static_cast<std::size_t>(i)], sectors[static_cast<std::size_t>(j)],
                                       grid_step_m))
          continue;
        fwd.strength = interfering_strength(i, j);
        bwd.strength = interfering_strength(j, i);
        fwd.relation = bwd.relation = Relation::interfering;
        if (co_sited) {
          // Adjacent same-carrier sectors of one site both interfere and continue coverage.
          fwd.relation = bwd.relation = Relation::both;
          fwd.strength = std::max(fwd.strength, complementing_strength(i, j));
          bwd.strength = std::max(bwd.strength, complementing_strength(j, i));
        }
        fwd.qualifies = fwd.strength > 0.0;
        bwd.qualifies = bwd.strength > 0.0;
      } else if (co_sited) {
        if (std::abs(radio::wrap_deg(ci.azimuth_deg - cj.azimuth_deg)) > kCoSectorWindowDeg) continue;
        fwd = {true, Relation::complementing, complementing_strength(i, j)};
        bwd = {true, Relation::complementing, complementing_strength(j, i)};
      } else {
        if (!geometry::sectors_overlap(sectors[static_cast<std::size_t>(i)], sectors[static_cast<std::size_t>(j)],
                                       grid_step_m))
          continue;
        fwd = {false, Relation::complementing, complementing_strength(i, j)};
        bwd = {false, Relation::complementing, complementing_strength(j, i)};
        fwd.qualifies = fwd.strength > 0.0;
        bwd.qualifies = bwd.strength > 0.0;
      }
      if (!fwd.qualifies && !bwd.qualifies) continue;
      const double dist = (ci.position - cj.position).norm();
      edges.push_back({i, j, {fwd.relation, fwd.strength, dist}, {}});
      edges.push_back({j, i, {bwd.relation, bwd.strength, dist}, {}});
    }
  }
  std::sort(edges.begin(), edges.end(),
            [](const Edge& a, const Edge& b) { return a.dst != b.dst ? a.dst < b.dst : a.src < b.src; });
  return edges;
}

CellGraph build_graph(const Scenario& scenario, const OracleResult& oracle, const BuildOptions& options) {
  const int n = static_cast<int>(scenario.cells.size());
  if (static_cast<int>(oracle.z_sinr.size()) != n || static_cast<int>(oracle.z_cqi.size()) != n ||
      static_cast<int>(oracle.m_rssi.size()) != n)
    throw ValidationError("build_graph: oracle outputs do not match scenario cell count");

  CellGraph g;
  g.includes_m = options.include_m;
  g.feature_names = {"azimuth_sin", "azimuth_cos", "tilt_deg", "height_m", "beamwidth_deg", "tx_power_dbm"};
  for (int mhz : kCarriersMhz) g.feature_names.push_back("carrier_" + std::to_string(mhz));
  if (options.include_m)
    for (const char* b : {"perfect", "good", "fair", "bad"}) g.feature_names.push_back(std::string("m_rssi_") + b);

  const int width = static_cast<int>(g.feature_names.size());
  g.raw_features.resize(n, width);
  for (int i = 0; i < n; ++i) {
    const Cell& c = scenario.cells[static_cast<std::size_t>(i)];
    g.nodes.push_back(c.cell_id);
    g.raw_features.row(i).head(kCellFeatureDim) = encode_cell(c).transpose();
    if (options.include_m) g.raw_features.row(i).tail(4) = oracle.m_rssi[static_cast<std::size_t>(i)].as_vector().transpose();
  }

  g.masks = split_nodes(n, options.split_seed);
  const auto& train = g.masks.train.empty() ? g.masks.test : g.masks.train;
  g.feature_mean = Eigen::RowVectorXd::Zero(width);
  for (int v : train) g.feature_mean += g.raw_features.row(v);
  g.feature_mean /= static_cast<double>(train.size());
  Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(width);
  for (int v : train) var += (g.raw_features.row(v) - g.feature_mean).cwiseAbs2();
  var /= static_cast<double>(train.size());
  g.feature_std = var.cwiseSqrt().unaryExpr([](double s) { return s > 1e-12 ? s : 1.0; });
  g.node_features = standardize(g.raw_features, g.feature_mean, g.feature_std);

  g.edges = derive_edges(scenario, oracle, options.grid_step_m);
  // Geometric features are symmetric, so compute once per unordered pair.
  std::map<std::pair<int, int>, geometry::GeomFeatures> cache;
  std::vector<double> sampled_area(static_cast<std::size_t>(n), -1.0);
  auto area_of = [&](int v) {
    double& a = sampled_area[static_cast<std::size_t>(v)];
    if (a < 0.0)
      a = geometry::sampled_sector_area(geometry::sector_of(scenario.cells[static_cast<std::size_t>(v)]),
                                        options.grid_step_m);
    return a;
  };
  for (Edge& e : g.edges) {
    const auto key = std::minmax(e.src, e.dst);
    auto it = cache.find(key);
    if (it == cache.end()) {
      const auto si = geometry::sector_of(scenario.cells[static_cast<std::size_t>(key.first)]);
      const auto sj = geometry::sector_of(scenario.cells[static_cast<std::size_t>(key.second)]);
      it = cache.emplace(key, geometry::edge_geometry(si, sj, options.grid_step_m, area_of(key.first), area_of(key.second)))
               .first;
    }
    e.geom = it->second;
  }

  Eigen::MatrixXd z_sinr(n, 4), z_cqi(n, 4);
  for (int i = 0; i < n; ++i) {
    z_sinr.row(i) = oracle.z_sinr[static_cast<std::size_t>(i)].as_vector().transpose();
    z_cqi.row(i) = oracle.z_cqi[static_cast<std::size_t>(i)].as_vector().transpose();
  }
  g.labels[Kpi::sinr] = std::move(z_sinr);
  g.labels[Kpi::cqi] = std::move(z_cqi);
  g.validate();
  return g;
}

namespace {

ojson matrix_json(const Eigen::MatrixXd& m) {
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const ojson& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw ParseError("graph: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = j[r][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Eigen::RowVectorXd row_from(const ojson& j) {
  Eigen::RowVectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  return v;
}

}  // namespace

std::string to_json(const CellGraph& g) {
  ojson doc;
  doc["schema_version"] = kGraphSchemaVersion;
  doc["nodes"] = g.nodes;
  doc["feature_names"] = g.feature_names;
  doc["includes_m"] = g.includes_m;
  doc["feature_mean"] = matrix_json(g.feature_mean)[0];
  doc["feature_std"] = matrix_json(g.feature_std)[0];
  doc["raw_features"] = matrix_json(g.raw_features);
  doc["node_features"] = matrix_json(g.node_features);
  ojson edges = ojson::array();
  for (const Edge& e : g.edges) {
    ojson geom = {{"ia", e.geom.ia}, {"id_m", e.geom.id_m}};
    geom["ic_x"] = e.geom.ic ? ojson(e.geom.ic->x()) : ojson(nullptr);
    geom["ic_y"] = e.geom.ic ? ojson(e.geom.ic->y()) : ojson(nullptr);
    geom["target_ia"] = e.geom.target_ia;
    geom["target_id"] = e.geom.target_id;
    edges.push_back({{"src", e.src},
                     {"dst", e.dst},
                     {"attr",
                      {{"relation", to_string(e.attr.relation)},
                       {"relation_onehot", e.attr.relation_onehot()},
                       {"strength", e.attr.strength},
                       {"distance_m", e.attr.distance_m}}},
                     {"geom", std::move(geom)}});
  }
  doc["edges"] = std::move(edges);
  ojson labels = ojson::object();
  for (const auto& [kpi, z] : g.labels) labels[to_string(kpi)] = matrix_json(z);
  doc["labels"] = std::move(labels);
  doc["masks"] = {{"train", g.masks.train}, {"test", g.masks.test}};
  return doc.dump() + "\n";
}

CellGraph graph_from_json(const std::string& text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed graph JSON: ") + e.what());
  }
  if (!doc.contains("schema_version") || doc["schema_version"] != kGraphSchemaVersion)
    throw ParseError("graph schema_version mismatch (expected " + std::to_string(kGraphSchemaVersion) + ")");
  try {
    CellGraph g;
    g.nodes = doc.at("nodes").get<std::vector<std::string>>();
    g.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    g.includes_m = doc.at("includes_m").get<bool>();
    const auto width = static_cast<Eigen::Index>(g.feature_names.size());
    g.feature_mean = row_from(doc.at("feature_mean"));
    g.feature_std = row_from(doc.at("feature_std"));
    g.raw_features = matrix_from(doc.at("raw_features"), width);
    g.node_features = matrix_from(doc.at("node_features"), width);
    for (const auto& je : doc.at("edges")) {
      Edge e;
      e.src = je.at("src").get<int>();
      e.dst = je.at("dst").get<int>();
      const auto& a = je.at("attr");
      e.attr.relation = relation_from_string(a.at("relation").get<std::string>());
      e.attr.strength = a.at("strength").get<double>();
      e.attr.distance_m = a.at("distance_m").get<double>();
      const auto& gm = je.at("geom");
      e.geom.ia = gm.at("ia").get<double>();
      e.geom.id_m = gm.at("id_m").get<double>();
      if (!gm.at("ic_x").is_null()) e.geom.ic = Eigen::Vector2d(gm.at("ic_x").get<double>(), gm.at("ic_y").get<double>());
      e.geom.target_ia = gm.at("target_ia").get<double>();
      e.geom.target_id = gm.at("target_id").get<double>();
      g.edges.push_back(e);
    }
    for (const auto& [name, z] : doc.at("labels").items()) g.labels[kpi_from_string(name)] = matrix_from(z, 4);
    g.masks.train = doc.at("masks").at("train").get<std::vector<int>>();
    g.masks.test = doc.at("masks").at("test").get<std::vector<int>>();
    g.validate();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("graph JSON: ") + e.what());
  }
}

void save_graph(const CellGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(graph);
}

CellGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return graph_from_json(ss.str());
}

std::string geometry_table_csv(const CellGraph& graph) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "src,dst,ia,id_m,ic_x,ic_y,target_ia,target_id\n";
  for (const Edge& e : graph.edges) {
    os << graph.nodes[static_cast<std::size_t>(e.src)] << ',' << graph.nodes[static_cast<std::size_t>(e.dst)] << ','
       << e.geom.ia << ',' << e.geom.id_m << ',';
    if (e.geom.ic)
      os << e.geom.ic->x() << ',' << e.geom.ic->y();
    else
      os << ',';
    os << ',' << e.geom.target_ia << ',' << e.geom.target_id << '\n';
  }
  return os.str();
}

}  // namespace cellgraph
