#pragma once

#include "cellgraph/geometry.hpp"
#include "cellgraph/radio_oracle.hpp"
#include "cellgraph/scenario.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cellgraph {

inline constexpr int kGraphSchemaVersion = 1;
/// Received-power window for the interfering strength, dB.
inline constexpr double kInterferenceWindowDb = 12.0;
/// Azimuth window for co-sited capacity layering, degrees.
inline constexpr double kCoSectorWindowDeg = 30.0;
inline constexpr double kTrainFraction = 0.8;
/// Model-side edge features: relation one-hot, strength, distance / 10 km.
inline constexpr int kEdgeFeatureDim = 5;
/// Extra edge columns when geometric features are attached as inputs.
inline constexpr int kGeomEdgeFeatureDim = 2;

enum class Relation { interfering = 0, complementing = 1, both = 2 };
const char* to_string(Relation r);
Relation relation_from_string(const std::string& s);

struct EdgeAttr {
  Relation relation = Relation::interfering;
  double strength = 0.0;
  double distance_m = 0.0;

  std::array<double, 3> relation_onehot() const;
};

struct Edge {
  int src = 0;
  int dst = 0;
  EdgeAttr attr;
  geometry::GeomFeatures geom;
};

struct Masks {
  std::vector<int> train;
  std::vector<int> test;
};

/// Attributed directed graph G(V, E, X, Y, M, O) with per-node labels Z.
struct CellGraph {
  std::vector<std::string> nodes;
  std::vector<std::string> feature_names;
  bool includes_m = false;
  Eigen::MatrixXd raw_features;   // |V| x F
  Eigen::MatrixXd node_features;  // standardized
  Eigen::RowVectorXd feature_mean;
  Eigen::RowVectorXd feature_std;
  std::vector<Edge> edges;
  std::map<Kpi, Eigen::MatrixXd> labels;  // |V| x 4 per KPI
  Masks masks;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  std::vector<int> sources() const;
  std::vector<int> destinations() const;
  /// |E| x kEdgeFeatureDim, plus kGeomEdgeFeatureDim columns when requested.
  Eigen::MatrixXd edge_features(bool with_geometry = false) const;
  /// Pretext targets per edge, |E| x 1.
  Eigen::VectorXd pretext_targets(const std::string& pretext) const;
  bool has_measurement_columns() const;

  /// Throws ValidationError if any structural invariant fails.
  void validate() const;
};

/// Standardizes `raw` with the given statistics.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& raw, const Eigen::RowVectorXd& mean,
                            const Eigen::RowVectorXd& std);
/// Re-standardizes a graph's node features with foreign statistics (inductive transfer).
CellGraph with_statistics(CellGraph graph, const Eigen::RowVectorXd& mean, const Eigen::RowVectorXd& std);

/// Seeded 80/20 node split; train size = round(0.8 |V|).
Masks split_nodes(int n_nodes, std::uint64_t seed);

/// Directed inter-cell relations with strength and distance.
std::vector<Edge> derive_edges(const Scenario& scenario, const OracleResult& oracle,
                               double grid_step_m = geometry::kDefaultGridStepM);

struct BuildOptions {
  bool include_m = false;
  std::uint64_t split_seed = 1;
  double grid_step_m = geometry::kDefaultGridStepM;
};

CellGraph build_graph(const Scenario& scenario, const OracleResult& oracle, const BuildOptions& options);

std::string to_json(const CellGraph& graph);
CellGraph graph_from_json(const std::string& text);
void save_graph(const CellGraph& graph, const std::filesystem::path& path);
CellGraph load_graph(const std::filesystem::path& path);
/// src,dst,ia,id_m,ic_x,ic_y,target_ia,target_id
std::string geometry_table_csv(const CellGraph& graph);

}  // namespace cellgraph
