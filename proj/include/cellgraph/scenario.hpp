#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cellgraph {

inline constexpr int kScenarioSchemaVersion = 1;

/// Carrier frequencies a cell may be configured on. The one-hot carrier
/// encoding follows this order.
inline constexpr std::array<int, 3> kCarriersMhz{800, 2100, 2600};

/// Width of the per-cell configuration vector produced by encode_cell():
/// [sin(az), cos(az), tilt, height, beamwidth, tx_power, onehot(carrier)...]
inline constexpr int kCellFeatureDim = 6 + static_cast<int>(kCarriersMhz.size());

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Bounds {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  bool contains(const Eigen::Vector2d& p) const {
    return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax;
  }
  bool operator==(const Bounds&) const = default;
};

/// One eUtran cell: a sector of a site on a single carrier.
struct Cell {
  std::string cell_id;
  std::string site_id;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();  // meters, local planar frame
  double azimuth_deg = 0.0;  // compass: 0 = north (+y), clockwise
  double mech_tilt_deg = 0.0;
  double antenna_height_m = 30.0;
  double h_beamwidth_deg = 65.0;
  int carrier_mhz = 2100;
  double tx_power_dbm = 43.0;

  /// One-hot over kCarriersMhz.
  std::array<double, kCarriersMhz.size()> carrier_onehot() const;

  bool operator==(const Cell&) const = default;
};

struct Scenario {
  std::string name;
  std::vector<Cell> cells;  // sorted by cell_id
  Bounds bounds;
  double grid_resolution_m = 100.0;

  /// Index of cell_id in `cells`, or -1.
  int index_of(const std::string& cell_id) const;
  bool operator==(const Scenario&) const = default;
};

/// Index of `mhz` within kCarriersMhz, or -1 for an unsupported carrier.
int carrier_index(int mhz);

/// Checks every Cell/Scenario invariant and sorts cells by cell_id.
/// Throws ValidationError naming the offending cell and field.
void validate(Scenario& scenario);

/// Configuration vector x_i, layout documented at kCellFeatureDim.
Eigen::VectorXd encode_cell(const Cell& cell);

Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario_json(const std::string& text);
Scenario parse_scenario_csv(const std::string& text, const std::string& name, const Bounds& bounds,
                            double grid_resolution_m);
std::string to_json(const Scenario& scenario);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

struct GenerateParams {
  int n_sites = 20;
  int sectors_per_site = 3;
  std::vector<int> carriers{2100};
  Bounds bounds{0.0, 0.0, 10000.0, 10000.0};
  double grid_resolution_m = 100.0;
  std::uint64_t seed = 1;
  std::string name = "synthetic";
};

inline constexpr double kMinInterSiteDistanceM = 500.0;
inline constexpr int kMaxPlacementAttempts = 10000;

/// Seeded random multi-site deployment. Pure function of `params`.
Scenario generate_scenario(const GenerateParams& params);

}  // namespace cellgraph
