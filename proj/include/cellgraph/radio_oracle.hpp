#pragma once

#include "cellgraph/scenario.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace cellgraph {

/// Perfect/Good/Fair/Bad area fractions of one cell for one KPI.
struct KpiBins {
  double perfect = 0.0;
  double good = 0.0;
  double fair = 0.0;
  double bad = 1.0;

  Eigen::Vector4d as_vector() const { return {perfect, good, fair, bad}; }
  static KpiBins from_vector(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
  double sum() const { return perfect + good + fair + bad; }
  bool operator==(const KpiBins&) const = default;
};

enum class Kpi { sinr, cqi, rssi };
const char* to_string(Kpi kpi);
Kpi kpi_from_string(const std::string& s);

namespace radio {

inline constexpr double kReferenceDistanceM = 1000.0;
inline constexpr double kPathLossExponent = 3.5;
inline constexpr double kPeakGainDbi = 15.0;
inline constexpr double kMaxAttenuationDb = 25.0;
inline constexpr double kVerticalBeamwidthDeg = 10.0;
/// Fixed link-budget term added to every received-power evaluation on top of
/// the antenna pattern gain.
inline constexpr double kSystemGainDb = 15.0;
inline constexpr double kNoiseFloorDbm = -110.0;
inline constexpr double kUeHeightM = 1.5;
inline constexpr double kMaxPixels = 4.0e6;

// Bin thresholds, lower edge of Perfect / Good / Fair.
inline constexpr std::array<double, 3> kSinrThresholdsDb{20.0, 10.0, 0.0};
inline constexpr std::array<double, 3> kCqiThresholds{12.0, 9.0, 5.0};
inline constexpr std::array<double, 3> kRssiThresholdsDbm{-80.0, -95.0, -105.0};

/// Log-distance path loss: free space up to 1 km, exponent 3.5 beyond.
/// Distances below 1 m are clamped to 1 m.
template <typename Scalar>
Scalar path_loss_db(Scalar d_m, Scalar f_mhz) {
  using std::log10;
  using std::max;
  const Scalar d = max(d_m, Scalar(1));
  const Scalar ref = Scalar(32.45) + Scalar(20) * log10(f_mhz) + Scalar(20) * log10(Scalar(kReferenceDistanceM / 1000.0));
  const Scalar n = d > Scalar(kReferenceDistanceM) ? Scalar(kPathLossExponent) : Scalar(2);
  return ref + Scalar(10) * n * log10(d / Scalar(kReferenceDistanceM));
}

/// Parabolic horizontal+vertical pattern with 15 dBi peak and 25 dB floor.
template <typename Scalar>
Scalar antenna_gain_db(Scalar bearing_offset_deg, Scalar tilt_offset_deg, Scalar h_beamwidth_deg) {
  using std::min;
  const Scalar h = bearing_offset_deg / h_beamwidth_deg;
  const Scalar v = tilt_offset_deg / Scalar(kVerticalBeamwidthDeg);
  const Scalar att = min(Scalar(12) * h * h + Scalar(12) * v * v, Scalar(kMaxAttenuationDb));
  return Scalar(kPeakGainDbi) - att;
}

/// Wraps an angle in degrees into [-180, 180].
template <typename Scalar>
Scalar wrap_deg(Scalar a) {
  using std::fmod;
  a = fmod(a + Scalar(180), Scalar(360));
  if (a < Scalar(0)) a += Scalar(360);
  return a - Scalar(180);
}

/// Compass bearing (0 = north, clockwise) from `from` to `to`, degrees.
double bearing_deg(const Eigen::Vector2d& from, const Eigen::Vector2d& to);

/// Received power at a ground point: tx + system gain + antenna pattern - path loss.
double received_power_dbm(const Cell& cell, const Eigen::Vector2d& point);

/// Affine SINR -> CQI quantization clamped to 1..15.
int cqi_from_sinr(double sinr_db);

/// Index into {perfect, good, fair, bad} for a value and descending thresholds.
int bin_index(double value, const std::array<double, 3>& thresholds);

}  // namespace radio

/// Per-pixel coverage over a regular grid. Pixel (col,row) is centered at
/// (xmin + (col+0.5)*res, ymin + (row+0.5)*res); pixels are stored row-major.
struct CoverageMap {
  int cols = 0;
  int rows = 0;
  double resolution_m = 0.0;
  double xmin = 0.0;
  double ymin = 0.0;
  std::vector<int> carriers;  // carriers present in the scenario, ascending
  // Indexed [carrier slot][pixel]; serving cell index into scenario.cells or -1.
  std::vector<Eigen::VectorXi> serving;
  std::vector<Eigen::VectorXd> serving_power_dbm;
  std::vector<Eigen::VectorXd> sinr_db;
  std::vector<Eigen::VectorXi> cqi;

  int pixel_count() const { return cols * rows; }
  Eigen::Vector2d pixel_center(int pixel) const;
  int carrier_slot(int mhz) const;
};

struct OracleResult {
  CoverageMap map;
  // Indexed like scenario.cells.
  std::vector<KpiBins> z_sinr;
  std::vector<KpiBins> z_cqi;
  std::vector<KpiBins> m_rssi;
  std::vector<int> served_pixels;

  const std::vector<KpiBins>& bins(Kpi kpi) const;
};

/// Pixel count the scenario grid will need.
double pixel_budget(const Scenario& scenario);

/// Runs the propagation model over the scenario grid. Throws ValidationError
/// if the grid exceeds radio::kMaxPixels.
OracleResult simulate(const Scenario& scenario);

/// Per-cell KPI table: cell_id,kpi,perfect,good,fair,bad.
std::string kpi_table_csv(const Scenario& scenario, const OracleResult& result);
/// Per-pixel dump: x,y,carrier_mhz,serving_cell,serving_power_dbm,sinr_db,cqi.
std::string coverage_map_csv(const Scenario& scenario, const OracleResult& result);

}  // namespace cellgraph
