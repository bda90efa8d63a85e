#include "cellgraph/radio_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

namespace cellgraph {

const char* to_string(Kpi kpi) {
  switch (kpi) {
    case Kpi::sinr: return "sinr";
    case Kpi::cqi: return "cqi";
    case Kpi::rssi: return "rssi";
  }
  return "?";
}

Kpi kpi_from_string(const std::string& s) {
  if (s == "sinr") return Kpi::sinr;
  if (s == "cqi") return Kpi::cqi;
  if (s == "rssi") return Kpi::rssi;
  throw ValidationError("unknown kpi '" + s + "'");
}

namespace radio {

double bearing_deg(const Eigen::Vector2d& from, const Eigen::Vector2d& to) {
  const Eigen::Vector2d d = to - from;
  double b = std::atan2(d.x(), d.y()) * 180.0 / std::numbers::pi;
  if (b < 0.0) b += 360.0;
  return b;
}

double received_power_dbm(const Cell& cell, const Eigen::Vector2d& point) {
  const double d = (point - cell.position).norm();
  const double bearing_off = wrap_deg(bearing_deg(cell.position, point) - cell.azimuth_deg);
  const double elevation =
      std::atan2(cell.antenna_height_m - kUeHeightM, std::max(d, 1.0)) * 180.0 / std::numbers::pi;
  const double tilt_off = wrap_deg(elevation - cell.mech_tilt_deg);
  return cell.tx_power_dbm + kSystemGainDb + antenna_gain_db(bearing_off, tilt_off, cell.h_beamwidth_deg) -
         path_loss_db(d, static_cast<double>(cell.carrier_mhz));
}

int cqi_from_sinr(double sinr_db) {
  const double q = std::floor((sinr_db + 6.0) / 2.2) + 1.0;
  return static_cast<int>(std::clamp(q, 1.0, 15.0));
}

int bin_index(double value, const std::array<double, 3>& thresholds) {
  for (int k = 0; k < 3; ++k)
    if (value >= thresholds[static_cast<std::size_t>(k)]) return k;
  return 3;
}

}  // namespace radio

Eigen::Vector2d CoverageMap::pixel_center(int pixel) const {
  const int r = pixel / cols;
  const int c = pixel % cols;
  return {xmin + (c + 0.5) * resolution_m, ymin + (r + 0.5) * resolution_m};
}

int CoverageMap::carrier_slot(int mhz) const {
  auto it = std::find(carriers.begin(), carriers.end(), mhz);
  return it == carriers.end() ? -1 : static_cast<int>(it - carriers.begin());
}

const std::vector<KpiBins>& OracleResult::bins(Kpi kpi) const {
  switch (kpi) {
    case Kpi::sinr: return z_sinr;
    case Kpi::cqi: return z_cqi;
    case Kpi::rssi: return m_rssi;
  }
  return z_sinr;
}

double pixel_budget(const Scenario& s) {
  return std::ceil(s.bounds.width() / s.grid_resolution_m) * std::ceil(s.bounds.height() / s.grid_resolution_m);
}

OracleResult simulate(const Scenario& scenario) {
  const double budget = pixel_budget(scenario);
  if (budget > radio::kMaxPixels)
    throw ValidationError("simulate: grid needs " + std::to_string(static_cast<long long>(budget)) +
                          " pixels, budget is 4000000");

  OracleResult out;
  CoverageMap& map = out.map;
  map.cols = static_cast<int>(std::ceil(scenario.bounds.width() / scenario.grid_resolution_m));
  map.rows = static_cast<int>(std::ceil(scenario.bounds.height() / scenario.grid_resolution_m));
  map.resolution_m = scenario.grid_resolution_m;
  map.xmin = scenario.bounds.xmin;
  map.ymin = scenario.bounds.ymin;
  std::set<int> carriers;
  for (const Cell& c : scenario.cells) carriers.insert(c.carrier_mhz);
  map.carriers.assign(carriers.begin(), carriers.end());

  const int n_pix = map.pixel_count();
  const std::size_t n_cells = scenario.cells.size();
  std::vector<std::vector<int>> cells_on(map.carriers.size());
  for (std::size_t i = 0; i < n_cells; ++i)
    cells_on[static_cast<std::size_t>(map.carrier_slot(scenario.cells[i].carrier_mhz))].push_back(static_cast<int>(i));

  std::vector<Eigen::Matrix<double, 4, 1>> sinr_counts(n_cells, Eigen::Vector4d::Zero());
  std::vector<Eigen::Matrix<double, 4, 1>> cqi_counts(n_cells, Eigen::Vector4d::Zero());
  std::vector<Eigen::Matrix<double, 4, 1>> rssi_counts(n_cells, Eigen::Vector4d::Zero());
  out.served_pixels.assign(n_cells, 0);

  std::vector<double> power;
  for (std::size_t slot = 0; slot < map.carriers.size(); ++slot) {
    const auto& members = cells_on[slot];
    Eigen::VectorXi serving = Eigen::VectorXi::Constant(n_pix, -1);
    Eigen::VectorXd serving_p = Eigen::VectorXd::Constant(n_pix, std::nan(""));
    Eigen::VectorXd sinr = Eigen::VectorXd::Constant(n_pix, std::nan(""));
    Eigen::VectorXi cqi = Eigen::VectorXi::Zero(n_pix);
    power.resize(members.size());
    for (int p = 0; p < n_pix; ++p) {
      const Eigen::Vector2d pos = map.pixel_center(p);
      std::size_t best = 0;
      for (std::size_t k = 0; k < members.size(); ++k) {
        power[k] = radio::received_power_dbm(scenario.cells[static_cast<std::size_t>(members[k])], pos);
        if (power[k] > power[best]) best = k;  // lowest index wins ties
      }
      double interference_mw = std::pow(10.0, radio::kNoiseFloorDbm / 10.0);
      for (std::size_t k = 0; k < members.size(); ++k)
        if (k != best) interference_mw += std::pow(10.0, power[k] / 10.0);
      const double s = power[best] - 10.0 * std::log10(interference_mw);
      const int cell = members[best];
      serving(p) = cell;
      serving_p(p) = power[best];
      sinr(p) = s;
      cqi(p) = radio::cqi_from_sinr(s);
      const auto ci = static_cast<std::size_t>(cell);
      sinr_counts[ci](radio::bin_index(s, radio::kSinrThresholdsDb)) += 1.0;
      cqi_counts[ci](radio::bin_index(cqi(p), radio::kCqiThresholds)) += 1.0;
      rssi_counts[ci](radio::bin_index(power[best], radio::kRssiThresholdsDbm)) += 1.0;
      ++out.served_pixels[ci];
    }
    map.serving.push_back(std::move(serving));
    map.serving_power_dbm.push_back(std::move(serving_p));
    map.sinr_db.push_back(std::move(sinr));
    map.cqi.push_back(std::move(cqi));
  }

  auto to_bins = [&](const Eigen::Vector4d& counts, std::size_t i) {
    if (out.served_pixels[i] == 0) return KpiBins{0.0, 0.0, 0.0, 1.0};
    return KpiBins::from_vector(counts / static_cast<double>(out.served_pixels[i]));
  };
  for (std::size_t i = 0; i < n_cells; ++i) {
    out.z_sinr.push_back(to_bins(sinr_counts[i], i));
    out.z_cqi.push_back(to_bins(cqi_counts[i], i));
    out.m_rssi.push_back(to_bins(rssi_counts[i], i));
  }
  return out;
}

std::string kpi_table_csv(const Scenario& scenario, const OracleResult& result) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "cell_id,kpi,perfect,good,fair,bad\n";
  for (Kpi kpi : {Kpi::sinr, Kpi::cqi, Kpi::rssi}) {
    const auto& bins = result.bins(kpi);
    for (std::size_t i = 0; i < scenario.cells.size(); ++i) {
      const KpiBins& b = bins[i];
      os << scenario.cells[i].cell_id << ',' << to_string(kpi) << ',' << b.perfect << ',' << b.good << ','
         << b.fair << ',' << b.bad << '\n';
    }
  }
  return os.str();
}

std::string coverage_map_csv(const Scenario& scenario, const OracleResult& result) {
  const CoverageMap& map = result.map;
  std::ostringstream os;
  os << std::setprecision(10);
  os << "x,y,carrier_mhz,serving_cell,serving_power_dbm,sinr_db,cqi\n";
  for (std::size_t slot = 0; slot < map.carriers.size(); ++slot) {
    for (int p = 0; p < map.pixel_count(); ++p) {
      const int cell = map.serving[slot](p);
      if (cell < 0) continue;
      const Eigen::Vector2d c = map.pixel_center(p);
      os << c.x() << ',' << c.y() << ',' << map.carriers[slot] << ','
         << scenario.cells[static_cast<std::size_t>(cell)].cell_id << ',' << map.serving_power_dbm[slot](p) << ','
         << map.sinr_db[slot](p) << ',' << map.cqi[slot](p) << '\n';
    }
  }
  return os.str();
}

}  // namespace cellgraph
