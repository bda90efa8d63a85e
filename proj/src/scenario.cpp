#include "cellgraph/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_set>

namespace cellgraph {

using ojson = nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

[[noreturn]] void fail(const Cell& c, const std::string& field, const std::string& why) {
  throw ValidationError("cell '" + c.cell_id + "' field '" + field + "': " + why);
}

double number_field(const ojson& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number())
    throw ParseError(where + ": missing or non-numeric '" + key + "'");
  return it->get<double>();
}

std::string string_field(const ojson& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing '" + key + "'");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw ParseError(where + ": '" + key + "' must be a string");
}

}  // namespace

std::array<double, kCarriersMhz.size()> Cell::carrier_onehot() const {
  std::array<double, kCarriersMhz.size()> out{};
  const int k = carrier_index(carrier_mhz);
  if (k >= 0) out[static_cast<std::size_t>(k)] = 1.0;
  return out;
}

int Scenario::index_of(const std::string& cell_id) const {
  auto it = std::lower_bound(cells.begin(), cells.end(), cell_id,
                             [](const Cell& c, const std::string& id) { return c.cell_id < id; });
  if (it == cells.end() || it->cell_id != cell_id) return -1;
  return static_cast<int>(it - cells.begin());
}

int carrier_index(int mhz) {
  for (std::size_t k = 0; k < kCarriersMhz.size(); ++k)
    if (kCarriersMhz[k] == mhz) return static_cast<int>(k);
  return -1;
}

void validate(Scenario& scenario) {
  const Bounds& b = scenario.bounds;
  if (!(std::isfinite(b.xmin) && std::isfinite(b.xmax) && std::isfinite(b.ymin) && std::isfinite(b.ymax)) ||
      !(b.xmax > b.xmin) || !(b.ymax > b.ymin))
    throw ValidationError("scenario '" + scenario.name + "': bounds must be a non-empty rectangle");
  if (!(scenario.grid_resolution_m > 0.0) || !std::isfinite(scenario.grid_resolution_m))
    throw ValidationError("scenario '" + scenario.name + "': grid_resolution_m must be positive");

  std::unordered_set<std::string> ids;
  std::map<std::string, Eigen::Vector2d> site_pos;
  for (const Cell& c : scenario.cells) {
    if (c.cell_id.empty()) fail(c, "cell_id", "empty");
    if (!ids.insert(c.cell_id).second) fail(c, "cell_id", "duplicate");
    if (c.site_id.empty()) fail(c, "site_id", "empty");
    if (!c.position.allFinite()) fail(c, "x/y", "not finite");
    if (!b.contains(c.position)) fail(c, "x/y", "outside scenario bounds");
    if (!(c.azimuth_deg >= 0.0 && c.azimuth_deg < 360.0)) fail(c, "azimuth_deg", "must be in [0,360)");
    if (!(c.h_beamwidth_deg > 0.0 && c.h_beamwidth_deg < 180.0))
      fail(c, "h_beamwidth_deg", "must be in (0,180)");
    if (!(c.tx_power_dbm >= 10.0 && c.tx_power_dbm <= 50.0)) fail(c, "tx_power_dbm", "must be in [10,50]");
    if (!std::isfinite(c.mech_tilt_deg)) fail(c, "mech_tilt_deg", "not finite");
    if (!(c.antenna_height_m > 0.0) || !std::isfinite(c.antenna_height_m))
      fail(c, "antenna_height_m", "must be positive");
    if (carrier_index(c.carrier_mhz) < 0) fail(c, "carrier_mhz", "unsupported carrier");
    auto [it, inserted] = site_pos.emplace(c.site_id, c.position);
    if (!inserted && it->second != c.position) fail(c, "x/y", "co-sited cells must share position");
  }
  std::sort(scenario.cells.begin(), scenario.cells.end(),
            [](const Cell& a, const Cell& c) { return a.cell_id < c.cell_id; });
}

Eigen::VectorXd encode_cell(const Cell& cell) {
  Eigen::VectorXd x(kCellFeatureDim);
  const double az = cell.azimuth_deg * std::numbers::pi / 180.0;
  x << std::sin(az), std::cos(az), cell.mech_tilt_deg, cell.antenna_height_m, cell.h_beamwidth_deg,
      cell.tx_power_dbm, 0.0, 0.0, 0.0;
  const auto onehot = cell.carrier_onehot();
  for (std::size_t k = 0; k < onehot.size(); ++k) x(6 + static_cast<Eigen::Index>(k)) = onehot[k];
  return x;
}

Scenario parse_scenario_json(const std::string& text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed scenario JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("scenario JSON must be an object");
  if (auto v = doc.find("schema_version"); v != doc.end()) {
    if (!v->is_number_integer() || v->get<int>() != kScenarioSchemaVersion)
      throw ParseError("scenario schema_version mismatch (expected " + std::to_string(kScenarioSchemaVersion) +
                       ")");
  }

  Scenario s;
  s.name = doc.value("name", std::string{});
  auto bounds = doc.find("bounds");
  if (bounds == doc.end() || !bounds->is_object()) throw ParseError("scenario: missing 'bounds'");
  s.bounds = {number_field(*bounds, "xmin", "bounds"), number_field(*bounds, "ymin", "bounds"),
              number_field(*bounds, "xmax", "bounds"), number_field(*bounds, "ymax", "bounds")};
  s.grid_resolution_m = number_field(doc, "grid_resolution_m", "scenario");
  auto cells = doc.find("cells");
  if (cells == doc.end() || !cells->is_array()) throw ParseError("scenario: missing 'cells' array");
  for (std::size_t i = 0; i < cells->size(); ++i) {
    const ojson& jc = (*cells)[i];
    const std::string where = "cells[" + std::to_string(i) + "]";
    if (!jc.is_object()) throw ParseError(where + ": not an object");
    Cell c;
    c.cell_id = string_field(jc, "cell_id", where);
    c.site_id = string_field(jc, "site_id", where);
    c.position = {number_field(jc, "x", where), number_field(jc, "y", where)};
    c.azimuth_deg = number_field(jc, "azimuth_deg", where);
    c.mech_tilt_deg = number_field(jc, "mech_tilt_deg", where);
    c.antenna_height_m = number_field(jc, "antenna_height_m", where);
    c.h_beamwidth_deg = number_field(jc, "h_beamwidth_deg", where);
    const double carrier = number_field(jc, "carrier_mhz", where);
    if (carrier != std::round(carrier)) throw ParseError(where + ": carrier_mhz must be an integer");
    c.carrier_mhz = static_cast<int>(carrier);
    c.tx_power_dbm = number_field(jc, "tx_power_dbm", where);
    s.cells.push_back(std::move(c));
  }
  validate(s);
  return s;
}

Scenario parse_scenario_csv(const std::string& text, const std::string& name, const Bounds& bounds,
                            double grid_resolution_m) {
  static const std::vector<std::string> kColumns{"cell_id", "site_id", "x", "y", "azimuth_deg",
                                                 "mech_tilt_deg", "antenna_height_m", "h_beamwidth_deg",
                                                 "carrier_mhz", "tx_power_dbm"};
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
      while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
      while (!field.empty() && field.front() == ' ') field.erase(field.begin());
      out.push_back(field);
    }
    return out;
  };
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("scenario CSV: empty file");
  const auto header = split(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const auto& name_ : kColumns)
    if (!col.count(name_)) throw ParseError("scenario CSV: missing column '" + name_ + "'");

  Scenario s;
  s.name = name;
  s.bounds = bounds;
  s.grid_resolution_m = grid_resolution_m;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const auto f = split(line);
    if (f.size() < header.size()) throw ParseError("scenario CSV line " + std::to_string(row) + ": too few fields");
    auto num = [&](const char* key) {
      try {
        std::size_t used = 0;
        const std::string& v = f[col[key]];
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
      } catch (const std::exception&) {
        throw ParseError("scenario CSV line " + std::to_string(row) + ": bad number in '" + key + "'");
      }
    };
    Cell c;
    c.cell_id = f[col["cell_id"]];
    c.site_id = f[col["site_id"]];
    c.position = {num("x"), num("y")};
    c.azimuth_deg = num("azimuth_deg");
    c.mech_tilt_deg = num("mech_tilt_deg");
    c.antenna_height_m = num("antenna_height_m");
    c.h_beamwidth_deg = num("h_beamwidth_deg");
    c.carrier_mhz = static_cast<int>(num("carrier_mhz"));
    c.tx_power_dbm = num("tx_power_dbm");
    s.cells.push_back(std::move(c));
  }
  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  if (path.extension() == ".csv") {
    // CSV carries cells only; the region is the cells' bounding box padded by 2 km.
    Scenario probe = parse_scenario_csv(text, path.stem().string(), {-1e12, -1e12, 1e12, 1e12}, 100.0);
    if (probe.cells.empty()) throw ValidationError("scenario CSV has no cells");
    Bounds b{1e300, 1e300, -1e300, -1e300};
    for (const Cell& c : probe.cells) {
      b.xmin = std::min(b.xmin, c.position.x());
      b.ymin = std::min(b.ymin, c.position.y());
      b.xmax = std::max(b.xmax, c.position.x());
      b.ymax = std::max(b.ymax, c.position.y());
    }
    probe.bounds = {b.xmin - 2000.0, b.ymin - 2000.0, b.xmax + 2000.0, b.ymax + 2000.0};
    return probe;
  }
  return parse_scenario_json(text);
}

std::string to_json(const Scenario& scenario) {
  ojson doc;
  doc["schema_version"] = kScenarioSchemaVersion;
  doc["name"] = scenario.name;
  doc["bounds"] = {{"xmin", scenario.bounds.xmin},
                   {"ymin", scenario.bounds.ymin},
                   {"xmax", scenario.bounds.xmax},
                   {"ymax", scenario.bounds.ymax}};
  doc["grid_resolution_m"] = scenario.grid_resolution_m;
  ojson cells = ojson::array();
  for (const Cell& c : scenario.cells) {
    cells.push_back({{"cell_id", c.cell_id},
                     {"site_id", c.site_id},
                     {"x", c.position.x()},
                     {"y", c.position.y()},
                     {"azimuth_deg", c.azimuth_deg},
                     {"mech_tilt_deg", c.mech_tilt_deg},
                     {"antenna_height_m", c.antenna_height_m},
                     {"h_beamwidth_deg", c.h_beamwidth_deg},
                     {"carrier_mhz", c.carrier_mhz},
                     {"tx_power_dbm", c.tx_power_dbm}});
  }
  doc["cells"] = std::move(cells);
  return doc.dump(2) + "\n";
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(scenario);
}

Scenario generate_scenario(const GenerateParams& p) {
  if (p.n_sites < 1) throw ValidationError("generate: n_sites must be >= 1");
  if (p.sectors_per_site < 1 || p.sectors_per_site > 3)
    throw ValidationError("generate: sectors_per_site must be 1, 2 or 3");
  if (p.carriers.empty()) throw ValidationError("generate: at least one carrier required");
  for (int mhz : p.carriers)
    if (carrier_index(mhz) < 0) throw ValidationError("generate: unsupported carrier " + std::to_string(mhz));

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> ux(p.bounds.xmin, p.bounds.xmax);
  std::uniform_real_distribution<double> uy(p.bounds.ymin, p.bounds.ymax);
  std::uniform_real_distribution<double> jitter(-10.0, 10.0);
  std::uniform_real_distribution<double> start(0.0, 360.0);
  std::uniform_real_distribution<double> tilt(0.0, 10.0);
  std::uniform_real_distribution<double> height(15.0, 45.0);
  std::uniform_real_distribution<double> power(40.0, 46.0);
  std::uniform_int_distribution<int> beam(0, 2);
  static constexpr std::array<double, 3> kBeamwidths{33.0, 65.0, 90.0};

  std::vector<Eigen::Vector2d> sites;
  int attempts = 0;
  while (static_cast<int>(sites.size()) < p.n_sites) {
    if (++attempts > kMaxPlacementAttempts)
      throw ValidationError("generate: could not place " + std::to_string(p.n_sites) +
                            " sites with 500 m spacing inside bounds");
    Eigen::Vector2d cand(ux(rng), uy(rng));
    bool ok = std::all_of(sites.begin(), sites.end(), [&](const Eigen::Vector2d& s) {
      return (s - cand).norm() >= kMinInterSiteDistanceM;
    });
    if (ok) sites.push_back(cand);
  }

  auto pad = [](int v, int width) {
    std::string s = std::to_string(v);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
  };

  Scenario s;
  s.name = p.name;
  s.bounds = p.bounds;
  s.grid_resolution_m = p.grid_resolution_m;
  const double spacing = 360.0 / p.sectors_per_site;
  for (int si = 0; si < p.n_sites; ++si) {
    const std::string site_id = "S" + pad(si, 3);
    const double base = start(rng);
    for (int k = 0; k < p.sectors_per_site; ++k) {
      double az = std::fmod(base + k * spacing + jitter(rng), 360.0);
      if (az < 0.0) az += 360.0;
      if (az >= 360.0) az = 0.0;
      const double bw = kBeamwidths[static_cast<std::size_t>(beam(rng))];
      const double t = tilt(rng);
      const double h = height(rng);
      for (int mhz : p.carriers) {
        Cell c;
        c.site_id = site_id;
        c.cell_id = site_id + "-" + std::to_string(k) + "-" + std::to_string(mhz);
        c.position = sites[static_cast<std::size_t>(si)];
        c.azimuth_deg = az;
        c.h_beamwidth_deg = bw;
        c.mech_tilt_deg = t;
        c.antenna_height_m = h;
        c.carrier_mhz = mhz;
        c.tx_power_dbm = power(rng);
        s.cells.push_back(std::move(c));
      }
    }
  }
  validate(s);
  return s;
}

}  // namespace cellgraph
