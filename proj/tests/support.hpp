#pragma once

#include "cellgraph/models.hpp"
#include "cellgraph/scenario.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testutil {

inline std::filesystem::path data_dir() { return CELLGRAPH_TEST_DATA_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cellgraph_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Random directed graph without self-loops or duplicate edges.
inline cellgraph::models::GraphInput random_graph(int n, int node_dim, int edge_dim, int n_edges,
                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> src, dst;
  std::vector<std::pair<int, int>> seen;
  while (static_cast<int>(src.size()) < n_edges) {
    const int s = pick(rng), d = pick(rng);
    if (s == d || std::find(seen.begin(), seen.end(), std::make_pair(s, d)) != seen.end()) continue;
    seen.emplace_back(s, d);
    src.push_back(s);
    dst.push_back(d);
  }
  return cellgraph::models::make_input(random_matrix(n, node_dim, rng), src, dst,
                                       random_matrix(n_edges, edge_dim, rng));
}

inline cellgraph::Cell make_cell(const std::string& id, const std::string& site, double x, double y,
                                 double azimuth, double beamwidth = 65.0, int carrier = 2100,
                                 double power = 43.0) {
  cellgraph::Cell c;
  c.cell_id = id;
  c.site_id = site;
  c.position = {x, y};
  c.azimuth_deg = azimuth;
  c.h_beamwidth_deg = beamwidth;
  c.carrier_mhz = carrier;
  c.tx_power_dbm = power;
  c.mech_tilt_deg = 0.0;
  c.antenna_height_m = 30.0;
  return c;
}

inline cellgraph::Scenario make_scenario(std::vector<cellgraph::Cell> cells, cellgraph::Bounds bounds,
                                         double resolution = 100.0) {
  cellgraph::Scenario s;
  s.name = "fixture";
  s.cells = std::move(cells);
  s.bounds = bounds;
  s.grid_resolution_m = resolution;
  cellgraph::validate(s);
  return s;
}

}  // namespace testutil
