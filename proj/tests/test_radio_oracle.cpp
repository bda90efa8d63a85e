#include "radio_reference.hpp"
#include "support.hpp"

#include "cellgraph/radio_oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace cellgraph;
using doctest::Approx;

namespace {

Scenario random_scenario(std::uint64_t seed, int sites, std::vector<int> carriers, double size = 4000.0,
                         double res = 100.0) {
  GenerateParams p;
  p.n_sites = sites;
  p.sectors_per_site = 3;
  p.carriers = std::move(carriers);
  p.bounds = {0, 0, size, size};
  p.grid_resolution_m = res;
  p.seed = seed;
  return generate_scenario(p);
}

}  // namespace

TEST_SUITE("radio_oracle") {

TEST_CASE("path loss closed forms") {
  CHECK(radio::path_loss_db(1000.0, 2100.0) == Approx(32.45 + 20.0 * std::log10(2100.0)));
  CHECK(radio::path_loss_db(1000.0, 2100.0) == Approx(98.89).epsilon(1e-4));
  CHECK(radio::path_loss_db(10000.0, 2100.0) == Approx(133.89).epsilon(1e-4));
  CHECK(radio::path_loss_db(0.2, 800.0) == radio::path_loss_db(1.0, 800.0));
  CHECK(radio::path_loss_db(500.0, 800.0) == Approx(testutil::oracle::path_loss(500.0, 800.0)));
}

TEST_CASE("path loss is monotone in distance") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.0, 30000.0);
  for (int k = 0; k < 10000; ++k) {
    double a = d(rng), b = d(rng);
    if (a > b) std::swap(a, b);
    for (double f : {800.0, 2100.0, 2600.0}) CHECK(radio::path_loss_db(a, f) <= radio::path_loss_db(b, f));
  }
}

TEST_CASE("antenna pattern examples") {
  CHECK(radio::antenna_gain_db(0.0, 0.0, 65.0) == 15.0);
  CHECK(radio::antenna_gain_db(32.5, 0.0, 65.0) == Approx(12.0));
  CHECK(radio::antenna_gain_db(180.0, 0.0, 65.0) == Approx(-10.0));
  CHECK(radio::antenna_gain_db(0.0, 5.0, 90.0) == Approx(12.0));
  CHECK(radio::antenna_gain_db(-20.0, 0.0, 65.0) == radio::antenna_gain_db(20.0, 0.0, 65.0));
}

TEST_CASE("compass bearings and wrapping") {
  const Eigen::Vector2d o(0, 0);
  CHECK(radio::bearing_deg(o, {0, 10}) == Approx(0.0));
  CHECK(radio::bearing_deg(o, {10, 0}) == Approx(90.0));
  CHECK(radio::bearing_deg(o, {0, -10}) == Approx(180.0));
  CHECK(radio::bearing_deg(o, {-10, 0}) == Approx(270.0));
  CHECK(radio::wrap_deg(270.0) == Approx(-90.0));
  CHECK(radio::wrap_deg(-190.0) == Approx(170.0));
}

TEST_CASE("CQI quantization and bins") {
  CHECK(radio::cqi_from_sinr(-20.0) == 1);
  CHECK(radio::cqi_from_sinr(-6.0) == 1);
  CHECK(radio::cqi_from_sinr(-3.7) == 2);
  CHECK(radio::cqi_from_sinr(0.0) == 3);
  CHECK(radio::cqi_from_sinr(40.0) == 15);
  for (double s = -10.0; s < 30.0; s += 0.37) CHECK(radio::cqi_from_sinr(s) <= radio::cqi_from_sinr(s + 0.37));
  CHECK(radio::bin_index(20.0, radio::kSinrThresholdsDb) == 0);
  CHECK(radio::bin_index(19.99, radio::kSinrThresholdsDb) == 1);
  CHECK(radio::bin_index(0.0, radio::kSinrThresholdsDb) == 2);
  CHECK(radio::bin_index(-0.01, radio::kSinrThresholdsDb) == 3);
  CHECK(radio::bin_index(-95.0, radio::kRssiThresholdsDbm) == 1);
  CHECK(radio::bin_index(8.0, radio::kCqiThresholds) == 2);
}

TEST_CASE("isolated high-power cell is interference-free") {
  const Scenario s = testutil::make_scenario({testutil::make_cell("A", "S", 1000, 1000, 45.0, 65.0, 2100, 46.0)},
                                             {0, 0, 2000, 2000}, 50.0);
  const OracleResult r = simulate(s);
  CHECK(r.z_sinr[0] == KpiBins{1.0, 0.0, 0.0, 0.0});
  CHECK(r.served_pixels[0] == 40 * 40);
  // Brute-force: every pixel's noise-limited SINR clears the Perfect threshold.
  for (int p = 0; p < r.map.pixel_count(); ++p) {
    const Eigen::Vector2d c = r.map.pixel_center(p);
    const double snr = testutil::oracle::power(s.cells[0], c.x(), c.y()) + 110.0;
    CHECK(snr >= 20.0);
    CHECK(r.map.sinr_db[0](p) == Approx(snr).epsilon(1e-9));
  }
}

TEST_CASE("per-cell bins match an independent per-pixel recount") {
  const Scenario s = random_scenario(5, 4, {2100, 800}, 3000.0, 100.0);
  const OracleResult r = simulate(s);
  const auto n = s.cells.size();
  std::vector<Eigen::Vector4d> sinr(n, Eigen::Vector4d::Zero()), cqi(n, Eigen::Vector4d::Zero()),
      rssi(n, Eigen::Vector4d::Zero());
  std::vector<int> served(n, 0);
  for (int carrier : {800, 2100}) {
    for (double y = 50.0; y < 3000.0; y += 100.0)
      for (double x = 50.0; x < 3000.0; x += 100.0) {
        int best = -1;
        double best_p = -1e300;
        for (std::size_t i = 0; i < n; ++i) {
          if (s.cells[i].carrier_mhz != carrier) continue;
          const double p = testutil::oracle::power(s.cells[i], x, y);
          if (p > best_p) best_p = p, best = static_cast<int>(i);
        }
        double interference_mw = std::pow(10.0, -11.0);
        for (std::size_t i = 0; i < n; ++i)
          if (s.cells[i].carrier_mhz == carrier && static_cast<int>(i) != best)
            interference_mw += std::pow(10.0, testutil::oracle::power(s.cells[i], x, y) / 10.0);
        const double sinr_db = best_p - 10.0 * std::log10(interference_mw);
        const int q = std::clamp(static_cast<int>(std::floor((sinr_db + 6.0) / 2.2)) + 1, 1, 15);
        const auto b = static_cast<std::size_t>(best);
        sinr[b](sinr_db >= 20 ? 0 : sinr_db >= 10 ? 1 : sinr_db >= 0 ? 2 : 3) += 1;
        cqi[b](q >= 12 ? 0 : q >= 9 ? 1 : q >= 5 ? 2 : 3) += 1;
        rssi[b](best_p >= -80 ? 0 : best_p >= -95 ? 1 : best_p >= -105 ? 2 : 3) += 1;
        ++served[b];
      }
  }
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(r.served_pixels[i] == served[i]);
    if (served[i] == 0) continue;
    for (int k = 0; k < 4; ++k) {
      CHECK(r.z_sinr[i].as_vector()(k) == Approx(sinr[i](k) / served[i]).epsilon(1e-12));
      CHECK(r.z_cqi[i].as_vector()(k) == Approx(cqi[i](k) / served[i]).epsilon(1e-12));
      CHECK(r.m_rssi[i].as_vector()(k) == Approx(rssi[i](k) / served[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("mirror-symmetric co-located cells give a mirrored map") {
  const Scenario s = testutil::make_scenario({testutil::make_cell("A", "S", 1000, 1000, 90.0),
                                              testutil::make_cell("B", "S", 1000, 1000, 270.0)},
                                             {0, 0, 2000, 2000}, 50.0);
  const OracleResult r = simulate(s);
  const CoverageMap& m = r.map;
  int ties = 0;
  for (int row = 0; row < m.rows; ++row)
    for (int col = 0; col < m.cols; ++col) {
      const int p = row * m.cols + col, q = row * m.cols + (m.cols - 1 - col);
      CHECK(m.sinr_db[0](p) == Approx(m.sinr_db[0](q)).epsilon(1e-9));
      const Eigen::Vector2d c = m.pixel_center(p);
      if (std::abs(radio::received_power_dbm(s.cells[0], c) - radio::received_power_dbm(s.cells[1], c)) < 1e-9) {
        ++ties;
        CHECK(m.serving[0](p) == 0);  // lowest index wins a tie
      } else {
        CHECK(m.serving[0](p) == 1 - m.serving[0](q));
      }
    }
  CHECK(r.served_pixels[0] - r.served_pixels[1] == ties);
}

TEST_CASE("every KpiBins lies on the simplex") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const OracleResult r = simulate(random_scenario(seed, 6, {800, 2100, 2600}));
    for (Kpi k : {Kpi::sinr, Kpi::cqi, Kpi::rssi})
      for (const KpiBins& b : r.bins(k)) {
        CHECK(std::abs(b.sum() - 1.0) <= 1e-9);
        CHECK((b.as_vector().array() >= 0.0).all());
      }
  }
}

TEST_CASE("a cell that serves nothing is all Bad") {
  const Scenario s = testutil::make_scenario({testutil::make_cell("A", "S", 1000, 1000, 0.0, 65.0, 2100, 46.0),
                                              testutil::make_cell("B", "S", 1000, 1000, 0.0, 65.0, 2100, 40.0)},
                                             {0, 0, 2000, 2000});
  const OracleResult r = simulate(s);
  CHECK(r.served_pixels[1] == 0);
  for (Kpi k : {Kpi::sinr, Kpi::cqi, Kpi::rssi}) CHECK(r.bins(k)[1] == KpiBins{0.0, 0.0, 0.0, 1.0});
}

TEST_CASE("removing a same-carrier cell never lowers SINR where the server remains") {
  const Scenario s = random_scenario(9, 5, {2100}, 3000.0);
  const OracleResult full = simulate(s);
  for (std::size_t drop = 0; drop < s.cells.size(); ++drop) {
    Scenario fewer = s;
    fewer.cells.erase(fewer.cells.begin() + static_cast<std::ptrdiff_t>(drop));
    const OracleResult r = simulate(fewer);
    for (int p = 0; p < full.map.pixel_count(); ++p) {
      const int server = full.map.serving[0](p);
      if (server == static_cast<int>(drop)) continue;
      const int remapped = server > static_cast<int>(drop) ? server - 1 : server;
      REQUIRE(r.map.serving[0](p) == remapped);
      CHECK(r.map.sinr_db[0](p) >= full.map.sinr_db[0](p));
    }
  }
}

TEST_CASE("cells on other carriers contribute no interference") {
  const Scenario base = random_scenario(4, 4, {2100}, 3000.0);
  Scenario mixed = base;
  for (const Cell& c : random_scenario(8, 4, {800}, 3000.0).cells) {
    Cell other = c;
    other.cell_id = "Z" + c.cell_id;
    other.site_id = "Z" + c.site_id;
    mixed.cells.push_back(other);
  }
  validate(mixed);
  const OracleResult a = simulate(base);
  const OracleResult b = simulate(mixed);
  const int slot = b.map.carrier_slot(2100);
  CHECK(b.map.sinr_db[static_cast<std::size_t>(slot)] == a.map.sinr_db[0]);
  for (std::size_t i = 0; i < base.cells.size(); ++i) CHECK(b.z_sinr[static_cast<std::size_t>(mixed.index_of(base.cells[i].cell_id))] == a.z_sinr[i]);
}

TEST_CASE("pixel budget is enforced") {
  const Scenario s = testutil::make_scenario({testutil::make_cell("A", "S", 100, 100, 0.0)},
                                             {0, 0, 100000, 100000}, 10.0);
  CHECK(pixel_budget(s) == 1e8);
  CHECK_THROWS_AS(simulate(s), ValidationError);
}

TEST_CASE("simulate is deterministic and the KPI table is complete") {
  const Scenario s = random_scenario(2, 3, {2100, 800}, 3000.0);
  const OracleResult a = simulate(s), b = simulate(s);
  CHECK(kpi_table_csv(s, a) == kpi_table_csv(s, b));
  const std::string csv = kpi_table_csv(s, a);
  CHECK(csv.rfind("cell_id,kpi,perfect,good,fair,bad\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(1 + 3 * s.cells.size()));
  CHECK(coverage_map_csv(s, a).rfind("x,y,carrier_mhz,serving_cell,", 0) == 0);
}

}  // TEST_SUITE
