#pragma once

#include "cellgraph/scenario.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <optional>

namespace cellgraph::geometry {

inline constexpr double kSectorRadiusM = 10000.0;
inline constexpr double kDefaultGridStepM = 50.0;

/// Circular sector spanned by a cell's horizontal beam, out to a fixed radius.
template <typename Scalar>
struct SectorT {
  Eigen::Matrix<Scalar, 2, 1> apex = Eigen::Matrix<Scalar, 2, 1>::Zero();
  Scalar azimuth_deg = Scalar(0);
  Scalar half_angle_deg = Scalar(32.5);
  Scalar radius_m = Scalar(kSectorRadiusM);

  Eigen::Matrix<Scalar, 2, 1> direction() const {
    using std::cos;
    using std::sin;
    const Scalar a = azimuth_deg * Scalar(std::numbers::pi / 180.0);
    return {sin(a), cos(a)};
  }

  /// Point membership: within the radius and within half_angle of the azimuth.
  /// The apex itself is inside.
  bool contains(const Eigen::Matrix<Scalar, 2, 1>& p) const {
    using std::cos;
    const Eigen::Matrix<Scalar, 2, 1> v = p - apex;
    const Scalar d2 = v.squaredNorm();
    if (d2 > radius_m * radius_m) return false;
    if (d2 == Scalar(0)) return true;
    const Scalar c = v.dot(direction()) / std::sqrt(d2);
    return c >= cos(half_angle_deg * Scalar(std::numbers::pi / 180.0));
  }
};

using Sector = SectorT<double>;

Sector sector_of(const Cell& cell);

/// Closed-form area of a circular sector.
template <typename Scalar>
Scalar sector_area(const SectorT<Scalar>& s) {
  return (Scalar(2) * s.half_angle_deg / Scalar(360)) * Scalar(std::numbers::pi) * s.radius_m * s.radius_m;
}

struct Overlap {
  double area_m2 = 0.0;
  double mean_dist_from_i_m = 0.0;
  double mean_dist_from_j_m = 0.0;
  std::optional<Eigen::Vector2d> centroid;
  long long count = 0;
};

/// Grid-sampled intersection of two sectors. Samples lie on an axis-aligned
/// lattice with spacing `grid_step_m`, anchored at the lower-left corner of the
/// intersection of the two sectors' bounding boxes (offset by half a step). A
/// sample counts iff it lies inside both sectors.
Overlap sector_overlap(const Sector& si, const Sector& sj, double grid_step_m = kDefaultGridStepM);

/// Lattice estimate of a single sector's area, using the same lattice rule as
/// sector_overlap() applied to the sector with itself.
double sampled_sector_area(const Sector& s, double grid_step_m = kDefaultGridStepM);

/// Same lattice as sector_overlap() but only reports whether any sample qualifies.
bool sectors_overlap(const Sector& si, const Sector& sj, double grid_step_m = kDefaultGridStepM);

/// Interference Area / Distance / Centric of a cell pair plus normalized
/// pretext targets. Symmetric in (ci, cj).
struct GeomFeatures {
  double ia = 0.0;
  double id_m = 0.0;
  std::optional<Eigen::Vector2d> ic;
  double target_ia = 0.0;
  double target_id = 0.0;
};

GeomFeatures edge_geometry(const Cell& ci, const Cell& cj, double grid_step_m = kDefaultGridStepM);
GeomFeatures edge_geometry(const Sector& si, const Sector& sj, double grid_step_m = kDefaultGridStepM);
/// As above with the sectors' sampled_sector_area() values supplied by the caller.
GeomFeatures edge_geometry(const Sector& si, const Sector& sj, double grid_step_m, double sampled_area_i,
                           double sampled_area_j);

}  // namespace cellgraph::geometry
