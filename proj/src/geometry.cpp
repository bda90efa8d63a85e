#include "cellgraph/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace cellgraph::geometry {

namespace {

struct Lattice {
  double x0 = 0.0, y0 = 0.0;
  long long nx = 0, ny = 0;
  double step = 0.0;
};

Lattice lattice_for(const Sector& si, const Sector& sj, double step) {
  const double xmin = std::max(si.apex.x() - si.radius_m, sj.apex.x() - sj.radius_m);
  const double xmax = std::min(si.apex.x() + si.radius_m, sj.apex.x() + sj.radius_m);
  const double ymin = std::max(si.apex.y() - si.radius_m, sj.apex.y() - sj.radius_m);
  const double ymax = std::min(si.apex.y() + si.radius_m, sj.apex.y() + sj.radius_m);
  Lattice l;
  l.step = step;
  if (xmax <= xmin || ymax <= ymin) return l;
  l.x0 = xmin;
  l.y0 = ymin;
  l.nx = static_cast<long long>(std::ceil((xmax - xmin) / step));
  l.ny = static_cast<long long>(std::ceil((ymax - ymin) / step));
  return l;
}

// Superset of the x-range where the horizontal line y intersects the sector.
// The sector is convex (half-angle < 90), so the range is an interval.
bool row_interval(const Sector& s, double y, double& lo, double& hi) {
  const double dy = y - s.apex.y();
  const double r2 = s.radius_m * s.radius_m - dy * dy;
  if (r2 < 0.0) return false;
  const double half = std::sqrt(r2);
  lo = s.apex.x() - half;
  hi = s.apex.x() + half;
  const Eigen::Vector2d u = s.direction();
  const double h = s.half_angle_deg * std::numbers::pi / 180.0;
  for (double sign : {-1.0, 1.0}) {
    // Boundary ray rotated by +-h from the azimuth; inward normal points toward u.
    const double a = s.azimuth_deg * std::numbers::pi / 180.0 + sign * h;
    const Eigen::Vector2d b(std::sin(a), std::cos(a));
    Eigen::Vector2d n(-b.y(), b.x());
    if (n.dot(u) < 0.0) n = -n;
    // n.x * (x - ax) + n.y * dy >= 0
    if (std::abs(n.x()) < 1e-12) {
      if (n.y() * dy < -1e-9 * s.radius_m) return false;
      continue;
    }
    const double x_edge = s.apex.x() - n.y() * dy / n.x();
    if (n.x() > 0.0)
      lo = std::max(lo, x_edge);
    else
      hi = std::min(hi, x_edge);
  }
  return hi >= lo;
}

template <typename Visit>
void for_each_sample(const Sector& si, const Sector& sj, double step, Visit&& visit) {
  const Lattice l = lattice_for(si, sj, step);
  for (long long r = 0; r < l.ny; ++r) {
    const double y = l.y0 + (static_cast<double>(r) + 0.5) * step;
    double lo_i, hi_i, lo_j, hi_j;
    if (!row_interval(si, y, lo_i, hi_i) || !row_interval(sj, y, lo_j, hi_j)) continue;
    const double lo = std::max(lo_i, lo_j) - step;
    const double hi = std::min(hi_i, hi_j) + step;
    if (hi < lo) continue;
    const long long c0 = std::max(0LL, static_cast<long long>(std::floor((lo - l.x0) / step - 0.5)));
    const long long c1 = std::min(l.nx - 1, static_cast<long long>(std::ceil((hi - l.x0) / step - 0.5)));
    for (long long c = c0; c <= c1; ++c) {
      const Eigen::Vector2d p(l.x0 + (static_cast<double>(c) + 0.5) * step, y);
      if (si.contains(p) && sj.contains(p)) {
        if (!visit(p)) return;
      }
    }
  }
}

}  // namespace

Sector sector_of(const Cell& cell) {
  Sector s;
  s.apex = cell.position;
  s.azimuth_deg = cell.azimuth_deg;
  s.half_angle_deg = cell.h_beamwidth_deg / 2.0;
  s.radius_m = kSectorRadiusM;
  return s;
}

Overlap sector_overlap(const Sector& si, const Sector& sj, double grid_step_m) {
  Overlap out;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  double dist_i = 0.0;
  double dist_j = 0.0;
  for_each_sample(si, sj, grid_step_m, [&](const Eigen::Vector2d& p) {
    ++out.count;
    sum += p;
    dist_i += (p - si.apex).norm();
    dist_j += (p - sj.apex).norm();
    return true;
  });
  if (out.count == 0) return out;
  const double n = static_cast<double>(out.count);
  out.area_m2 = n * grid_step_m * grid_step_m;
  out.mean_dist_from_i_m = dist_i / n;
  out.mean_dist_from_j_m = dist_j / n;
  out.centroid = sum / n;
  return out;
}

double sampled_sector_area(const Sector& s, double grid_step_m) {
  long long count = 0;
  for_each_sample(s, s, grid_step_m, [&](const Eigen::Vector2d&) {
    ++count;
    return true;
  });
  return static_cast<double>(count) * grid_step_m * grid_step_m;
}

bool sectors_overlap(const Sector& si, const Sector& sj, double grid_step_m) {
  bool any = false;
  for_each_sample(si, sj, grid_step_m, [&](const Eigen::Vector2d&) {
    any = true;
    return false;
  });
  return any;
}

GeomFeatures edge_geometry(const Sector& si, const Sector& sj, double grid_step_m) {
  return edge_geometry(si, sj, grid_step_m, sampled_sector_area(si, grid_step_m), sampled_sector_area(sj, grid_step_m));
}

GeomFeatures edge_geometry(const Sector& si, const Sector& sj, double grid_step_m, double sampled_area_i,
                           double sampled_area_j) {
  GeomFeatures g;
  const Overlap o = sector_overlap(si, sj, grid_step_m);
  if (o.count == 0) return g;
  // Union measured on the same lattice so identical sectors give exactly 1.
  const double uni = sampled_area_i + sampled_area_j - o.area_m2;
  g.ia = uni > 0.0 ? std::clamp(o.area_m2 / uni, 0.0, 1.0) : 1.0;
  g.id_m = 0.5 * (o.mean_dist_from_i_m + o.mean_dist_from_j_m);
  g.ic = o.centroid;
  g.target_ia = g.ia;
  g.target_id = std::clamp(1.0 - g.id_m / kSectorRadiusM, 0.0, 1.0);
  return g;
}

GeomFeatures edge_geometry(const Cell& ci, const Cell& cj, double grid_step_m) {
  return edge_geometry(sector_of(ci), sector_of(cj), grid_step_m);
}

}  // namespace cellgraph::geometry
