#include "lanemerge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lanemerge {

CircleSet circle_centers(const VehicleState& state, const BodyGeometry& geom) {
  if (!(geom.h > geom.w)) {
    throw std::invalid_argument("circle_centers: half length must exceed half width");
  }
  const double offset = geom.h - geom.w;
  const double c = std::cos(state.psi);
  const double s = std::sin(state.psi);
  CircleSet set;
  set.radius = geom.w;
  for (int p = -1; p <= 1; ++p) {
    set.centers[p + 1] = {state.x + p * offset * c, state.y + p * offset * s};
  }
  return set;
}

double pair_distance(const CircleSet& a, const CircleSet& b) {
  const double reach = a.radius + b.radius;
  double best = std::numeric_limits<double>::infinity();
  for (const Point2& pa : a.centers) {
    for (const Point2& pb : b.centers) {
      const double dx = pa.x - pb.x;
      const double dy = pa.y - pb.y;
      best = std::min(best, dx * dx + dy * dy);
    }
  }
  return best - reach * reach;
}

double pair_distance(const VehicleState& ego, const BodyGeometry& ego_geom,
                     const VehicleState& other, const BodyGeometry& other_geom) {
  return pair_distance(circle_centers(ego, ego_geom), circle_centers(other, other_geom));
}

double euclidean_min_gap(const CircleSet& a, const CircleSet& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const Point2& pa : a.centers) {
    for (const Point2& pb : b.centers) {
      best = std::min(best, std::hypot(pa.x - pb.x, pa.y - pb.y));
    }
  }
  return std::max(0.0, best - (a.radius + b.radius));
}

double euclidean_min_gap(const VehicleState& ego, const BodyGeometry& ego_geom,
                         const VehicleState& other, const BodyGeometry& other_geom) {
  return euclidean_min_gap(circle_centers(ego, ego_geom), circle_centers(other, other_geom));
}

SafetyReport is_safe(const VehicleState& ego, const BodyGeometry& ego_geom,
                     std::span<const PlacedVehicle> others, double epsilon) {
  SafetyReport report;
  report.margins.reserve(others.size());
  const CircleSet ego_circles = circle_centers(ego, ego_geom);
  for (const PlacedVehicle& other : others) {
    const double margin = pair_distance(ego_circles, circle_centers(other.state, other.geom));
    report.margins.push_back(margin);
    if (!(margin >= epsilon)) report.safe = false;
  }
  return report;
}

}  // namespace lanemerge
