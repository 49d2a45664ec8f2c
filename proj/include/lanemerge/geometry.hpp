#pragma once

#include <array>
#include <span>
#include <vector>

#include "lanemerge/dynamics.hpp"

namespace lanemerge {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

// Three equal circles of radius w placed along the heading axis at offsets
// p * (h - w) for p in {-1, 0, 1}. centers[1] is the vehicle center.
struct CircleSet {
  std::array<Point2, 3> centers;
  double radius = 0.0;
};

// Throws std::invalid_argument when h <= w.
CircleSet circle_centers(const VehicleState& state, const BodyGeometry& geom);

// Smallest squared center distance minus the squared sum of radii over the
// nine circle pairs. Negative when the footprints overlap. Not a metric; only
// its sign and threshold matter for the safety constraint.
double pair_distance(const CircleSet& a, const CircleSet& b);
double pair_distance(const VehicleState& ego, const BodyGeometry& ego_geom,
                     const VehicleState& other, const BodyGeometry& other_geom);

// Smallest circle-to-circle clearance in meters, clamped at 0 on overlap.
// Reporting only.
double euclidean_min_gap(const CircleSet& a, const CircleSet& b);
double euclidean_min_gap(const VehicleState& ego, const BodyGeometry& ego_geom,
                         const VehicleState& other, const BodyGeometry& other_geom);

struct SafetyReport {
  bool safe = true;
  std::vector<double> margins;  // pair_distance per other vehicle
};

struct PlacedVehicle {
  VehicleState state;
  BodyGeometry geom;
};

// Inclusive check pair_distance >= epsilon against every other vehicle.
SafetyReport is_safe(const VehicleState& ego, const BodyGeometry& ego_geom,
                     std::span<const PlacedVehicle> others, double epsilon);

}  // namespace lanemerge
