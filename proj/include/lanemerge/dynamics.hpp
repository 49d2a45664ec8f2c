#pragma once

#include <array>

namespace lanemerge {

// Pose and speed of one vehicle. x is longitudinal, y lateral (left positive),
// psi the inertial heading and v the speed along the heading.
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double v = 0.0;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

// Longitudinal acceleration and front-wheel steering angle (left positive).
struct ControlInput {
  double a = 0.0;
  double delta = 0.0;

  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

// Axle distances and the half extents used by the three-circle footprint.
struct BodyGeometry {
  double l_f = 1.45;
  double l_r = 1.45;
  double w = 0.9;  // half width
  double h = 2.0;  // half length

  bool valid() const { return l_f > 0 && l_r > 0 && w > 0 && h > w; }
  friend bool operator==(const BodyGeometry&, const BodyGeometry&) = default;
};

// (x_dot, y_dot, psi_dot, v_dot)
using StateDerivative = std::array<double, 4>;

// Wraps an angle into (-pi, pi].
double normalize_angle(double angle);

// Slip angle at the center of mass for a front steering angle |delta| < pi/2.
double slip_angle(const BodyGeometry& geom, double delta);

// Continuous kinematic bicycle model.
StateDerivative derivative(const VehicleState& state, const ControlInput& input,
                           const BodyGeometry& geom);

// One forward-Euler step of length dt. Speed is clamped at zero afterwards
// and the heading renormalized.
VehicleState step(const VehicleState& state, const ControlInput& input,
                  const BodyGeometry& geom, double dt);

}  // namespace lanemerge
