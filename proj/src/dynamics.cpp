#include "lanemerge/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lanemerge {

double normalize_angle(double angle) {
  constexpr double kPi = std::numbers::pi;
  if (angle > -kPi && angle <= kPi) return angle;
  double wrapped = std::remainder(angle, 2.0 * kPi);
  if (wrapped <= -kPi) wrapped += 2.0 * kPi;
  return wrapped;
}

double slip_angle(const BodyGeometry& geom, double delta) {
  return std::atan(geom.l_r / (geom.l_f + geom.l_r) * std::tan(delta));
}

StateDerivative derivative(const VehicleState& state, const ControlInput& input,
                           const BodyGeometry& geom) {
  const double beta = slip_angle(geom, input.delta);
  return {state.v * std::cos(state.psi + beta),
          state.v * std::sin(state.psi + beta),
          state.v / geom.l_r * std::sin(beta),
          input.a};
}

VehicleState step(const VehicleState& state, const ControlInput& input,
                  const BodyGeometry& geom, double dt) {
  const StateDerivative d = derivative(state, input, geom);
  VehicleState next;
  next.x = state.x + dt * d[0];
  next.y = state.y + dt * d[1];
  next.psi = normalize_angle(state.psi + dt * d[2]);
  next.v = std::max(0.0, state.v + dt * d[3]);
  return next;
}

}  // namespace lanemerge
