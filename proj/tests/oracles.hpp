#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library code it is used to check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "lanemerge/controller.hpp"
#include "lanemerge/drivers.hpp"
#include "lanemerge/dynamics.hpp"
#include "lanemerge/world.hpp"

namespace oracle {

using lanemerge::BodyGeometry;
using lanemerge::ControlInput;
using lanemerge::VehicleState;

// Bicycle model written through the steering tangent instead of the slip
// angle: cos(beta) = 1 / sqrt(1 + t^2), sin(beta) = t / sqrt(1 + t^2) with
// t = l_r / (l_f + l_r) * tan(delta); yaw rate v cos(beta) tan(delta) / L.
inline std::array<double, 4> derivative(const VehicleState& s, const ControlInput& u,
                                        const BodyGeometry& g) {
  const double t = g.l_r / (g.l_f + g.l_r) * std::tan(u.delta);
  const double cb = 1.0 / std::sqrt(1.0 + t * t);
  const double sb = t * cb;
  const double c = std::cos(s.psi);
  const double sn = std::sin(s.psi);
  return {s.v * (c * cb - sn * sb), s.v * (sn * cb + c * sb),
          s.v * cb * std::tan(u.delta) / (g.l_f + g.l_r), u.a};
}

// Plain Euler on raw (unwrapped) heading, no speed clamp.
inline VehicleState euler(VehicleState s, const ControlInput& u, const BodyGeometry& g, double dt,
                          int steps) {
  for (int i = 0; i < steps; ++i) {
    const auto d = oracle::derivative(s, u, g);
    s.x += dt * d[0];
    s.y += dt * d[1];
    s.psi += dt * d[2];
    s.v += dt * d[3];
  }
  return s;
}

struct Circle {
  double x, y, r;
};

inline std::array<Circle, 3> circles(const VehicleState& s, const BodyGeometry& g) {
  std::array<Circle, 3> out{};
  for (int p = -1; p <= 1; ++p) {
    out[p + 1] = {s.x + p * (g.h - g.w) * std::cos(s.psi), s.y + p * (g.h - g.w) * std::sin(s.psi),
                  g.w};
  }
  return out;
}

// Explicit minimum over the nine (p, q) evaluations of d = |c_p - c_q|^2 - (w + w_i)^2.
inline double pair_distance(const VehicleState& a, const BodyGeometry& ga, const VehicleState& b,
                            const BodyGeometry& gb) {
  double best = std::numeric_limits<double>::infinity();
  for (const Circle& p : circles(a, ga)) {
    for (const Circle& q : circles(b, gb)) {
      const double d = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) -
                       (p.r + q.r) * (p.r + q.r);
      best = std::min(best, d);
    }
  }
  return best;
}

inline double min_gap(const VehicleState& a, const BodyGeometry& ga, const VehicleState& b,
                      const BodyGeometry& gb) {
  double best = std::numeric_limits<double>::infinity();
  for (const Circle& p : circles(a, ga)) {
    for (const Circle& q : circles(b, gb)) {
      best = std::min(best, std::hypot(p.x - q.x, p.y - q.y) - (p.r + q.r));
    }
  }
  return std::max(best, 0.0);
}

// Intelligent driver model straight from its definition.
inline double idm(double v, double s, double dv, const lanemerge::DriverParams& p) {
  const double s_star = p.s0 + v * p.T_headway + v * dv / (2.0 * std::sqrt(p.a_max * p.b_comf));
  const double a =
      p.a_max * (1.0 - std::pow(v / p.v_ref, p.delta_exp) - (s_star / s) * (s_star / s));
  return std::clamp(a, -2.0 * p.b_comf, p.a_max);
}

// Cost of a propagated sequence, summed term by term.
inline double cost(std::span<const VehicleState> states, std::span<const ControlInput> controls,
                   const lanemerge::ControllerConfig& c, double target_y) {
  double total = 0.0;
  for (const VehicleState& s : states) {
    const double remaining = std::max(c.x_end - s.x, c.min_div_distance);
    total += c.lambda_div / remaining * std::fabs(s.y - target_y);
    total += c.lambda_v * (s.v - c.v_ref) * (s.v - c.v_ref);
  }
  for (std::size_t i = 0; i < controls.size(); ++i) {
    total += c.lambda_delta * controls[i].delta * controls[i].delta;
    total += c.lambda_a * controls[i].a * controls[i].a;
  }
  for (std::size_t i = 1; i < controls.size(); ++i) {
    const double dd = controls[i].delta - controls[i - 1].delta;
    const double da = controls[i].a - controls[i - 1].a;
    total += c.lambda_Delta_delta * dd * dd + c.lambda_Delta_a * da * da;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Dynamics properties over randomized cases. Each returns the number of
// failing cases.

struct CaseGen {
  explicit CaseGen(std::uint64_t seed) : rng(seed) {}
  double u(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  VehicleState state() { return {u(-100, 100), u(-10, 10), u(-3.1, 3.1), u(0, 15)}; }
  ControlInput input() { return {u(-4, 3.5), u(-0.3, 0.3)}; }
  std::mt19937_64 rng;
};

inline int straight_line_failures(int cases, std::uint64_t seed) {
  CaseGen gen(seed);
  const BodyGeometry g;
  int failures = 0;
  for (int i = 0; i < cases; ++i) {
    VehicleState s = gen.state();
    s.psi = 0.0;
    const ControlInput in{gen.u(-4, 3.5), 0.0};
    const VehicleState n = lanemerge::step(s, in, g, 0.4);
    if (n.y != s.y || n.psi != 0.0) ++failures;
  }
  return failures;
}

inline int mirror_failures(int cases, std::uint64_t seed) {
  CaseGen gen(seed);
  const BodyGeometry g;
  int failures = 0;
  for (int i = 0; i < cases; ++i) {
    const VehicleState s = gen.state();
    const ControlInput in = gen.input();
    const VehicleState a = lanemerge::step(s, in, g, 0.4);
    const VehicleState b = lanemerge::step({s.x, -s.y, -s.psi, s.v}, {in.a, -in.delta}, g, 0.4);
    const bool ok = std::abs(a.x - b.x) < 1e-12 && std::abs(a.y + b.y) < 1e-12 &&
                    std::abs(a.psi + b.psi) < 1e-12 && std::abs(a.v - b.v) < 1e-12;
    if (!ok) ++failures;
  }
  return failures;
}

inline int speed_sign_failures(int cases, std::uint64_t seed) {
  CaseGen gen(seed);
  const BodyGeometry g;
  int failures = 0;
  for (int i = 0; i < cases; ++i) {
    VehicleState s = gen.state();
    s.v = gen.u(0, 2);  // low speeds so that hard braking crosses zero
    for (int k = 0; k < 5; ++k) {
      s = lanemerge::step(s, gen.input(), g, gen.u(0.05, 1.0));
      if (!(s.v >= 0.0)) {
        ++failures;
        break;
      }
    }
  }
  return failures;
}

// Max position error over a 1 s horizon against Euler at dt/100 must shrink
// strictly across dt in {0.4, 0.2, 0.1, 0.05}. Decelerations are limited so
// that the speed stays positive and the clamp never engages.
inline int euler_convergence_failures(int cases, std::uint64_t seed) {
  CaseGen gen(seed);
  const BodyGeometry g;
  const double dts[] = {0.4, 0.2, 0.1, 0.05};
  int failures = 0;
  for (int i = 0; i < cases; ++i) {
    VehicleState s0 = gen.state();
    s0.v = gen.u(1.0, 15.0);
    const ControlInput in{gen.u(std::max(-4.0, -0.9 * s0.v), 3.5), gen.u(-0.3, 0.3)};
    double previous = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (double dt : dts) {
      const int n = static_cast<int>(std::floor(1.0 / dt + 1e-9));
      double err = 0.0;
      VehicleState coarse = s0;
      VehicleState fine = s0;
      for (int k = 0; k < n; ++k) {
        coarse = lanemerge::step(coarse, in, g, dt);
        fine = euler(fine, in, g, dt / 100.0, 100);
        err = std::max(err, std::hypot(coarse.x - fine.x, coarse.y - fine.y));
      }
      if (!(err < previous)) ok = false;
      previous = err;
    }
    if (!ok) ++failures;
  }
  return failures;
}

// ---------------------------------------------------------------------------
// Exhaustive re-evaluation of one candidate sequence against the true future:
// a copy of the world rolled forward with the ego pinned to the propagated
// plan. Other vehicles use their displacement heading, held when they barely
// move, and keep their last position once they leave the scene.

struct Evaluation {
  bool feasible = false;
  double cost = std::numeric_limits<double>::infinity();
};

inline Evaluation reevaluate(const lanemerge::World& world, const std::vector<int>& ids,
                             std::span<const ControlInput> controls,
                             const lanemerge::ControllerConfig& c, double target_y) {
  const lanemerge::Vehicle& ego = world.ego();
  std::vector<VehicleState> plan{ego.state};
  for (const ControlInput& u : controls) {
    VehicleState s = euler(plan.back(), u, ego.geom, c.dt, 1);
    s.v = std::max(s.v, 0.0);
    s.psi = std::atan2(std::sin(s.psi), std::cos(s.psi));
    plan.push_back(s);
  }

  struct Other {
    int id;
    VehicleState pose;
    BodyGeometry geom;
  };
  std::vector<Other> others;
  for (int id : ids) {
    if (id == ego.id) continue;
    if (const lanemerge::Vehicle* v = world.find(id)) others.push_back({id, v->state, v->geom});
  }

  lanemerge::World sim = world;
  Evaluation out;
  for (std::size_t k = 1; k < plan.size(); ++k) {
    sim.step_with_ego_state(plan[k]);
    const VehicleState& me = plan[k];
    if (me.x > c.x_end || me.y < c.y_min || me.y > c.y_max) return out;
    for (Other& o : others) {
      if (const lanemerge::Vehicle* v = sim.find(o.id)) {
        const double dx = v->state.x - o.pose.x;
        const double dy = v->state.y - o.pose.y;
        if (std::sqrt(dx * dx + dy * dy) >= 1e-3) o.pose.psi = std::atan2(dy, dx);
        o.pose.x = v->state.x;
        o.pose.y = v->state.y;
      }
      if (oracle::pair_distance(me, ego.geom, o.pose, o.geom) < c.epsilon) return out;
    }
  }
  out.feasible = true;
  out.cost = cost(plan, controls, c, target_y);
  return out;
}

}  // namespace oracle
