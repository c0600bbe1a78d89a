#pragma once

// Coupled planar dynamics of the human leg and the exo leg:
//
//   M(q) qdd + C(q, qd) + G(q) = tau_h (+) tau_r + J(q)^T f_ext
//
// with q = [human_hip, human_knee, exo_hip, exo_knee]. Angles follow the
// clinical sagittal convention: hip flexion positive (thigh swings forward),
// knee flexion positive (shank folds backward). Internally each chain uses
// absolute segment angles measured from the downward vertical,
//   theta_thigh = hip,  theta_shank = hip - knee,
// so the chain terms are the textbook double pendulum mapped through the
// constant matrix A = [[1, 0], [1, -1]].
//
// The two chains share no inertia; they interact only through the strap
// bushings, so M is block diagonal.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "exopt/errors.hpp"
#include "exopt/model.hpp"

namespace exopt {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;

struct CoupledState {
  Vec4 q = Vec4::Zero();
  Vec4 qdot = Vec4::Zero();
  double t = 0.0;

  Vec2 human_q() const { return q.head<2>(); }
  Vec2 exo_q() const { return q.tail<2>(); }
  Vec2 human_qdot() const { return qdot.head<2>(); }
  Vec2 exo_qdot() const { return qdot.tail<2>(); }

  // Both chains at the same joint configuration.
  static CoupledState aligned(const Vec2& q, const Vec2& qdot, double t = 0.0) {
    CoupledState s;
    s.q << q, q;
    s.qdot << qdot, qdot;
    s.t = t;
    return s;
  }
};

struct TorqueInput {
  Vec2 tau_h = Vec2::Zero();
  Vec2 tau_r = Vec2::Zero();
};

struct ClampedTorque {
  TorqueInput torque;
  std::array<bool, 2> human_saturated{};
  std::array<bool, 2> exo_saturated{};
};

inline ClampedTorque clamp_torques(const CoupledModel& m, const TorqueInput& in) {
  ClampedTorque out;
  out.torque = in;
  const std::array<double, 2> human_lim = {m.subject.hip_torque_limit, m.subject.knee_torque_limit};
  for (int j = 0; j < 2; ++j) {
    const double lim = human_lim[j];
    if (std::abs(in.tau_h[j]) > lim) {
      out.torque.tau_h[j] = std::copysign(lim, in.tau_h[j]);
      out.human_saturated[j] = true;
    }
    const double rlim = m.exo.actuator_torque_limit;
    if (std::abs(in.tau_r[j]) > rlim) {
      out.torque.tau_r[j] = std::copysign(rlim, in.tau_r[j]);
      out.exo_saturated[j] = true;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chain kinematics

struct ChainTerms {
  Mat2 mass;
  Vec2 coriolis;
  Vec2 gravity;
};

inline ChainTerms chain_terms(const LegGeometry& leg, const Vec2& q, const Vec2& qdot, double g) {
  const double m1 = leg.thigh.mass, c1 = leg.thigh.com_offset, i1 = leg.thigh.inertia;
  const double l1 = leg.thigh.length;
  const double m2 = leg.shank.mass, c2 = leg.shank.com_offset, i2 = leg.shank.inertia;

  const double th1 = q[0];
  const double th2 = q[0] - q[1];
  const double w1 = qdot[0];
  const double w2 = qdot[0] - qdot[1];
  const double coupling = m2 * l1 * c2;
  const double cd = std::cos(th1 - th2);
  const double sd = std::sin(th1 - th2);

  Mat2 m_abs;
  m_abs << i1 + m1 * c1 * c1 + m2 * l1 * l1, coupling * cd,
           coupling * cd, i2 + m2 * c2 * c2;
  const Vec2 h_abs(coupling * sd * w2 * w2, -coupling * sd * w1 * w1);
  const Vec2 g_abs((m1 * c1 + m2 * l1) * g * std::sin(th1), m2 * c2 * g * std::sin(th2));

  Mat2 a;
  a << 1.0, 0.0, 1.0, -1.0;
  ChainTerms out;
  out.mass = a.transpose() * m_abs * a;
  out.coriolis = a.transpose() * h_abs;
  out.gravity = a.transpose() * g_abs;
  return out;
}

// Point on a segment at distance s from its proximal joint, with the
// Jacobian with respect to the chain's (hip, knee) coordinates.
struct SegmentPoint {
  Vec2 position;
  Vec2 velocity;
  Eigen::Matrix2d jacobian;  // d position / d (hip, knee)
  double angle;              // absolute segment angle
  double angular_velocity;
  Vec2 angle_jacobian;       // d angle / d (hip, knee)
};

inline SegmentPoint segment_point(const LegGeometry& leg, bool shank, double s, const Vec2& q,
                                  const Vec2& qdot) {
  SegmentPoint p;
  const double th1 = q[0];
  const double l1 = leg.thigh.length;
  const Vec2 d_th1(std::cos(th1), std::sin(th1));  // d/dth1 of (sin, -cos)
  if (!shank) {
    p.position = Vec2(s * std::sin(th1), -s * std::cos(th1));
    p.jacobian.col(0) = s * d_th1;
    p.jacobian.col(1).setZero();
    p.angle = th1;
    p.angular_velocity = qdot[0];
    p.angle_jacobian = Vec2(1.0, 0.0);
  } else {
    const double th2 = q[0] - q[1];
    const Vec2 d_th2(std::cos(th2), std::sin(th2));
    p.position = Vec2(l1 * std::sin(th1) + s * std::sin(th2), -l1 * std::cos(th1) - s * std::cos(th2));
    // dth2/dhip = 1, dth2/dknee = -1
    p.jacobian.col(0) = l1 * d_th1 + s * d_th2;
    p.jacobian.col(1) = -s * d_th2;
    p.angle = th2;
    p.angular_velocity = qdot[0] - qdot[1];
    p.angle_jacobian = Vec2(1.0, -1.0);
  }
  p.velocity = p.jacobian * qdot;
  return p;
}

// ---------------------------------------------------------------------------
// Operations

inline Mat4 mass_matrix(const CoupledModel& m, const Vec4& q) {
  Mat4 out = Mat4::Zero();
  out.topLeftCorner<2, 2>() = chain_terms(m.subject.leg, q.head<2>(), Vec2::Zero(), m.gravity).mass;
  out.bottomRightCorner<2, 2>() = chain_terms(m.exo.leg, q.tail<2>(), Vec2::Zero(), m.gravity).mass;
  return out;
}

// C(q, qd) + G(q): the velocity-product and gravity terms on the left-hand
// side of the equations of motion. The generalized gravity torque is the
// negative of the gravity part.
inline Vec4 bias_and_gravity(const CoupledModel& m, const Vec4& q, const Vec4& qdot) {
  const ChainTerms h = chain_terms(m.subject.leg, q.head<2>(), qdot.head<2>(), m.gravity);
  const ChainTerms e = chain_terms(m.exo.leg, q.tail<2>(), qdot.tail<2>(), m.gravity);
  Vec4 out;
  out << h.coriolis + h.gravity, e.coriolis + e.gravity;
  return out;
}

struct SiteLoad {
  Vec2 force_on_human = Vec2::Zero();  // N, exo side receives the negative
  double torque_on_human = 0.0;        // N m, about the out-of-plane axis
  Vec2 displacement = Vec2::Zero();    // human point minus exo point
  double angle_mismatch = 0.0;         // human segment angle minus exo segment angle
};

struct InteractionForces {
  std::array<SiteLoad, 4> sites{};
  Vec4 generalized = Vec4::Zero();  // J^T f_ext on [human; exo] coordinates

  const SiteLoad& at(StrapSite s) const { return sites[static_cast<int>(s)]; }
};

inline InteractionForces bushing_wrench(const CoupledModel& m, const CoupledState& x) {
  InteractionForces out;
  const Vec2 qh = x.human_q(), qdh = x.human_qdot();
  const Vec2 qe = x.exo_q(), qde = x.exo_qdot();
  for (StrapSite site : kStrapSites) {
    const bool shank = on_shank(site);
    const double s = m.strap_position(site);
    const SegmentPoint ph = segment_point(m.subject.leg, shank, s, qh, qdh);
    const SegmentPoint pe = segment_point(m.exo.leg, shank, s, qe, qde);
    const SiteBushing& b = m.bushings.at(site);

    SiteLoad& load = out.sites[static_cast<int>(site)];
    load.displacement = ph.position - pe.position;
    const Vec2 dv = ph.velocity - pe.velocity;
    for (int a = 0; a < 2; ++a) {
      load.force_on_human[a] =
          -b.translational_stiffness[a] * load.displacement[a] - b.translational_damping[a] * dv[a];
    }
    load.angle_mismatch = ph.angle - pe.angle;
    const double dw = ph.angular_velocity - pe.angular_velocity;
    load.torque_on_human = -b.rotational_stiffness * load.angle_mismatch - b.rotational_damping * dw;

    out.generalized.head<2>() +=
        ph.jacobian.transpose() * load.force_on_human + ph.angle_jacobian * load.torque_on_human;
    out.generalized.tail<2>() -=
        pe.jacobian.transpose() * load.force_on_human + pe.angle_jacobian * load.torque_on_human;
  }
  return out;
}

// Soft one-sided stops beyond the configured joint ranges.
inline Vec4 joint_stop_torque(const CoupledModel& m, const CoupledState& x) {
  const std::array<const AngleRange*, 4> ranges = {&m.subject.leg.hip_range, &m.subject.leg.knee_range,
                                                   &m.exo.leg.hip_range, &m.exo.leg.knee_range};
  Vec4 tau = Vec4::Zero();
  const double k = m.joint_stop.stiffness;
  const double d = m.joint_stop.damping;
  for (int j = 0; j < 4; ++j) {
    const double q = x.q[j], qd = x.qdot[j];
    if (q > ranges[j]->max) {
      const double p = q - ranges[j]->max;
      tau[j] = -std::max(0.0, k * p * (1.0 + d * qd));
    } else if (q < ranges[j]->min) {
      const double p = ranges[j]->min - q;
      tau[j] = std::max(0.0, k * p * (1.0 - d * qd));
    }
  }
  return tau;
}

inline Vec4 forward_dynamics(const CoupledModel& m, const CoupledState& x, const TorqueInput& in) {
  const ChainTerms h = chain_terms(m.subject.leg, x.human_q(), x.human_qdot(), m.gravity);
  const ChainTerms e = chain_terms(m.exo.leg, x.exo_q(), x.exo_qdot(), m.gravity);
  const Vec4 f_ext = bushing_wrench(m, x).generalized + joint_stop_torque(m, x);

  const Vec2 rhs_h = in.tau_h + f_ext.head<2>() - h.coriolis - h.gravity;
  const Vec2 rhs_e = in.tau_r + f_ext.tail<2>() - e.coriolis - e.gravity;
  const Eigen::LLT<Mat2> llt_h(h.mass);
  const Eigen::LLT<Mat2> llt_e(e.mass);
  if (llt_h.info() != Eigen::Success || llt_e.info() != Eigen::Success) {
    throw std::logic_error("mass matrix is not positive definite");
  }
  Vec4 qddot;
  qddot << llt_h.solve(rhs_h), llt_e.solve(rhs_e);
  return qddot;
}

// Kinetic + gravitational + bushing spring + joint-stop spring energy.
// Potential zero is the hip height.
inline double mechanical_energy(const CoupledModel& m, const CoupledState& x) {
  const double kinetic = 0.5 * x.qdot.dot(mass_matrix(m, x.q) * x.qdot);
  auto chain_potential = [&](const LegGeometry& leg, const Vec2& q) {
    const double th1 = q[0], th2 = q[0] - q[1];
    const double y1 = -leg.thigh.com_offset * std::cos(th1);
    const double y2 = -leg.thigh.length * std::cos(th1) - leg.shank.com_offset * std::cos(th2);
    return m.gravity * (leg.thigh.mass * y1 + leg.shank.mass * y2);
  };
  double potential = chain_potential(m.subject.leg, x.human_q()) + chain_potential(m.exo.leg, x.exo_q());
  const InteractionForces f = bushing_wrench(m, x);
  for (StrapSite site : kStrapSites) {
    const SiteBushing& b = m.bushings.at(site);
    const SiteLoad& l = f.at(site);
    for (int a = 0; a < 2; ++a) {
      potential += 0.5 * b.translational_stiffness[a] * l.displacement[a] * l.displacement[a];
    }
    potential += 0.5 * b.rotational_stiffness * l.angle_mismatch * l.angle_mismatch;
  }
  const std::array<const AngleRange*, 4> ranges = {&m.subject.leg.hip_range, &m.subject.leg.knee_range,
                                                   &m.exo.leg.hip_range, &m.exo.leg.knee_range};
  for (int j = 0; j < 4; ++j) {
    const double p = std::max({0.0, x.q[j] - ranges[j]->max, ranges[j]->min - x.q[j]});
    potential += 0.5 * m.joint_stop.stiffness * p * p;
  }
  return kinetic + potential;
}

// Joint angles within range +- this margin count as a valid state.
inline constexpr double kSoftRangeMargin = 0.5;  // rad
inline constexpr double kMaxAngle = 2.0 * std::numbers::pi;
inline constexpr double kMaxRate = 1.0e3;  // rad/s

inline bool is_valid_state(const CoupledModel& m, const CoupledState& x) {
  const std::array<const AngleRange*, 4> ranges = {&m.subject.leg.hip_range, &m.subject.leg.knee_range,
                                                   &m.exo.leg.hip_range, &m.exo.leg.knee_range};
  for (int j = 0; j < 4; ++j) {
    if (!std::isfinite(x.q[j]) || !std::isfinite(x.qdot[j])) return false;
    if (x.q[j] < ranges[j]->min - kSoftRangeMargin || x.q[j] > ranges[j]->max + kSoftRangeMargin) {
      return false;
    }
  }
  return std::isfinite(x.t);
}

// ---------------------------------------------------------------------------
// Integration

struct TrajectorySample {
  double t = 0.0;
  Vec4 q = Vec4::Zero();
  Vec4 qdot = Vec4::Zero();
  Vec2 tau_h = Vec2::Zero();  // applied (after clamp) at t
  Vec2 tau_r = Vec2::Zero();
  std::array<bool, 2> human_saturated{};
  std::array<bool, 2> exo_saturated{};
};

struct Trajectory {
  std::vector<TrajectorySample> samples;  // at the controller rate
  double dt = 0.0;
  double sample_rate = 0.0;

  std::size_t size() const { return samples.size(); }
};

using TorqueFn = std::function<TorqueInput(double, const CoupledState&)>;
using JointTorqueFn = std::function<Vec2(double, const CoupledState&)>;

// Human torque evaluated at every physics step; exo torque evaluated at the
// controller ticks and held in between.
struct SplitDrive {
  JointTorqueFn human;
  JointTorqueFn exo;
};

struct IntegratorSettings {
  double duration = 1.0;
  double dt = 0.25e-3;
};

namespace detail {

inline void check_divergence(const CoupledState& x) {
  for (int j = 0; j < 4; ++j) {
    if (!std::isfinite(x.q[j]) || !std::isfinite(x.qdot[j]) || std::abs(x.q[j]) > kMaxAngle ||
        std::abs(x.qdot[j]) > kMaxRate) {
      throw DivergenceError("rollout diverged at t = " + std::to_string(x.t) + " s (coordinate " +
                                std::to_string(j) + ")",
                            x.t);
    }
  }
}

inline CoupledState rk4_step(const CoupledModel& m, const CoupledState& x, const TorqueInput& u,
                             double dt) {
  auto deriv = [&](const CoupledState& s) { return forward_dynamics(m, s, u); };
  CoupledState s = x;
  const Vec4 a1 = deriv(s);
  const Vec4 v1 = x.qdot;

  s.q = x.q + 0.5 * dt * v1;
  s.qdot = x.qdot + 0.5 * dt * a1;
  s.t = x.t + 0.5 * dt;
  const Vec4 v2 = s.qdot;
  const Vec4 a2 = deriv(s);

  s.q = x.q + 0.5 * dt * v2;
  s.qdot = x.qdot + 0.5 * dt * a2;
  const Vec4 v3 = s.qdot;
  const Vec4 a3 = deriv(s);

  s.q = x.q + dt * v3;
  s.qdot = x.qdot + dt * a3;
  s.t = x.t + dt;
  const Vec4 v4 = s.qdot;
  const Vec4 a4 = deriv(s);

  CoupledState out;
  out.q = x.q + dt / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
  out.qdot = x.qdot + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
  out.t = x.t + dt;
  return out;
}

inline int steps_per_tick(double dt, double rate) {
  const double period = 1.0 / rate;
  const double ratio = period / dt;
  const int n = static_cast<int>(std::lround(ratio));
  if (n < 1 || std::abs(ratio - n) > 1e-6 * ratio) {
    throw std::invalid_argument("dt must divide the controller period");
  }
  return n;
}

}  // namespace detail

// Fixed-step RK4. Torques are evaluated by `drive` (human channel every
// physics step, exo channel at the controller rate), clamped to the
// configured limits, and held constant across each RK4 step. Samples are
// recorded at the controller rate from t0 to t0 + duration inclusive.
inline Trajectory integrate(const CoupledModel& m, const CoupledState& state0, const SplitDrive& drive,
                            const IntegratorSettings& cfg) {
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) throw std::invalid_argument("dt must be > 0");
  if (!(cfg.duration >= cfg.dt)) throw std::invalid_argument("duration must be >= dt");
  const double rate = m.exo.controller_rate;
  const int sub = detail::steps_per_tick(cfg.dt, rate);
  const auto ticks = static_cast<std::size_t>(std::floor(cfg.duration * rate + 1e-9));
  detail::check_divergence(state0);

  Trajectory traj;
  traj.dt = cfg.dt;
  traj.sample_rate = rate;
  traj.samples.reserve(ticks + 1);

  CoupledState x = state0;
  for (std::size_t k = 0; k <= ticks; ++k) {
    const Vec2 tau_r = drive.exo ? drive.exo(x.t, x) : Vec2::Zero();
    TrajectorySample rec;
    rec.t = x.t;
    rec.q = x.q;
    rec.qdot = x.qdot;
    for (int i = 0; i < sub; ++i) {
      TorqueInput u;
      u.tau_h = drive.human ? drive.human(x.t, x) : Vec2::Zero();
      u.tau_r = tau_r;
      const ClampedTorque c = clamp_torques(m, u);
      if (i == 0) {
        rec.tau_h = c.torque.tau_h;
        rec.tau_r = c.torque.tau_r;
        rec.human_saturated = c.human_saturated;
        rec.exo_saturated = c.exo_saturated;
      }
      if (k == ticks) break;  // final sample: record only
      x = detail::rk4_step(m, x, c.torque, cfg.dt);
      detail::check_divergence(x);
    }
    traj.samples.push_back(rec);
  }
  return traj;
}

// Whole input held at the controller rate.
inline Trajectory integrate(const CoupledModel& m, const CoupledState& state0, const TorqueFn& torque_fn,
                            const IntegratorSettings& cfg) {
  TorqueInput held;
  double held_at = -1.0;
  auto refresh = [&](double t, const CoupledState& s) {
    if (t != held_at) {
      held = torque_fn(t, s);
      held_at = t;
    }
  };
  // The exo channel runs first at each tick, so it refreshes the held input;
  // the human channel then reads the same value for every substep.
  SplitDrive drive;
  drive.exo = [&](double t, const CoupledState& s) {
    refresh(t, s);
    return held.tau_r;
  };
  drive.human = [&](double, const CoupledState&) { return held.tau_h; };
  return integrate(m, state0, drive, cfg);
}

}  // namespace exopt
