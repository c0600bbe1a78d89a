#pragma once

// Feedforward human torque estimation from transparent-mode kinematics.
//
// The recorded hip/knee motion is tracked in forward simulation of the
// coupled model (exo transparent) by an inverse-dynamics feedforward plus a
// stiff PD loop on the human joints. The torques the human joints apply
// during that rollout are the estimate.

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/interpolators/makima.hpp>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "exopt/dynamics.hpp"
#include "exopt/errors.hpp"

namespace exopt {

struct RecordedMotion {
  std::vector<double> t;     // s, strictly increasing
  std::vector<Vec2> q;       // (hip, knee) rad
  std::vector<std::size_t> cycle_marks;  // sample index of each cycle start

  std::size_t size() const { return t.size(); }
  // A cycle is closed by the next mark; samples after the last mark are a
  // partial cycle.
  std::size_t full_cycles() const { return cycle_marks.size() < 2 ? 0 : cycle_marks.size() - 1; }
};

inline void validate(const RecordedMotion& m) {
  if (m.t.size() != m.q.size()) throw ValidationError("motion", "time and angle columns differ in length");
  if (m.t.size() < 4) throw ValidationError("motion", "need at least 4 samples");
  for (std::size_t i = 0; i < m.t.size(); ++i) {
    if (!std::isfinite(m.t[i]) || !m.q[i].allFinite()) {
      throw ValidationError("motion[" + std::to_string(i) + "]", "non-finite value");
    }
    if (i > 0 && !(m.t[i] > m.t[i - 1])) {
      throw ValidationError("motion.t", "must be strictly increasing (row " + std::to_string(i) + ")");
    }
  }
  for (std::size_t i = 0; i < m.cycle_marks.size(); ++i) {
    if (m.cycle_marks[i] >= m.t.size() || (i > 0 && m.cycle_marks[i] <= m.cycle_marks[i - 1])) {
      throw ValidationError("motion.cycle_marks", "must be increasing sample indices");
    }
  }
}

inline constexpr std::size_t kExtractedCycles = 5;

class TooFewCyclesError : public ValidationError {
 public:
  explicit TooFewCyclesError(std::size_t have)
      : ValidationError("motion.cycle_marks",
                        "need at least " + std::to_string(kExtractedCycles + 2) + " full cycles, have " +
                            std::to_string(have)) {}
};

// Middle five cycles (ties drop the extra cycle from the end), resampled
// uniformly at `rate` with time re-zeroed to the first retained cycle start.
inline RecordedMotion extract_cycles(const RecordedMotion& motion, double rate = 100.0) {
  validate(motion);
  const std::size_t n = motion.full_cycles();
  if (n < kExtractedCycles + 2) throw TooFewCyclesError(n);
  const std::size_t first = (n - kExtractedCycles) / 2;

  const double t0 = motion.t[motion.cycle_marks[first]];
  const double t1 = motion.t[motion.cycle_marks[first + kExtractedCycles]];
  const auto count = static_cast<std::size_t>(std::lround((t1 - t0) * rate)) + 1;

  std::vector<double> ts = motion.t, hip, knee;
  hip.reserve(motion.size());
  knee.reserve(motion.size());
  for (const auto& v : motion.q) {
    hip.push_back(v[0]);
    knee.push_back(v[1]);
  }
  using boost::math::interpolators::makima;
  const makima hip_fn(std::vector<double>(ts), std::move(hip));
  const makima knee_fn(std::move(ts), std::move(knee));

  RecordedMotion out;
  out.t.reserve(count);
  out.q.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double tk = std::min(t0 + static_cast<double>(k) / rate, t1);
    out.t.push_back(static_cast<double>(k) / rate);
    out.q.emplace_back(hip_fn(tk), knee_fn(tk));
  }
  for (std::size_t c = 0; c <= kExtractedCycles; ++c) {
    const double tc = motion.t[motion.cycle_marks[first + c]] - t0;
    out.cycle_marks.push_back(std::min(count - 1, static_cast<std::size_t>(std::lround(tc * rate))));
  }
  return out;
}

struct TrackingGains {
  Vec2 kp = Vec2::Constant(2000.0);  // N m/rad
  Vec2 kd = Vec2::Constant(2.0 * std::sqrt(2000.0));  // N m s/rad

  static TrackingGains from_stiffness(double kp) {
    TrackingGains g;
    g.kp = Vec2::Constant(kp);
    g.kd = Vec2::Constant(2.0 * std::sqrt(kp));
    return g;
  }
};

inline constexpr double kMaxTrackingResidual = std::numbers::pi / 180.0;  // 1 deg RMS

struct HumanTorqueProfile {
  double rate = 100.0;
  std::vector<double> t;
  std::vector<Vec2> tau;  // (hip, knee) N m
  std::vector<std::size_t> cycle_starts;
  Vec2 q0 = Vec2::Zero();
  Vec2 qdot0 = Vec2::Zero();
  Vec2 rms_residual = Vec2::Zero();  // rad, tracking residual of the estimation rollout
  std::array<bool, 2> saturated{};
  std::vector<std::string> warnings;

  std::size_t size() const { return tau.size(); }
  double duration() const { return t.empty() ? 0.0 : t.back() - t.front(); }

  // Linear interpolation, held constant outside the sampled span.
  Vec2 at(double time) const {
    if (tau.empty()) return Vec2::Zero();
    const double x = (time - t.front()) * rate;
    if (x <= 0.0) return tau.front();
    const auto i = static_cast<std::size_t>(x);
    if (i + 1 >= tau.size()) return tau.back();
    const double f = x - static_cast<double>(i);
    return (1.0 - f) * tau[i] + f * tau[i + 1];
  }

  // Keep the first `cycles` cycles.
  HumanTorqueProfile truncated(std::size_t cycles) const {
    if (cycles == 0 || cycles + 1 > cycle_starts.size()) return *this;
    HumanTorqueProfile out = *this;
    const std::size_t end = cycle_starts[cycles] + 1;
    out.t.resize(end);
    out.tau.resize(end);
    out.cycle_starts.resize(cycles + 1);
    return out;
  }
};

// Inverse dynamics of both chains moving together at (q, qd, qdd): the torque
// the human joints must supply to carry their own leg and the transparent exo.
inline Vec2 aligned_inverse_dynamics(const CoupledModel& m, const Vec2& q, const Vec2& qd, const Vec2& qdd) {
  const ChainTerms h = chain_terms(m.subject.leg, q, qd, m.gravity);
  const ChainTerms e = chain_terms(m.exo.leg, q, qd, m.gravity);
  return h.mass * qdd + h.coriolis + h.gravity + e.mass * qdd + e.coriolis + e.gravity;
}

struct EstimatorSettings {
  TrackingGains gains;
  double dt = 0.25e-3;
  bool feedforward = true;
};

// `motion` must be uniformly sampled at the exo controller rate (the output of
// extract_cycles).
inline HumanTorqueProfile estimate_tau_h(const CoupledModel& model, const RecordedMotion& motion,
                                         const EstimatorSettings& settings = {}) {
  validate(motion);
  for (int j = 0; j < 2; ++j) {
    if (!(settings.gains.kp[j] > 0.0) || !(settings.gains.kd[j] > 0.0)) {
      throw ValidationError("gains", "tracking gains must be > 0");
    }
  }
  const double rate = model.exo.controller_rate;
  const double h = 1.0 / rate;
  for (std::size_t i = 1; i < motion.size(); ++i) {
    if (std::abs(motion.t[i] - motion.t[i - 1] - h) > 1e-6) {
      throw ValidationError("motion.t", "must be uniformly sampled at the controller rate");
    }
  }

  std::vector<double> hip, knee;
  for (const auto& v : motion.q) {
    hip.push_back(v[0]);
    knee.push_back(v[1]);
  }
  const double t0 = motion.t.front();
  using boost::math::interpolators::cardinal_cubic_b_spline;
  // Fourth-order one-sided slopes at the ends; the spline's own endpoint
  // estimate leaves a large second-derivative artefact at the boundary.
  auto slope_left = [h](const std::vector<double>& y) {
    return (-25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4]) / (12.0 * h);
  };
  auto slope_right = [h](const std::vector<double>& y) {
    const std::size_t n = y.size();
    return (25.0 * y[n - 1] - 48.0 * y[n - 2] + 36.0 * y[n - 3] - 16.0 * y[n - 4] + 3.0 * y[n - 5]) /
           (12.0 * h);
  };
  if (hip.size() < 5) throw ValidationError("motion", "need at least 5 samples");
  const cardinal_cubic_b_spline<double> hip_fn(hip.begin(), hip.end(), t0, h, slope_left(hip),
                                               slope_right(hip));
  const cardinal_cubic_b_spline<double> knee_fn(knee.begin(), knee.end(), t0, h, slope_left(knee),
                                                slope_right(knee));
  const double t_end = motion.t.back();
  auto desired = [&](double t) {
    t = std::clamp(t, t0, t_end);
    struct {
      Vec2 q, qd, qdd;
    } d{{hip_fn(t), knee_fn(t)},
        {hip_fn.prime(t), knee_fn.prime(t)},
        {hip_fn.double_prime(t), knee_fn.double_prime(t)}};
    return d;
  };

  const auto d0 = desired(t0);
  CoupledState x0 = CoupledState::aligned(d0.q, d0.qd, t0);

  SplitDrive drive;
  drive.human = [&](double t, const CoupledState& x) {
    const auto d = desired(t);
    Vec2 tau = settings.gains.kp.cwiseProduct(d.q - x.human_q()) +
               settings.gains.kd.cwiseProduct(d.qd - x.human_qdot());
    if (settings.feedforward) tau += aligned_inverse_dynamics(model, d.q, d.qd, d.qdd);
    return tau;
  };
  IntegratorSettings ic;
  ic.dt = settings.dt;
  ic.duration = t_end - t0;
  const Trajectory traj = integrate(model, x0, drive, ic);

  HumanTorqueProfile out;
  out.rate = rate;
  out.q0 = d0.q;
  out.qdot0 = d0.qd;
  out.cycle_starts = motion.cycle_marks;
  const std::size_t n = std::min(traj.size(), motion.size());
  Vec2 sq = Vec2::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = traj.samples[k];
    out.t.push_back(s.t);
    out.tau.push_back(s.tau_h);
    for (int j = 0; j < 2; ++j) out.saturated[j] = out.saturated[j] || s.human_saturated[j];
    const Vec2 e = s.q.head<2>() - motion.q[k];
    sq += e.cwiseProduct(e);
  }
  out.rms_residual = (sq / static_cast<double>(n)).cwiseSqrt();
  for (int j = 0; j < 2; ++j) {
    const char* joint = j == 0 ? "hip" : "knee";
    if (out.rms_residual[j] > kMaxTrackingResidual) {
      out.warnings.push_back(std::string(joint) + " tracking residual " +
                             std::to_string(out.rms_residual[j] * 180.0 / std::numbers::pi) +
                             " deg RMS exceeds 1 deg");
    }
    if (out.saturated[j]) {
      out.warnings.push_back(std::string(joint) + " torque reached the subject limit");
    }
  }
  return out;
}

// Open-loop replay of a torque profile with the exo transparent.
inline Trajectory replay_transparent(const CoupledModel& model, const HumanTorqueProfile& profile,
                                     double dt = 0.25e-3) {
  SplitDrive drive;
  drive.human = [&](double t, const CoupledState&) { return profile.at(t); };
  IntegratorSettings ic;
  ic.dt = dt;
  ic.duration = profile.duration();
  return integrate(model, CoupledState::aligned(profile.q0, profile.qdot0, profile.t.front()), drive, ic);
}

}  // namespace exopt
