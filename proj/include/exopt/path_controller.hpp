#pragma once

// Assist-as-needed path controller. The reference point is the sample of a
// closed hip-knee reference loop closest to the current pose; the error is
// passed through a per-joint dead band, and a phase-scheduled PD law with
// damping B = c_cr * sqrt(K) produces the exo torque.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "exopt/dynamics.hpp"
#include "exopt/errors.hpp"

namespace exopt {

enum class Phase : int { Stance = 0, Swing = 1 };

inline const char* phase_label(Phase p) { return p == Phase::Stance ? "ST" : "SW"; }

inline Phase parse_phase(const std::string& s) {
  if (s == "ST" || s == "st") return Phase::Stance;
  if (s == "SW" || s == "sw") return Phase::Swing;
  throw ValidationError("phase", "unknown label '" + s + "' (expected ST or SW)");
}

struct PathPoint {
  double hip = 0.0;   // rad
  double knee = 0.0;  // rad
  Phase phase = Phase::Stance;

  Vec2 q() const { return {hip, knee}; }
  bool operator==(const PathPoint&) const = default;
};

inline constexpr double kDefaultDeadBand = 2.0 * std::numbers::pi / 180.0;

struct ReferencePath {
  std::vector<PathPoint> points;
  double dead_band_radius = kDefaultDeadBand;

  std::size_t size() const { return points.size(); }
};

inline void validate(const ReferencePath& path) {
  const auto& pts = path.points;
  if (pts.size() < 3) throw ValidationError("path.points", "need at least 3 points");
  if (!(std::isfinite(path.dead_band_radius) && path.dead_band_radius >= 0.0)) {
    throw ValidationError("path.dead_band_radius", "must be >= 0");
  }
  double max_step = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!std::isfinite(pts[i].hip) || !std::isfinite(pts[i].knee)) {
      throw ValidationError("path.points[" + std::to_string(i) + "]", "non-finite angle");
    }
    if (i + 1 < pts.size()) max_step = std::max(max_step, (pts[i + 1].q() - pts[i].q()).norm());
  }
  const double closing = (pts.front().q() - pts.back().q()).norm();
  if (closing > 2.0 * max_step) {
    throw ValidationError("path.points", "path is not closed: last point is not adjacent to the first");
  }
  int transitions = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].phase != pts[(i + 1) % pts.size()].phase) ++transitions;
  }
  if (transitions != 2) {
    throw ValidationError("path.phase",
                          "ST and SW must each form one contiguous arc (found " +
                              std::to_string(transitions) + " phase changes)");
  }
}

struct ClosestPoint {
  Vec2 q_ref = Vec2::Zero();
  std::size_t index = 0;
  Phase phase = Phase::Stance;
  double distance = 0.0;
};

// Exhaustive scan; the first (lowest-index) minimum wins ties.
inline ClosestPoint closest_reference_point(const ReferencePath& path, const Vec2& q_act) {
  ClosestPoint best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < path.points.size(); ++i) {
    const double dh = path.points[i].hip - q_act[0];
    const double dk = path.points[i].knee - q_act[1];
    const double d2 = dh * dh + dk * dk;
    if (d2 < best_d2) {
      best_d2 = d2;
      best.index = i;
    }
  }
  const PathPoint& p = path.points[best.index];
  best.q_ref = p.q();
  best.phase = p.phase;
  best.distance = std::sqrt(best_d2);
  return best;
}

inline double dead_band_error(double raw, double radius) {
  if (raw > radius) return raw - radius;
  if (raw < -radius) return raw + radius;
  return 0.0;
}

// Decision variables, ordered {K_hst, K_kst, K_hsw, K_ksw}.
struct StiffnessParams {
  double hip_stance = 0.0;
  double knee_stance = 0.0;
  double hip_swing = 0.0;
  double knee_swing = 0.0;
  Vec2 damping_scale = Vec2::Ones();  // c_cr per joint (hip, knee)

  static constexpr double kMax = 600.0;

  static StiffnessParams uniform(double k) { return {k, k, k, k, Vec2::Ones()}; }

  static StiffnessParams from_vector(const Eigen::Vector4d& v, const Vec2& c_cr = Vec2::Ones()) {
    return {v[0], v[1], v[2], v[3], c_cr};
  }

  Eigen::Vector4d to_vector() const { return {hip_stance, knee_stance, hip_swing, knee_swing}; }

  Vec2 for_phase(Phase p) const {
    return p == Phase::Stance ? Vec2(hip_stance, knee_stance) : Vec2(hip_swing, knee_swing);
  }

  bool operator==(const StiffnessParams& o) const {
    return to_vector() == o.to_vector() && damping_scale == o.damping_scale;
  }
};

inline void validate(const StiffnessParams& p, double k_max = StiffnessParams::kMax) {
  const Eigen::Vector4d v = p.to_vector();
  static constexpr std::array<const char*, 4> names = {"K_hst", "K_kst", "K_hsw", "K_ksw"};
  for (int i = 0; i < 4; ++i) {
    if (!(std::isfinite(v[i]) && v[i] >= 0.0 && v[i] <= k_max)) {
      throw ValidationError(names[i], "must lie in [0, " + std::to_string(k_max) + "]");
    }
  }
  for (int j = 0; j < 2; ++j) {
    if (!(std::isfinite(p.damping_scale[j]) && p.damping_scale[j] >= 0.0)) {
      throw ValidationError("c_cr", "must be >= 0");
    }
  }
}

// tau = K dq + B dqdot with B = c_cr sqrt(K), elementwise.
inline Vec2 damping_gains(const Vec2& stiffness, const Vec2& damping_scale) {
  return damping_scale.cwiseProduct(stiffness.cwiseSqrt());
}

inline Vec2 impedance_torque(const Vec2& stiffness, const Vec2& damping_scale, const Vec2& dq,
                             const Vec2& dq_dot) {
  return stiffness.cwiseProduct(dq) + damping_gains(stiffness, damping_scale).cwiseProduct(dq_dot);
}

struct ControllerOutput {
  Vec2 tau_exo = Vec2::Zero();        // commanded, after clamping
  Vec2 tau_unclamped = Vec2::Zero();
  Vec2 q_ref = Vec2::Zero();
  Vec2 delta_q_tilde = Vec2::Zero();  // q_ref - q_act
  Vec2 delta_q = Vec2::Zero();        // after the dead band
  Vec2 delta_q_dot = Vec2::Zero();
  std::size_t ref_index = 0;
  Phase active_phase = Phase::Stance;
  std::array<bool, 2> saturated{};
};

struct ControllerLimits {
  double torque_limit = 40.0;  // N m
  double rate = 100.0;         // Hz
};

// One controller tick. The error rate is the backward difference of the
// dead-banded error over one controller period (zero without `prev`).
inline ControllerOutput control_step(const ReferencePath& path, const StiffnessParams& params,
                                     const ControllerLimits& limits, const Vec2& q_act,
                                     const std::optional<ControllerOutput>& prev) {
  ControllerOutput out;
  const ClosestPoint ref = closest_reference_point(path, q_act);
  out.q_ref = ref.q_ref;
  out.ref_index = ref.index;
  out.active_phase = ref.phase;
  out.delta_q_tilde = ref.q_ref - q_act;
  for (int j = 0; j < 2; ++j) {
    out.delta_q[j] = dead_band_error(out.delta_q_tilde[j], path.dead_band_radius);
  }
  out.delta_q_dot = prev ? Vec2((out.delta_q - prev->delta_q) * limits.rate) : Vec2::Zero();
  out.tau_unclamped =
      impedance_torque(params.for_phase(ref.phase), params.damping_scale, out.delta_q, out.delta_q_dot);
  out.tau_exo = out.tau_unclamped;
  for (int j = 0; j < 2; ++j) {
    if (std::abs(out.tau_exo[j]) > limits.torque_limit) {
      out.tau_exo[j] = std::copysign(limits.torque_limit, out.tau_exo[j]);
      out.saturated[j] = true;
    }
  }
  return out;
}

// Stateful wrapper for one rollout: holds the previous output only.
class PathController {
 public:
  PathController(const ReferencePath& path, StiffnessParams params, ControllerLimits limits)
      : path_(&path), params_(params), limits_(limits) {}

  const ControllerOutput& step(const Vec2& q_act) {
    prev_ = control_step(*path_, params_, limits_, q_act, prev_);
    return *prev_;
  }

  void reset() { prev_.reset(); }
  const std::optional<ControllerOutput>& last() const { return prev_; }
  const StiffnessParams& params() const { return params_; }

 private:
  const ReferencePath* path_;
  StiffnessParams params_;
  ControllerLimits limits_;
  std::optional<ControllerOutput> prev_;
};

}  // namespace exopt
