#pragma once

// Subject, exoskeleton and strap-coupling parameters for the planar
// human-leg / exo-leg model. Both chains hang from a common, grounded hip
// axis; each chain is a thigh link and a lumped shank+foot link.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "exopt/errors.hpp"

namespace exopt {

struct AngleRange {
  double min = 0.0;
  double max = 0.0;

  bool contains(double q) const { return q >= min && q <= max; }
  double width() const { return max - min; }
  bool operator==(const AngleRange&) const = default;
};

// One rigid link. com_offset is measured from the proximal joint along the
// segment; inertia is about the centre of mass.
struct LinkParams {
  double length = 0.0;   // m
  double mass = 0.0;     // kg
  double com_offset = 0.0;  // m
  double inertia = 0.0;  // kg m^2

  bool operator==(const LinkParams&) const = default;
};

// Geometric/inertial description shared by the human and the exo chain.
struct LegGeometry {
  LinkParams thigh;
  LinkParams shank;  // shank and foot lumped
  AngleRange hip_range;
  AngleRange knee_range;

  bool operator==(const LegGeometry&) const = default;
};

struct SubjectModel {
  LegGeometry leg;
  double hip_torque_limit = 0.0;   // N m
  double knee_torque_limit = 0.0;  // N m

  bool operator==(const SubjectModel&) const = default;
};

struct ExoModel {
  LegGeometry leg;
  double actuator_torque_limit = 40.0;  // N m, per joint
  double controller_rate = 100.0;       // Hz

  bool operator==(const ExoModel&) const = default;
};

enum class StrapSite : int { UpperThigh = 0, LowerThigh = 1, UpperShank = 2, LowerShank = 3 };
inline constexpr std::array<StrapSite, 4> kStrapSites = {
    StrapSite::UpperThigh, StrapSite::LowerThigh, StrapSite::UpperShank, StrapSite::LowerShank};

inline constexpr std::string_view site_name(StrapSite s) {
  switch (s) {
    case StrapSite::UpperThigh: return "upper_thigh";
    case StrapSite::LowerThigh: return "lower_thigh";
    case StrapSite::UpperShank: return "upper_shank";
    case StrapSite::LowerShank: return "lower_shank";
  }
  return "?";
}

inline constexpr bool on_shank(StrapSite s) {
  return s == StrapSite::UpperShank || s == StrapSite::LowerShank;
}

// Linear spring-damper between matched strap points. Translational terms are
// per in-plane axis (x forward, y up).
struct SiteBushing {
  std::array<double, 2> translational_stiffness{};  // N/m
  std::array<double, 2> translational_damping{};    // N s/m
  double rotational_stiffness = 0.0;                // N m/rad
  double rotational_damping = 0.0;                  // N m s/rad

  bool operator==(const SiteBushing&) const = default;
};

struct BushingParams {
  std::array<SiteBushing, 4> sites{};

  const SiteBushing& at(StrapSite s) const { return sites[static_cast<int>(s)]; }
  SiteBushing& at(StrapSite s) { return sites[static_cast<int>(s)]; }
  bool operator==(const BushingParams&) const = default;
};

// Thigh/shank strap values: K = 10 kN/m, B = 0.1 kN s/m, K_rot = 0.1 kN m/rad,
// B_rot = 0.01 kN m s/rad. Damping read as viscous N s/m x 1e3.
inline BushingParams default_bushings() {
  SiteBushing b;
  b.translational_stiffness = {10.0e3, 10.0e3};
  b.translational_damping = {0.1e3, 0.1e3};
  b.rotational_stiffness = 0.1e3;
  b.rotational_damping = 0.01e3;
  BushingParams out;
  out.sites.fill(b);
  return out;
}

// One-sided spring-damper acting beyond a joint's configured range.
// Force = k p (1 + d dp/dt), clipped at zero, with p the penetration depth.
struct JointStop {
  double stiffness = 300.0;  // N m/rad
  double damping = 1.0;      // s/rad (Hunt-Crossley factor)

  bool operator==(const JointStop&) const = default;
};

struct CoupledModel {
  SubjectModel subject;
  ExoModel exo;
  BushingParams bushings;
  // distance from the proximal joint along the segment, indexed by StrapSite
  std::array<double, 4> strap_positions{};
  double gravity = 9.81;
  JointStop joint_stop;

  double strap_position(StrapSite s) const { return strap_positions[static_cast<int>(s)]; }
  bool operator==(const CoupledModel&) const = default;
};

namespace detail {

inline void require(bool ok, std::string field, std::string rule) {
  if (!ok) throw ValidationError(std::move(field), std::move(rule));
}

inline bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

inline void validate_link(const LinkParams& l, const std::string& prefix) {
  require(finite_positive(l.length), prefix + ".length", "must be > 0");
  require(finite_positive(l.mass), prefix + ".mass", "must be > 0");
  require(finite_positive(l.inertia), prefix + ".inertia", "must be > 0");
  require(std::isfinite(l.com_offset) && l.com_offset > 0.0 && l.com_offset < l.length,
          prefix + ".com_offset", "must lie in (0, length)");
}

inline void validate_range(const AngleRange& r, const std::string& field) {
  require(std::isfinite(r.min) && std::isfinite(r.max) && r.min < r.max, field,
          "must satisfy min < max");
}

inline void validate_leg(const LegGeometry& leg, const std::string& prefix) {
  validate_link(leg.thigh, prefix + ".thigh");
  validate_link(leg.shank, prefix + ".shank");
  validate_range(leg.hip_range, prefix + ".hip_range");
  validate_range(leg.knee_range, prefix + ".knee_range");
}

}  // namespace detail

inline void validate(const SubjectModel& s) {
  detail::validate_leg(s.leg, "subject");
  detail::require(detail::finite_positive(s.hip_torque_limit), "subject.hip_torque_limit",
                  "must be > 0");
  detail::require(detail::finite_positive(s.knee_torque_limit), "subject.knee_torque_limit",
                  "must be > 0");
}

inline void validate(const ExoModel& e) {
  detail::validate_leg(e.leg, "exo");
  detail::require(detail::finite_positive(e.actuator_torque_limit), "exo.actuator_torque_limit",
                  "must be > 0");
  detail::require(detail::finite_positive(e.controller_rate), "exo.controller_rate",
                  "must be > 0");
}

inline void validate(const BushingParams& b) {
  for (StrapSite s : kStrapSites) {
    const auto& site = b.at(s);
    const std::string p = "bushings." + std::string(site_name(s));
    auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    for (int axis = 0; axis < 2; ++axis) {
      const char* ax = axis == 0 ? "x" : "y";
      detail::require(nonneg(site.translational_stiffness[axis]),
                      p + ".translational_stiffness." + ax, "must be >= 0");
      detail::require(nonneg(site.translational_damping[axis]),
                      p + ".translational_damping." + ax, "must be >= 0");
    }
    detail::require(nonneg(site.rotational_stiffness), p + ".rotational_stiffness",
                    "must be >= 0");
    detail::require(nonneg(site.rotational_damping), p + ".rotational_damping", "must be >= 0");
  }
}

inline void validate(const CoupledModel& m) {
  validate(m.subject);
  validate(m.exo);
  validate(m.bushings);
  for (StrapSite s : kStrapSites) {
    const double pos = m.strap_position(s);
    const double human_len = on_shank(s) ? m.subject.leg.shank.length : m.subject.leg.thigh.length;
    const double exo_len = on_shank(s) ? m.exo.leg.shank.length : m.exo.leg.thigh.length;
    detail::require(std::isfinite(pos) && pos >= 0.0 && pos <= human_len && pos <= exo_len,
                    "strap_positions." + std::string(site_name(s)),
                    "must lie within both segment lengths");
  }
  detail::require(detail::finite_positive(m.gravity), "gravity", "must be > 0");
  detail::require(std::isfinite(m.joint_stop.stiffness) && m.joint_stop.stiffness >= 0.0,
                  "joint_stop.stiffness", "must be >= 0");
  detail::require(std::isfinite(m.joint_stop.damping) && m.joint_stop.damping >= 0.0,
                  "joint_stop.damping", "must be >= 0");
}

// Straps sit at 25% and 75% of each segment; the shorter of the two chains
// bounds the position so both attachment points exist.
inline std::array<double, 4> default_strap_positions(const SubjectModel& s, const ExoModel& e) {
  const double thigh = std::min(s.leg.thigh.length, e.leg.thigh.length);
  const double shank = std::min(s.leg.shank.length, e.leg.shank.length);
  return {0.25 * thigh, 0.75 * thigh, 0.25 * shank, 0.75 * shank};
}

inline CoupledModel build_coupled_model(const SubjectModel& subject, const ExoModel& exo,
                                        const BushingParams& bushings) {
  CoupledModel m;
  m.subject = subject;
  m.exo = exo;
  m.bushings = bushings;
  validate(subject);
  validate(exo);
  validate(bushings);
  m.strap_positions = default_strap_positions(subject, exo);
  validate(m);
  return m;
}

// ---------------------------------------------------------------------------
// Anthropometrics
//
// Segment fractions of body height / body mass after Winter, "Biomechanics and
// Motor Control of Human Movement" (4th ed., Table 4.1). The shank link lumps
// leg and foot: its length runs from the knee to the sole, its mass, centre of
// mass and radius of gyration are Winter's combined "foot and leg" entry,
// referred to the leg (knee-to-malleolus) length.
namespace anthropometry {
inline constexpr double kThighLengthFraction = 0.245;      // of height
inline constexpr double kLegLengthFraction = 0.246;        // knee to malleolus
inline constexpr double kFootHeightFraction = 0.039;       // malleolus to sole
inline constexpr double kThighMassFraction = 0.100;        // of body mass
inline constexpr double kShankFootMassFraction = 0.061;
inline constexpr double kThighComFraction = 0.433;         // of thigh length, from hip
inline constexpr double kShankFootComFraction = 0.606;     // of leg length, from knee
inline constexpr double kThighGyrationFraction = 0.323;    // about COM, of thigh length
inline constexpr double kShankFootGyrationFraction = 0.416;
// Isometric peak joint torques per kg body mass, sagittal plane.
inline constexpr double kHipTorquePerKg = 2.0;
inline constexpr double kKneeTorquePerKg = 1.8;
// Permissible sagittal ranges (rad): hip -30..120 deg, knee -5..135 deg flexion.
inline constexpr AngleRange kHipRange{-0.5236, 2.0944};
inline constexpr AngleRange kKneeRange{-0.0873, 2.3562};
}  // namespace anthropometry

inline SubjectModel anthropometric_subject(double height, double mass) {
  namespace a = anthropometry;
  detail::require(std::isfinite(height) && height >= 1.0 && height <= 2.3, "height",
                  "must lie in [1.0, 2.3] m");
  detail::require(std::isfinite(mass) && mass >= 30.0 && mass <= 200.0, "mass",
                  "must lie in [30, 200] kg");
  SubjectModel s;
  const double thigh_len = a::kThighLengthFraction * height;
  const double leg_len = a::kLegLengthFraction * height;
  s.leg.thigh.length = thigh_len;
  s.leg.thigh.mass = a::kThighMassFraction * mass;
  s.leg.thigh.com_offset = a::kThighComFraction * thigh_len;
  s.leg.thigh.inertia = s.leg.thigh.mass * std::pow(a::kThighGyrationFraction * thigh_len, 2);
  s.leg.shank.length = leg_len + a::kFootHeightFraction * height;
  s.leg.shank.mass = a::kShankFootMassFraction * mass;
  s.leg.shank.com_offset = a::kShankFootComFraction * leg_len;
  s.leg.shank.inertia = s.leg.shank.mass * std::pow(a::kShankFootGyrationFraction * leg_len, 2);
  s.leg.hip_range = a::kHipRange;
  s.leg.knee_range = a::kKneeRange;
  s.hip_torque_limit = a::kHipTorquePerKg * mass;
  s.knee_torque_limit = a::kKneeTorquePerKg * mass;
  return s;
}

// Exo link defaults. Masses are configuration, not measured values: a
// 2.0 kg thigh link and 1.5 kg shank link modelled as uniform rods.
namespace exo_defaults {
inline constexpr double kThighMass = 2.0;
inline constexpr double kShankMass = 1.5;
inline constexpr double kActuatorTorqueLimit = 40.0;
inline constexpr double kControllerRate = 100.0;
}  // namespace exo_defaults

// Exo whose link lengths are adjusted to the subject, hip to knee to sole.
inline ExoModel fitted_exo(const SubjectModel& subject) {
  namespace d = exo_defaults;
  ExoModel e;
  auto rod = [](double length, double mass) {
    LinkParams l;
    l.length = length;
    l.mass = mass;
    l.com_offset = 0.5 * length;
    l.inertia = mass * length * length / 12.0;
    return l;
  };
  e.leg.thigh = rod(subject.leg.thigh.length, d::kThighMass);
  e.leg.shank = rod(subject.leg.shank.length, d::kShankMass);
  e.leg.hip_range = subject.leg.hip_range;
  e.leg.knee_range = subject.leg.knee_range;
  e.actuator_torque_limit = d::kActuatorTorqueLimit;
  e.controller_rate = d::kControllerRate;
  return e;
}

inline CoupledModel default_model(double height = 1.75, double mass = 75.0) {
  const SubjectModel s = anthropometric_subject(height, mass);
  return build_coupled_model(s, fitted_exo(s), default_bushings());
}

}  // namespace exopt
