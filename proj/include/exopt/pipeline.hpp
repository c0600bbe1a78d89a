#pragma once

// Personalization pipeline: the weighted tracking/assistance objective,
// synthetic subjects, per-subject stiffness optimization and the
// baseline-versus-optimized cohort comparison.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "exopt/dynamics.hpp"
#include "exopt/gait.hpp"
#include "exopt/path_controller.hpp"
#include "exopt/surrogate_optimizer.hpp"
#include "exopt/torque_estimator.hpp"

namespace exopt {

// ---------------------------------------------------------------------------
// Objective

struct ObjectiveConfig {
  double w1 = 0.5;  // assistance weight
  double w2 = 0.5;  // tracking weight
  // Scales; zero means derive from the model:
  //   J1 = 2 (actuator limit)^2,  J2 = 2 (max_expected_error)^2.
  double j1 = 0.0;
  double j2 = 0.0;
  double max_expected_error = 0.35;  // rad

  double resolved_j1(const CoupledModel& m) const {
    const double lim = m.exo.actuator_torque_limit;
    return j1 > 0.0 ? j1 : 2.0 * lim * lim;
  }
  double resolved_j2() const { return j2 > 0.0 ? j2 : 2.0 * max_expected_error * max_expected_error; }
};

inline void validate(const ObjectiveConfig& c) {
  if (!(c.w1 > 0.0 && c.w1 < 1.0)) throw ValidationError("objective.w1", "must lie in (0, 1)");
  if (!(c.w2 > 0.0 && c.w2 < 1.0)) throw ValidationError("objective.w2", "must lie in (0, 1)");
  if (!(c.j1 >= 0.0) || !std::isfinite(c.j1)) throw ValidationError("objective.j1", "must be > 0 (or 0 to derive)");
  if (!(c.j2 >= 0.0) || !std::isfinite(c.j2)) throw ValidationError("objective.j2", "must be > 0 (or 0 to derive)");
  if (!(c.max_expected_error > 0.0)) throw ValidationError("objective.max_expected_error", "must be > 0");
}

struct ObjectiveTerms {
  double total = 0.0;
  double error_term = 0.0;   // (w2/J2) error_raw
  double assist_term = 0.0;  // (w1/J1) assist_raw
  double error_raw = 0.0;    // mean over samples of dq^T dq, rad^2
  double assist_raw = 0.0;   // mean over control intervals of u^T u, (N m)^2
  bool diverged = false;
};

struct Rollout {
  ObjectiveTerms terms;
  Trajectory trajectory;
  std::vector<ControllerOutput> controller;  // one per sample
  std::string message;
};

struct RolloutSettings {
  double dt = 0.25e-3;
  bool keep_trajectory = true;
};

// Forward prediction under the replayed human torque and the path controller
// acting on the exo joints. Divergence is reported through `diverged` with an
// infinite total.
inline Rollout evaluate_objective(const CoupledModel& model, const ReferencePath& path,
                                  const StiffnessParams& params, const HumanTorqueProfile& tau_h,
                                  const ObjectiveConfig& cfg, const RolloutSettings& rs = {}) {
  validate(cfg);
  validate(params);
  if (tau_h.size() < 2) throw ValidationError("tau_h", "profile needs at least 2 samples");

  ControllerLimits limits;
  limits.torque_limit = model.exo.actuator_torque_limit;
  limits.rate = model.exo.controller_rate;
  PathController controller(path, params, limits);

  Rollout out;
  SplitDrive drive;
  drive.human = [&](double t, const CoupledState&) { return tau_h.at(t); };
  drive.exo = [&](double, const CoupledState& x) {
    const ControllerOutput& c = controller.step(x.exo_q());
    out.controller.push_back(c);
    return c.tau_exo;
  };
  IntegratorSettings ic;
  ic.dt = rs.dt;
  ic.duration = tau_h.duration();
  try {
    out.trajectory = integrate(model, CoupledState::aligned(tau_h.q0, tau_h.qdot0, tau_h.t.front()), drive, ic);
  } catch (const DivergenceError& e) {
    out.terms.diverged = true;
    out.terms.total = std::numeric_limits<double>::infinity();
    out.terms.error_term = out.terms.assist_term = out.terms.total;
    out.message = e.what();
    if (!rs.keep_trajectory) out.controller.clear();
    return out;
  }

  const std::size_t n = out.controller.size();
  double err = 0.0, assist = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    err += out.controller[k].delta_q.squaredNorm();
    if (k + 1 < n) assist += out.controller[k].tau_exo.squaredNorm();
  }
  ObjectiveTerms& t = out.terms;
  t.error_raw = err / static_cast<double>(n);
  t.assist_raw = n > 1 ? assist / static_cast<double>(n - 1) : 0.0;
  t.assist_term = cfg.w1 / cfg.resolved_j1(model) * t.assist_raw;
  t.error_term = cfg.w2 / cfg.resolved_j2() * t.error_raw;
  t.total = t.assist_term + t.error_term;
  if (!rs.keep_trajectory) {
    out.trajectory.samples.clear();
    out.controller.clear();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic subjects

// Scales a joint's excursion about its cycle mean and shifts it, separately
// in stance and swing; the two are blended smoothly across phase changes.
struct JointWarp {
  double stance_amplitude = 1.0;
  double swing_amplitude = 1.0;
  double stance_offset = 0.0;  // rad
  double swing_offset = 0.0;   // rad

  bool operator==(const JointWarp&) const = default;
};

struct SynthSpec {
  std::string id = "S01";
  double height = 1.75;  // m
  double mass = 75.0;    // kg
  double period = 3.0;   // s per gait cycle
  JointWarp hip;
  JointWarp knee;
  double noise_std = 0.0;  // rad, per-cycle offset noise
  // Fraction of the estimated joint torque the subject delivers in swing
  // (1 = intact); models swing-phase weakness.
  double hip_swing_strength = 1.0;
  double knee_swing_strength = 1.0;
  std::size_t cycles = 9;
  double phase_blend = 0.1;  // cycle fraction

  bool operator==(const SynthSpec&) const = default;
};

inline void validate(const SynthSpec& s) {
  if (!(s.period > 0.0)) throw ValidationError("synth.period", "must be > 0");
  if (!(s.noise_std >= 0.0)) throw ValidationError("synth.noise_std", "must be >= 0");
  if (s.cycles < kExtractedCycles + 2) throw ValidationError("synth.cycles", "must be >= 7");
  if (!(s.phase_blend > 0.0 && s.phase_blend < 0.5)) throw ValidationError("synth.phase_blend", "must lie in (0, 0.5)");
  if (!(s.hip_swing_strength >= 0.0 && s.knee_swing_strength >= 0.0)) {
    throw ValidationError("synth.swing_strength", "must be >= 0");
  }
  for (const JointWarp* w : {&s.hip, &s.knee}) {
    if (!(w->stance_amplitude >= 0.0 && w->swing_amplitude >= 0.0)) {
      throw ValidationError("synth.warp", "amplitudes must be >= 0");
    }
  }
}

struct SyntheticSubject {
  SynthSpec spec;
  std::uint64_t seed = 0;
  CoupledModel model;
  RecordedMotion motion;     // full recording, all cycles
  RecordedMotion extracted;  // middle cycles at the controller rate
  HumanTorqueProfile tau_h;
};

// Intended (noise-free) pose at cycle fraction u.
inline Vec2 warped_pose(const SynthSpec& s, const PhaseBounds& bounds, const PeriodicCurve& hip,
                        const PeriodicCurve& knee, double u) {
  const double w = swing_weight(u, bounds, s.phase_blend);
  auto warp = [w](const JointWarp& jw, const PeriodicCurve& c, double uu) {
    const double amp = (1.0 - w) * jw.stance_amplitude + w * jw.swing_amplitude;
    const double off = (1.0 - w) * jw.stance_offset + w * jw.swing_offset;
    return c.mean() + amp * (c(uu) - c.mean()) + off;
  };
  return {warp(s.hip, hip, u), warp(s.knee, knee, u)};
}

// Kinematic recording: the warped reference loop at `rate`, with a random
// offset per cycle blended smoothly between cycle midpoints. Angles are
// checked against the subject's joint ranges.
inline RecordedMotion synth_motion(const SynthSpec& s, const ReferencePath& path, const SubjectModel& subject,
                                   std::uint64_t seed, double rate) {
  validate(s);
  std::vector<double> hs, ks;
  for (const auto& p : path.points) {
    hs.push_back(p.hip);
    ks.push_back(p.knee);
  }
  const PeriodicCurve hip(hs), knee(ks);
  const PhaseBounds bounds = phase_bounds(path);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Vec2> offsets(s.cycles + 2, Vec2::Zero());
  for (auto& o : offsets) {
    const double a = noise(rng), b = noise(rng);
    o = s.noise_std * Vec2(a, b);
  }

  const auto per_cycle = static_cast<std::size_t>(std::lround(s.period * rate));
  const std::size_t count = per_cycle * s.cycles + 1;
  RecordedMotion m;
  m.t.reserve(count);
  m.q.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double u = t / s.period;
    // offsets[c + 1] is centred on cycle c; blend between neighbouring centres
    const double x = u - 0.5;
    const double c = std::floor(x);
    const double f = smoothstep5(x - c);
    const auto lo = static_cast<std::size_t>(std::clamp(c + 1.0, 0.0, static_cast<double>(offsets.size() - 1)));
    const std::size_t hi = std::min(lo + 1, offsets.size() - 1);
    const Vec2 q = warped_pose(s, bounds, hip, knee, u) + (1.0 - f) * offsets[lo] + f * offsets[hi];
    if (!subject.leg.hip_range.contains(q[0]) || !subject.leg.knee_range.contains(q[1])) {
      throw ValidationError("synth.warp", "kinematics leave the joint range at t = " + std::to_string(t) + " s");
    }
    m.t.push_back(t);
    m.q.push_back(q);
  }
  for (std::size_t c = 0; c <= s.cycles; ++c) m.cycle_marks.push_back(c * per_cycle);
  return m;
}

// The extracted recording starts at a cycle start, so u = t / period.
inline void apply_swing_strength(HumanTorqueProfile& p, const SynthSpec& s, const PhaseBounds& bounds) {
  if (s.hip_swing_strength == 1.0 && s.knee_swing_strength == 1.0) return;
  const Vec2 strength(s.hip_swing_strength, s.knee_swing_strength);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double w = swing_weight((p.t[k] - p.t.front()) / s.period, bounds, s.phase_blend);
    const Vec2 f = Vec2::Ones() + w * (strength - Vec2::Ones());
    p.tau[k] = p.tau[k].cwiseProduct(f);
  }
}

inline SyntheticSubject synth_subject(const SynthSpec& spec, std::uint64_t seed,
                                      const ReferencePath& path = default_reference_path(),
                                      const EstimatorSettings& est = {}) {
  SyntheticSubject out;
  out.spec = spec;
  out.seed = seed;
  const SubjectModel subject = anthropometric_subject(spec.height, spec.mass);
  out.model = build_coupled_model(subject, fitted_exo(subject), default_bushings());
  const double rate = out.model.exo.controller_rate;
  out.motion = synth_motion(spec, path, subject, seed, rate);
  out.extracted = extract_cycles(out.motion, rate);
  out.tau_h = estimate_tau_h(out.model, out.extracted, est);
  apply_swing_strength(out.tau_h, spec, phase_bounds(path));
  return out;
}

// Cohort member i: anthropometry, gait warps and noise drawn from `seed`.
// Warps are mild, with a tendency towards reduced knee flexion and a weaker
// hip in swing.
inline SynthSpec random_synth_spec(std::size_t index, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x100000001b3ULL + index);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * U(rng); };
  SynthSpec s;
  char id[16];
  std::snprintf(id, sizeof id, "S%02zu", index + 1);
  s.id = id;
  s.height = uni(1.55, 1.95);
  s.mass = uni(20.0, 28.0) * s.height * s.height;
  s.hip.stance_amplitude = uni(0.85, 1.15);
  s.hip.swing_amplitude = uni(0.85, 1.2);
  s.hip.stance_offset = uni(-0.05, 0.05);
  s.hip.swing_offset = uni(-0.05, 0.05);
  s.knee.stance_amplitude = uni(0.8, 1.2);
  s.knee.swing_amplitude = uni(0.65, 1.05);
  s.knee.stance_offset = uni(-0.04, 0.06);
  s.knee.swing_offset = uni(-0.08, 0.04);
  s.noise_std = uni(0.005, 0.03);
  s.hip_swing_strength = uni(0.8, 1.0);
  return s;
}

// ---------------------------------------------------------------------------
// Personalization

inline constexpr double kBaselineStiffness = 340.0;  // N m/rad

struct PersonalizationConfig {
  ObjectiveConfig objective;
  double dt = 0.25e-3;
  std::size_t horizon_cycles = 0;  // 0 keeps the whole profile
  double lower = 0.0;
  double upper = StiffnessParams::kMax;
  std::size_t max_evals = 150;
  std::size_t batch_size = 1;
  std::size_t threads = 1;
  double baseline = kBaselineStiffness;
  std::uint64_t seed = 1;
};

inline void validate(const PersonalizationConfig& c) {
  validate(c.objective);
  if (!(c.dt > 0.0)) throw ValidationError("dt", "must be > 0");
  if (!(c.lower >= 0.0 && c.lower < c.upper && c.upper <= StiffnessParams::kMax)) {
    throw ValidationError("bounds", "need 0 <= lower < upper <= 600");
  }
  if (!(c.baseline >= c.lower && c.baseline <= c.upper)) throw ValidationError("baseline", "must lie within bounds");
  if (c.max_evals < 5) throw ValidationError("max_evals", "must be >= 5");
  if (c.batch_size == 0) throw ValidationError("batch_size", "must be >= 1");
}

struct SubjectCase {
  std::string id;
  CoupledModel model;
  HumanTorqueProfile tau_h;
};

struct PersonalizationResult {
  std::string subject_id;
  StiffnessParams optimized;
  StiffnessParams baseline;
  ObjectiveTerms opt;
  ObjectiveTerms base;
  OptResult trace;

  // Relative reduction of the total objective, percent.
  double improvement_pct() const {
    return base.total > 0.0 && std::isfinite(base.total) ? 100.0 * (base.total - opt.total) / base.total : 0.0;
  }
};

inline HumanTorqueProfile horizon_profile(const HumanTorqueProfile& p, std::size_t cycles) {
  return cycles == 0 ? p : p.truncated(cycles);
}

inline PersonalizationResult personalize(const SubjectCase& subject, const ReferencePath& path,
                                         const PersonalizationConfig& cfg) {
  validate(cfg);
  validate(path);
  const HumanTorqueProfile profile = horizon_profile(subject.tau_h, cfg.horizon_cycles);
  RolloutSettings rs;
  rs.dt = cfg.dt;
  rs.keep_trajectory = false;

  OptProblem p = OptProblem::box(4, cfg.lower, cfg.upper);
  p.max_evals = cfg.max_evals;
  p.seed = cfg.seed;
  p.batch_size = cfg.batch_size;
  p.threads = cfg.threads;
  p.initial_points.push_back(VectorXd::Constant(4, cfg.baseline));
  p.objective = [&](const VectorXd& x) {
    const Rollout r = evaluate_objective(subject.model, path, StiffnessParams::from_vector(x), profile,
                                         cfg.objective, rs);
    return r.terms.total;
  };

  PersonalizationResult out;
  out.subject_id = subject.id;
  out.trace = minimize(p);
  out.optimized = StiffnessParams::from_vector(out.trace.best_point);
  out.baseline = StiffnessParams::uniform(cfg.baseline);
  out.opt = evaluate_objective(subject.model, path, out.optimized, profile, cfg.objective, rs).terms;
  out.base = evaluate_objective(subject.model, path, out.baseline, profile, cfg.objective, rs).terms;
  return out;
}

// ---------------------------------------------------------------------------
// Cohort

struct CohortConfig {
  std::size_t n_subjects = 18;
  std::uint64_t seed = 2024;
  PersonalizationConfig personalization;
  std::size_t subject_threads = 1;
  std::size_t n_perm = 100000;
};

struct CohortMember {
  SyntheticSubject subject;
  PersonalizationResult result;
};

struct CohortResult {
  std::vector<CohortMember> members;
};

// Subject seeds derive from the cohort seed and the index only, so results do
// not depend on the thread count.
inline std::uint64_t subject_seed(std::uint64_t cohort_seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(cohort_seed), static_cast<std::uint32_t>(cohort_seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::array<std::uint32_t, 2> w{};
  seq.generate(w.begin(), w.end());
  return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
}

inline CohortMember run_member(const SynthSpec& spec, std::uint64_t seed, const ReferencePath& path,
                               const PersonalizationConfig& pc) {
  CohortMember m;
  m.subject = synth_subject(spec, seed, path);
  PersonalizationConfig cfg = pc;
  cfg.seed = seed;
  m.result = personalize({spec.id, m.subject.model, m.subject.tau_h}, path, cfg);
  return m;
}

inline CohortResult cohort_study(const std::vector<SynthSpec>& specs, const std::vector<std::uint64_t>& seeds,
                                 const ReferencePath& path, const PersonalizationConfig& pc,
                                 std::size_t threads = 1) {
  if (specs.size() < 2) throw ValidationError("cohort.n_subjects", "must be >= 2");
  if (seeds.size() != specs.size()) throw ValidationError("cohort.seeds", "need one seed per subject");
  validate(pc);
  CohortResult out;
  out.members.resize(specs.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, specs.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < specs.size(); ++i) out.members[i] = run_member(specs[i], seeds[i], path, pc);
    return out;
  }
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < specs.size(); i += workers) out.members[i] = run_member(specs[i], seeds[i], path, pc);
    }));
  }
  for (auto& j : jobs) j.get();
  return out;
}

inline CohortResult cohort_study(const CohortConfig& cc, const ReferencePath& path = default_reference_path()) {
  std::vector<SynthSpec> specs;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < cc.n_subjects; ++i) {
    specs.push_back(random_synth_spec(i, cc.seed));
    seeds.push_back(subject_seed(cc.seed, i));
  }
  return cohort_study(specs, seeds, path, cc.personalization, cc.subject_threads);
}

}  // namespace exopt
