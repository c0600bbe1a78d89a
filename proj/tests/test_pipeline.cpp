#include <gtest/gtest.h>

#include "exopt/pipeline.hpp"

using namespace exopt;

namespace {

const ReferencePath& path() {
  static const ReferencePath p = default_reference_path();
  return p;
}

const SyntheticSubject& identity_subject() {
  static const SyntheticSubject s = synth_subject(SynthSpec{}, 1, path());
  return s;
}

PersonalizationConfig quick_config() {
  PersonalizationConfig pc;
  pc.dt = 0.5e-3;
  pc.horizon_cycles = 1;
  pc.max_evals = 12;
  return pc;
}

double peak_hip(const Trajectory& tr) {
  double m = -1e9;
  for (const auto& s : tr.samples) m = std::max(m, s.q[0]);
  return m;
}

}  // namespace

TEST(Objective, DefaultScales) {
  const ObjectiveConfig c;
  const CoupledModel m = default_model();
  EXPECT_DOUBLE_EQ(c.resolved_j1(m), 2 * 40.0 * 40.0);
  EXPECT_DOUBLE_EQ(c.resolved_j2(), 2 * 0.35 * 0.35);
  ObjectiveConfig o;
  o.j1 = 10;
  o.j2 = 0.1;
  EXPECT_EQ(o.resolved_j1(m), 10);
  EXPECT_EQ(o.resolved_j2(), 0.1);
}

TEST(Objective, WeightsMustBeOpenUnitInterval) {
  ObjectiveConfig c;
  c.w1 = 0.0;
  EXPECT_THROW(validate(c), ValidationError);
  c.w1 = 1.0;
  EXPECT_THROW(validate(c), ValidationError);
  c.w1 = 0.5;
  c.j2 = -1;
  EXPECT_THROW(validate(c), ValidationError);
}

TEST(Objective, PerfectTrackingScoresZero) {
  const SyntheticSubject& s = identity_subject();
  for (double k : {0.0, 340.0, 600.0}) {
    const Rollout r = evaluate_objective(s.model, path(), StiffnessParams::uniform(k), s.tau_h, {});
    EXPECT_FALSE(r.terms.diverged);
    EXPECT_EQ(r.terms.error_raw, 0.0) << "K = " << k;
    EXPECT_EQ(r.terms.assist_raw, 0.0);
    EXPECT_EQ(r.terms.total, 0.0);
    for (const auto& c : r.controller) ASSERT_EQ(c.delta_q, Vec2::Zero());
  }
}

TEST(Objective, TermsReconcile) {
  SynthSpec spec;
  spec.knee.swing_amplitude = 0.7;
  spec.noise_std = 0.02;
  const SyntheticSubject s = synth_subject(spec, 3, path());
  const ObjectiveConfig cfg;
  const Rollout r = evaluate_objective(s.model, path(), StiffnessParams{100, 200, 300, 400, Vec2::Ones()}, s.tau_h, cfg);
  ASSERT_GT(r.terms.error_raw, 0.0);
  ASSERT_GT(r.terms.assist_raw, 0.0);
  EXPECT_EQ(r.terms.total, r.terms.assist_term + r.terms.error_term);
  EXPECT_EQ(r.terms.assist_term, cfg.w1 / cfg.resolved_j1(s.model) * r.terms.assist_raw);
  EXPECT_EQ(r.terms.error_term, cfg.w2 / cfg.resolved_j2() * r.terms.error_raw);

  // independent recomputation from the controller log
  const std::size_t n = r.controller.size();
  ASSERT_EQ(n, r.trajectory.size());
  double e = 0, u = 0;
  for (std::size_t k = 0; k < n; ++k) {
    e += r.controller[k].delta_q.squaredNorm();
    if (k + 1 < n) u += r.trajectory.samples[k].tau_r.squaredNorm();
  }
  EXPECT_NEAR(r.terms.error_raw, e / n, 1e-12 * e / n);
  EXPECT_NEAR(r.terms.assist_raw, u / (n - 1), 1e-12 * u / (n - 1));
}

TEST(Objective, DoublingAssistWeightDoublesAssistTermOnly) {
  SynthSpec spec;
  spec.hip.swing_amplitude = 1.2;
  const SyntheticSubject s = synth_subject(spec, 4, path());
  ObjectiveConfig a, b;
  a.w1 = 0.3;
  b.w1 = 0.6;
  const auto k = StiffnessParams::uniform(200);
  const Rollout ra = evaluate_objective(s.model, path(), k, s.tau_h, a);
  const Rollout rb = evaluate_objective(s.model, path(), k, s.tau_h, b);
  ASSERT_GT(ra.terms.assist_term, 0.0);
  EXPECT_DOUBLE_EQ(rb.terms.assist_term, 2 * ra.terms.assist_term);
  EXPECT_EQ(rb.terms.error_term, ra.terms.error_term);
}

TEST(Objective, ZeroStiffnessIsPureTrackingError) {
  SynthSpec spec;
  spec.hip.swing_amplitude = 1.2;
  const SyntheticSubject s = synth_subject(spec, 4, path());
  const Rollout r = evaluate_objective(s.model, path(), StiffnessParams::uniform(0), s.tau_h, {});
  EXPECT_EQ(r.terms.assist_term, 0.0);
  EXPECT_GT(r.terms.error_term, 0.0);
  EXPECT_EQ(r.terms.total, r.terms.error_term);
}

TEST(Objective, DivergenceGivesInfiniteTotal) {
  CoupledModel m = default_model();
  m.subject.hip_torque_limit = 1e9;
  HumanTorqueProfile p;
  for (int i = 0; i <= 100; ++i) {
    p.t.push_back(i * 0.01);
    p.tau.emplace_back(1e7, 0.0);
  }
  const Rollout r = evaluate_objective(m, path(), StiffnessParams::uniform(100), p, {});
  EXPECT_TRUE(r.terms.diverged);
  EXPECT_TRUE(std::isinf(r.terms.total));
  EXPECT_FALSE(r.message.empty());
}

TEST(SynthSubject, SameSeedIdentical) {
  SynthSpec spec;
  spec.noise_std = 0.02;
  const SyntheticSubject a = synth_subject(spec, 5, path()), b = synth_subject(spec, 5, path());
  EXPECT_EQ(a.motion.q, b.motion.q);
  EXPECT_EQ(a.tau_h.tau, b.tau_h.tau);
  const SyntheticSubject c = synth_subject(spec, 6, path());
  EXPECT_NE(a.motion.q, c.motion.q);
}

TEST(SynthSubject, RecordingLayout) {
  const SyntheticSubject& s = identity_subject();
  EXPECT_EQ(s.motion.full_cycles(), 9u);
  EXPECT_EQ(s.motion.size(), 9u * 300u + 1u);
  EXPECT_EQ(s.extracted.size(), 5u * 300u + 1u);
  EXPECT_EQ(s.tau_h.size(), s.extracted.size());
  EXPECT_TRUE(s.tau_h.warnings.empty());
}

TEST(SynthSubject, ExaggeratedSwingHipFlexion) {
  SynthSpec spec;
  spec.hip.swing_amplitude = 1.3;
  const SyntheticSubject s = synth_subject(spec, 1, path());
  const Rollout exaggerated = evaluate_objective(s.model, path(), StiffnessParams::uniform(0), s.tau_h, {});
  const Rollout normal =
      evaluate_objective(identity_subject().model, path(), StiffnessParams::uniform(0), identity_subject().tau_h, {});
  EXPECT_GT(peak_hip(exaggerated.trajectory), peak_hip(normal.trajectory) + 0.02);
  EXPECT_GT(exaggerated.terms.error_raw, 0.0);
}

TEST(SynthSubject, WarpOutsideJointRangeRejected) {
  SynthSpec spec;
  spec.knee.stance_offset = -0.3;
  try {
    synth_subject(spec, 1, path());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "synth.warp");
  }
}

TEST(SynthSubject, SwingStrengthScalesSwingTorqueOnly) {
  HumanTorqueProfile p;
  for (int i = 0; i <= 300; ++i) {
    p.t.push_back(i * 0.01);
    p.tau.emplace_back(10.0, 10.0);
  }
  SynthSpec spec;
  spec.knee_swing_strength = 0.5;
  apply_swing_strength(p, spec, phase_bounds(path()));
  EXPECT_DOUBLE_EQ(p.tau[90][1], 10.0);   // u = 0.3
  EXPECT_DOUBLE_EQ(p.tau[240][1], 5.0);  // u = 0.8
  EXPECT_DOUBLE_EQ(p.tau[240][0], 10.0);
}

TEST(Personalize, SeededBaselineAndRecomputedScores) {
  SynthSpec spec;
  spec.hip_swing_strength = 0.7;
  spec.noise_std = 0.02;
  const SyntheticSubject s = synth_subject(spec, 7, path());
  const PersonalizationConfig pc = quick_config();
  const PersonalizationResult r = personalize({"S", s.model, s.tau_h}, path(), pc);
  EXPECT_EQ(r.trace.history.front().point, VectorXd::Constant(4, 340.0));
  EXPECT_EQ(r.trace.history.size(), 12u);
  EXPECT_LE(r.opt.total, r.base.total);
  EXPECT_GE(r.improvement_pct(), 0.0);
  EXPECT_EQ(r.baseline, StiffnessParams::uniform(340));

  RolloutSettings rs;
  rs.dt = pc.dt;
  const HumanTorqueProfile h = horizon_profile(s.tau_h, 1);
  EXPECT_EQ(r.opt.total, evaluate_objective(s.model, path(), r.optimized, h, pc.objective, rs).terms.total);
  EXPECT_EQ(r.base.total, r.trace.history.front().value);
}

TEST(Personalize, PerfectTrackerNeverWorseThanBaseline) {
  const SyntheticSubject& s = identity_subject();
  const PersonalizationResult r = personalize({"S", s.model, s.tau_h}, path(), quick_config());
  EXPECT_LE(r.opt.total, r.base.total);
  EXPECT_EQ(r.opt.assist_term, 0.0);
}

TEST(Personalize, DeterministicPerSeed) {
  SynthSpec spec;
  spec.noise_std = 0.02;
  const SyntheticSubject s = synth_subject(spec, 8, path());
  const auto a = personalize({"S", s.model, s.tau_h}, path(), quick_config());
  const auto b = personalize({"S", s.model, s.tau_h}, path(), quick_config());
  EXPECT_EQ(a.optimized, b.optimized);
  EXPECT_EQ(a.opt.total, b.opt.total);
}

TEST(Cohort, ThreadCountDoesNotChangeResults) {
  CohortConfig cc;
  cc.n_subjects = 2;
  cc.personalization = quick_config();
  cc.personalization.max_evals = 8;
  const CohortResult a = cohort_study(cc);
  cc.subject_threads = 2;
  const CohortResult b = cohort_study(cc);
  ASSERT_EQ(a.members.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.members[i].result.optimized, b.members[i].result.optimized);
    EXPECT_EQ(a.members[i].result.opt.total, b.members[i].result.opt.total);
    EXPECT_GE(a.members[i].result.improvement_pct(), 0.0);
  }
  EXPECT_NE(subject_seed(2024, 0), subject_seed(2024, 1));
}

TEST(Cohort, NeedsTwoSubjects) {
  CohortConfig cc;
  cc.n_subjects = 1;
  EXPECT_THROW(cohort_study(cc), ValidationError);
}

TEST(Cohort, RandomSpecsReproducible) {
  EXPECT_EQ(random_synth_spec(3, 99), random_synth_spec(3, 99));
  EXPECT_NE(random_synth_spec(3, 99), random_synth_spec(4, 99));
  EXPECT_EQ(random_synth_spec(0, 1).id, "S01");
}
