#include <gtest/gtest.h>

#include <random>

#include "exopt/gait.hpp"
#include "exopt/path_controller.hpp"

using namespace exopt;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

ReferencePath square_loop() {
  ReferencePath p;
  p.dead_band_radius = 2.0 * kDeg;
  const double pts[8][2] = {{0, 0}, {0.1, 0}, {0.2, 0}, {0.2, 0.1}, {0.2, 0.2}, {0.1, 0.2}, {0, 0.2}, {0, 0.1}};
  for (int i = 0; i < 8; ++i) p.points.push_back({pts[i][0], pts[i][1], i < 4 ? Phase::Stance : Phase::Swing});
  return p;
}

}  // namespace

TEST(DeadBand, InsideBandIsZero) { EXPECT_EQ(dead_band_error(1.5 * kDeg, 2.0 * kDeg), 0.0); }

TEST(DeadBand, OutsideBandShiftsByRadius) {
  EXPECT_NEAR(dead_band_error(3.0 * kDeg, 2.0 * kDeg), 1.0 * kDeg, 1e-15);
  EXPECT_NEAR(dead_band_error(-3.0 * kDeg, 2.0 * kDeg), -1.0 * kDeg, 1e-15);
}

TEST(DeadBand, ContinuousAtEdge) {
  const double r = 2.0 * kDeg;
  EXPECT_EQ(dead_band_error(r, r), 0.0);
  EXPECT_NEAR(dead_band_error(std::nextafter(r, 1.0), r), 0.0, 1e-15);
  EXPECT_EQ(dead_band_error(-r, r), 0.0);
}

TEST(DeadBand, ZeroRadiusPassesThrough) { EXPECT_EQ(dead_band_error(0.3, 0.0), 0.3); }

TEST(ImpedanceTorque, ProportionalAtBaseline) {
  const Vec2 tau = impedance_torque(Vec2(340, 340), Vec2::Ones(), Vec2(0.1, 0.0), Vec2::Zero());
  EXPECT_NEAR(tau[0], 34.0, 1e-12);
  EXPECT_EQ(tau[1], 0.0);
}

TEST(ImpedanceTorque, CriticalDampingTerm) {
  const Vec2 tau = impedance_torque(Vec2(400, 400), Vec2::Ones(), Vec2::Zero(), Vec2(1.0, 0.0));
  EXPECT_NEAR(tau[0], 20.0, 1e-12);
  EXPECT_EQ(tau[1], 0.0);
}

TEST(ImpedanceTorque, DampingScaleMultipliesDampingOnly) {
  const Vec2 a = impedance_torque(Vec2(100, 100), Vec2(1, 1), Vec2(0.1, 0.2), Vec2(0.5, 0.5));
  const Vec2 b = impedance_torque(Vec2(100, 100), Vec2(2, 2), Vec2(0.1, 0.2), Vec2(0.5, 0.5));
  EXPECT_NEAR(b[0] - a[0], 10.0 * 0.5, 1e-12);
  EXPECT_NEAR(b[1] - a[1], 10.0 * 0.5, 1e-12);
}

TEST(ClosestPoint, TieGoesToLowestIndex) {
  // hairpin: sample 3 at (3, 0) and sample 7 at (3, 1) face each other across the channel
  ReferencePath p;
  const double pts[11][2] = {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4.5, 0}, {4.5, 1},
                             {4, 1}, {3, 1}, {2, 1}, {1, 1}, {0, 1}};
  for (int i = 0; i < 11; ++i) p.points.push_back({pts[i][0], pts[i][1], i < 5 ? Phase::Stance : Phase::Swing});
  const ClosestPoint c = closest_reference_point(p, Vec2(3.0, 0.5));
  EXPECT_EQ(c.index, 3u);
  EXPECT_EQ(c.phase, Phase::Stance);
  EXPECT_NEAR(c.distance, 0.5, 1e-15);
}

TEST(ClosestPoint, MatchesBruteForceOracle) {
  const ReferencePath p = default_reference_path(200);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> hip(-0.3, 0.6), knee(0.0, 1.2);
  for (int k = 0; k < 2000; ++k) {
    const Vec2 q(hip(rng), knee(rng));
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = std::hypot(p.points[i].hip - q[0], p.points[i].knee - q[1]);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    const ClosestPoint c = closest_reference_point(p, q);
    ASSERT_EQ(c.index, best);
    ASSERT_NEAR(c.distance, bd, 1e-12);
  }
}

TEST(ControlStep, TransparentOnPathWithinBand) {
  const ReferencePath p = default_reference_path(200);
  PathController ctl(p, StiffnessParams::uniform(340), ControllerLimits{});
  for (std::size_t i = 0; i < p.size(); i += 7) {
    const Vec2 q = p.points[i].q() + Vec2(0.01, -0.01);
    const ControllerOutput& out = ctl.step(q);
    EXPECT_EQ(out.tau_exo, Vec2::Zero());
  }
}

TEST(ControlStep, PhaseFollowsReferenceLabel) {
  const ReferencePath p = default_reference_path(200);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const ControllerOutput out = control_step(p, StiffnessParams::uniform(1), {}, p.points[i].q(), std::nullopt);
    ASSERT_EQ(out.active_phase, p.points[i].phase);
    ASSERT_EQ(out.ref_index, i);
  }
}

TEST(ControlStep, PhaseSelectsStiffness) {
  const ReferencePath p = square_loop();
  StiffnessParams k{100, 200, 300, 400, Vec2::Ones()};
  const ControllerOutput st = control_step(p, k, {}, Vec2(0.1, -0.1), std::nullopt);
  ASSERT_EQ(st.active_phase, Phase::Stance);
  EXPECT_NEAR(st.tau_exo[1], 200 * (0.1 - 2.0 * kDeg), 1e-12);
  const ControllerOutput sw = control_step(p, k, {}, Vec2(0.1, 0.3), std::nullopt);
  ASSERT_EQ(sw.active_phase, Phase::Swing);
  EXPECT_NEAR(sw.tau_exo[1], 400 * (-0.1 + 2.0 * kDeg), 1e-12);
}

TEST(ControlStep, ZeroStiffnessIsTransparent) {
  const ReferencePath p = default_reference_path(200);
  PathController ctl(p, StiffnessParams::uniform(0), ControllerLimits{});
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 0.3);
  for (int i = 0; i < 200; ++i) {
    EXPECT_EQ(ctl.step(Vec2(n(rng), 0.5 + n(rng))).tau_exo, Vec2::Zero());
  }
}

TEST(ControlStep, DampingScaleIrrelevantWithoutErrorRate) {
  const ReferencePath p = default_reference_path(200);
  StiffnessParams a = StiffnessParams::uniform(250), b = a;
  b.damping_scale = Vec2(3.0, 0.2);
  const Vec2 q(0.6, 0.3);
  EXPECT_EQ(control_step(p, a, {}, q, std::nullopt).tau_exo, control_step(p, b, {}, q, std::nullopt).tau_exo);
}

TEST(ControlStep, ErrorRateIsBackwardDifference) {
  const ReferencePath p = square_loop();
  PathController ctl(p, StiffnessParams::uniform(100), ControllerLimits{});
  const Vec2 a = ctl.step(Vec2(0.1, -0.1)).delta_q;
  const ControllerOutput& out = ctl.step(Vec2(0.1, -0.12));
  EXPECT_NEAR(out.delta_q_dot[1], (out.delta_q[1] - a[1]) * 100.0, 1e-12);
  EXPECT_NEAR(out.tau_unclamped[1], 100 * out.delta_q[1] + 10 * out.delta_q_dot[1], 1e-12);
}

TEST(ControlStep, ClampsAtActuatorLimit) {
  const ReferencePath p = square_loop();
  const ControllerOutput out = control_step(p, StiffnessParams::uniform(600), {}, Vec2(0.1, -0.5), std::nullopt);
  EXPECT_EQ(out.tau_exo[1], 40.0);
  EXPECT_TRUE(out.saturated[1]);
  EXPECT_GT(out.tau_unclamped[1], 40.0);
}

TEST(ControlStep, ContinuousAcrossBandEdge) {
  const ReferencePath p = square_loop();
  const auto k = StiffnessParams::uniform(600);
  double prev = control_step(p, k, {}, Vec2(0.1, -0.03), std::nullopt).tau_exo[1];
  for (int i = 1; i <= 600; ++i) {
    const double y = -0.03 + 0.06 * i / 600.0;
    const double tau = control_step(p, k, {}, Vec2(0.1, y), std::nullopt).tau_exo[1];
    ASSERT_LE(std::abs(tau - prev), 600 * 0.06 / 600.0 + 1e-12);
    prev = tau;
  }
}

TEST(StiffnessParams, ValidationNamesField) {
  StiffnessParams k = StiffnessParams::uniform(100);
  k.knee_swing = 601;
  try {
    validate(k);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "K_ksw");
  }
  k.knee_swing = -1;
  EXPECT_THROW(validate(k), ValidationError);
  EXPECT_NO_THROW(validate(StiffnessParams::uniform(600)));
}

TEST(StiffnessParams, VectorOrder) {
  const StiffnessParams k = StiffnessParams::from_vector(Eigen::Vector4d(1, 2, 3, 4));
  EXPECT_EQ(k.hip_stance, 1);
  EXPECT_EQ(k.knee_stance, 2);
  EXPECT_EQ(k.hip_swing, 3);
  EXPECT_EQ(k.knee_swing, 4);
  EXPECT_EQ(k.for_phase(Phase::Swing), Vec2(3, 4));
}

TEST(ReferencePath, ValidationRejectsOpenOrSplitArcs) {
  ReferencePath p = default_reference_path(100);
  EXPECT_NO_THROW(validate(p));
  ReferencePath open = p;
  open.points.resize(60);
  EXPECT_THROW(validate(open), ValidationError);
  ReferencePath split = p;
  split.points[10].phase = Phase::Swing;
  EXPECT_THROW(validate(split), ValidationError);
  ReferencePath nan = p;
  nan.points[3].hip = std::nan("");
  EXPECT_THROW(validate(nan), ValidationError);
}
