// Synthesize one subject, personalize its stiffnesses on a short horizon and
// print the result.

#include <cstdio>

#include "exopt/exopt.hpp"

int main() {
  using namespace exopt;
  SynthSpec spec;
  spec.id = "demo";
  spec.noise_std = 0.01;
  spec.hip_swing_strength = 0.8;
  const SyntheticSubject subject = synth_subject(spec, 7);

  PersonalizationConfig cfg;
  cfg.horizon_cycles = 1;
  cfg.dt = 0.5e-3;
  cfg.max_evals = 60;
  const ReferencePath path = default_reference_path();
  const PersonalizationResult r = personalize({spec.id, subject.model, subject.tau_h}, path, cfg);

  const auto k = r.optimized.to_vector();
  std::printf("K_hst %.1f  K_kst %.1f  K_hsw %.1f  K_ksw %.1f\n", k[0], k[1], k[2], k[3]);
  std::printf("baseline %.5g  optimized %.5g  improvement %.1f%%\n", r.base.total, r.opt.total, r.improvement_pct());
}
