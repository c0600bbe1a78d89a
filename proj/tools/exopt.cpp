// exopt command-line front end.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "exopt/exopt.hpp"

namespace fs = std::filesystem;
using namespace exopt;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

void write_or_print(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-") {
    std::cout << content;
  } else {
    io::write_file(out, content);
  }
}

CoupledModel load_model(const std::string& path) {
  if (path.empty()) return default_model();
  return config::model_from_json(config::read_json(path));
}

config::PipelineConfig load_pipeline(const std::string& path) {
  if (path.empty()) return config::pipeline_from_json({{"schema_version", config::kSchemaVersion}});
  return config::pipeline_from_json(config::read_json(path));
}

ReferencePath load_path(const std::string& path, double dead_band) {
  if (path.empty()) return default_reference_path(200, dead_band);
  ReferencePath p = io::read_path(path, dead_band);
  validate(p);
  return p;
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError(p.string(), ec.message());
}

// Recorded kinematics with cycle marks from a file or detected from the hip
// angle; the middle cycles are extracted when enough are present.
RecordedMotion load_motion(const std::string& motion_path, const std::string& marks_path, double rate) {
  RecordedMotion m = io::read_motion(motion_path);
  if (!marks_path.empty()) {
    m.cycle_marks = io::read_cycle_marks(marks_path, m);
  } else if (m.size() > 1) {
    const double h = (m.t.back() - m.t.front()) / static_cast<double>(m.size() - 1);
    m.cycle_marks = detect_cycle_marks(m.q, static_cast<std::size_t>(std::ceil(0.4 / h)));
  }
  validate(m);
  if (m.full_cycles() >= kExtractedCycles + 2) return extract_cycles(m, rate);
  std::cerr << "note: " << m.full_cycles() << " full cycles found; using the recording as is\n";
  return m;
}

void print_warnings(const HumanTorqueProfile& p) {
  for (const auto& w : p.warnings) std::cerr << "warning: " << w << "\n";
}

std::string result_summary(const PersonalizationResult& r) {
  char buf[512];
  const auto k = r.optimized.to_vector();
  std::snprintf(buf, sizeof buf,
                "subject %s\n"
                "optimized K (N m/rad): hip ST %.2f  knee ST %.2f  hip SW %.2f  knee SW %.2f\n"
                "objective baseline %.6g (error %.6g, assist %.6g)\n"
                "objective optimized %.6g (error %.6g, assist %.6g)\n"
                "improvement %.2f %%\n",
                r.subject_id.c_str(), k[0], k[1], k[2], k[3], r.base.total, r.base.error_term, r.base.assist_term,
                r.opt.total, r.opt.error_term, r.opt.assist_term, r.improvement_pct());
  return buf;
}

// Per-subject rollouts and traces alongside the report.
void write_subject_artifacts(const fs::path& dir, const SubjectCase& subject, const ReferencePath& path,
                             const PersonalizationConfig& pc, const PersonalizationResult& r) {
  make_dir(dir);
  const HumanTorqueProfile profile = horizon_profile(subject.tau_h, pc.horizon_cycles);
  RolloutSettings rs;
  rs.dt = pc.dt;
  const Rollout base = evaluate_objective(subject.model, path, r.baseline, profile, pc.objective, rs);
  const Rollout opt = evaluate_objective(subject.model, path, r.optimized, profile, pc.objective, rs);
  io::write_file((dir / "trace.csv").string(), io::format_trace(r.trace));
  io::write_file((dir / "trajectory_baseline.csv").string(), io::format_trajectory(base.trajectory));
  io::write_file((dir / "trajectory_optimized.csv").string(), io::format_trajectory(opt.trajectory));
  io::write_file((dir / "path_overlay.csv").string(),
                 report::path_overlay_series(path, base.trajectory, opt.trajectory));
  io::write_file((dir / "summary.txt").string(), result_summary(r));
}

std::vector<double> read_column(const std::string& path, const std::string& column) {
  const io::Table t = io::read_table(path);
  std::size_t c = 0;
  if (!column.empty()) {
    const auto found = t.column(column);
    if (!found) throw IoError(path, "missing column '" + column + "'");
    c = *found;
  }
  std::vector<double> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) out.push_back(io::detail::number_at(t, r, c, path));
  return out;
}

void print_summary(const std::string& name, const std::vector<double>& x) {
  const stats::Summary s = stats::summarize(x);
  std::printf("%s: n %zu  mean %.6g  sd %.6g  median %.6g  Q1 %.6g  Q3 %.6g  IQR %.6g", name.c_str(), x.size(), s.mean,
              s.stddev, s.median, s.q1, s.q3, s.iqr);
  try {
    std::printf("  CV %.6g", stats::cv(x));
  } catch (const stats::ZeroMeanError&) {
    std::printf("  CV n/a");
  }
  std::printf("\n");
  const auto flags = stats::iqr_outliers(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (flags[i]) std::printf("  outlier: row %zu value %.6g\n", i + 1, x[i]);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-based stiffness personalization for assist-as-needed exoskeleton path control"};
  app.set_version_flag("--version", std::string(EXOPT_VERSION));
  app.require_subcommand(1);

  // model build
  auto* model_cmd = app.add_subcommand("model", "Model documents");
  model_cmd->require_subcommand(1);
  auto* model_build = model_cmd->add_subcommand("build", "Validate a model document and echo it fully resolved");
  std::string model_in, model_out;
  double height = 0.0, mass = 0.0;
  model_build->add_option("config", model_in, "Model document (JSON); defaults when omitted");
  model_build->add_option("--height", height, "Body height, m (anthropometric subject)");
  model_build->add_option("--mass", mass, "Body mass, kg (anthropometric subject)");
  model_build->add_option("-o,--output", model_out, "Output file (stdout by default)");

  // path validate | resample | default
  auto* path_cmd = app.add_subcommand("path", "Reference paths");
  path_cmd->require_subcommand(1);
  double dead_band_deg = 2.0;
  std::string path_in, path_out;
  std::size_t resample_n = 200;
  auto* path_validate = path_cmd->add_subcommand("validate", "Check a path file");
  path_validate->add_option("path", path_in, "Path file (hip_rad, knee_rad, phase)")->required();
  path_validate->add_option("--dead-band-deg", dead_band_deg, "Dead-band radius, degrees");
  auto* path_resample = path_cmd->add_subcommand("resample", "Resample a path to N points");
  path_resample->add_option("path", path_in, "Path file")->required();
  path_resample->add_option("-n,--points", resample_n, "Number of points")->required();
  path_resample->add_option("-o,--output", path_out, "Output file (stdout by default)");
  auto* path_default = path_cmd->add_subcommand("default", "Write the built-in reference path");
  path_default->add_option("-n,--points", resample_n, "Number of points");
  path_default->add_option("-o,--output", path_out, "Output file (stdout by default)");

  // estimate-torques
  auto* est_cmd = app.add_subcommand("estimate-torques", "Estimate the feedforward human torque profile");
  std::string motion_in, marks_in, torques_out, extracted_out;
  est_cmd->add_option("--model", model_in, "Model document (JSON)");
  est_cmd->add_option("--motion", motion_in, "Kinematics file (t, hip_rad, knee_rad)")->required();
  est_cmd->add_option("--marks", marks_in, "Cycle-start file (t_start); detected from the hip angle if omitted");
  est_cmd->add_option("-o,--output", torques_out, "Torque profile output (stdout by default)");
  est_cmd->add_option("--extracted", extracted_out, "Also write the extracted, resampled kinematics");
  double kp = 2000.0;
  est_cmd->add_option("--kp", kp, "Tracking stiffness, N m/rad (damping 2 sqrt(kp))");

  // personalize
  auto* pers_cmd = app.add_subcommand("personalize", "Optimize the four path-controller stiffnesses for one subject");
  std::string config_in, path_file, torques_in, out_dir = "runs", run_id = "run", subject_id = "S01";
  pers_cmd->add_option("--model", model_in, "Model document (JSON)");
  pers_cmd->add_option("--motion", motion_in, "Kinematics file")->required();
  pers_cmd->add_option("--marks", marks_in, "Cycle-start file");
  pers_cmd->add_option("--torques", torques_in, "Precomputed torque profile for the extracted kinematics");
  pers_cmd->add_option("--path", path_file, "Reference path file (built-in path by default)");
  pers_cmd->add_option("--config", config_in, "Pipeline configuration (JSON)");
  pers_cmd->add_option("--out", out_dir, "Output directory");
  pers_cmd->add_option("--run-id", run_id, "Run identifier");
  pers_cmd->add_option("--subject-id", subject_id, "Subject identifier");

  // cohort
  auto* cohort_cmd = app.add_subcommand("cohort", "Synthetic cohort: baseline versus optimized stiffness");
  std::size_t n_subjects = 0, threads = 0, horizon = 0, max_evals = 0;
  std::uint64_t cohort_seed = 0;
  double dt_override = 0.0;
  bool no_artifacts = false;
  cohort_cmd->add_option("--config", config_in, "Pipeline configuration (JSON)");
  cohort_cmd->add_option("--path", path_file, "Reference path file");
  cohort_cmd->add_option("--out", out_dir, "Output directory");
  cohort_cmd->add_option("--run-id", run_id, "Run identifier");
  cohort_cmd->add_option("--subjects", n_subjects, "Override cohort.n_subjects");
  cohort_cmd->add_option("--seed", cohort_seed, "Override cohort.seed");
  cohort_cmd->add_option("--threads", threads, "Subjects processed concurrently");
  cohort_cmd->add_option("--horizon-cycles", horizon, "Override horizon_cycles");
  cohort_cmd->add_option("--dt", dt_override, "Override dt, s");
  cohort_cmd->add_option("--max-evals", max_evals, "Override max_evals");
  cohort_cmd->add_flag("--no-artifacts", no_artifacts, "Skip per-subject trajectories and traces");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Summary statistics and permutation tests on delimited samples");
  std::vector<std::string> sample_files;
  std::string column, report_in;
  std::size_t n_perm = 100000;
  std::uint64_t stats_seed = 1;
  stats_cmd->add_option("samples", sample_files, "One or two sample files")->expected(0, 2);
  stats_cmd->add_option("--column", column, "Column name (first column by default)");
  stats_cmd->add_option("--n-perm", n_perm, "Permutations");
  stats_cmd->add_option("--seed", stats_seed, "Permutation seed");
  stats_cmd->add_option("--report", report_in, "Recompute and check the aggregates of a report.json");

  // synth-subject
  auto* synth_cmd = app.add_subcommand("synth-subject", "Generate a synthetic subject: kinematics and torques");
  std::string spec_in;
  std::uint64_t synth_seed = 1;
  SynthSpec spec;
  synth_cmd->add_option("--spec", spec_in, "Subject spec (JSON); options below override it");
  synth_cmd->add_option("--seed", synth_seed, "Noise seed");
  synth_cmd->add_option("--out", out_dir, "Output directory")->required();
  auto* o_id = synth_cmd->add_option("--id", spec.id, "Subject identifier");
  auto* o_h = synth_cmd->add_option("--height", spec.height, "Body height, m");
  auto* o_m = synth_cmd->add_option("--mass", spec.mass, "Body mass, kg");
  auto* o_n = synth_cmd->add_option("--noise", spec.noise_std, "Per-cycle offset noise, rad");
  auto* o_hs = synth_cmd->add_option("--hip-swing-strength", spec.hip_swing_strength, "Swing torque fraction, hip");
  auto* o_ks = synth_cmd->add_option("--knee-swing-strength", spec.knee_swing_strength, "Swing torque fraction, knee");
  auto* o_ka = synth_cmd->add_option("--knee-swing-amplitude", spec.knee.swing_amplitude, "Swing excursion factor, knee");
  auto* o_ha = synth_cmd->add_option("--hip-swing-amplitude", spec.hip.swing_amplitude, "Swing excursion factor, hip");

  CLI11_PARSE(app, argc, argv);

  try {
    if (model_build->parsed()) {
      CoupledModel m;
      if (!model_in.empty()) {
        m = load_model(model_in);
      } else {
        m = default_model(height > 0.0 ? height : 1.75, mass > 0.0 ? mass : 75.0);
      }
      write_or_print(model_out, config::model_to_json(m).dump(2) + "\n");
    } else if (path_validate->parsed()) {
      ReferencePath p = io::read_path(path_in, dead_band_deg * kDeg);
      validate(p);
      const PhaseBounds b = phase_bounds(p);
      std::printf("ok: %zu points, swing from %.3f to %.3f of the cycle, dead band %.3g deg\n", p.points.size(),
                  b.swing_start, b.swing_end, dead_band_deg);
    } else if (path_resample->parsed()) {
      const ReferencePath p = io::read_path(path_in);
      write_or_print(path_out, io::format_path(resample_path(p, resample_n)));
    } else if (path_default->parsed()) {
      write_or_print(path_out, io::format_path(default_reference_path(resample_n)));
    } else if (est_cmd->parsed()) {
      const CoupledModel m = load_model(model_in);
      const RecordedMotion motion = load_motion(motion_in, marks_in, m.exo.controller_rate);
      EstimatorSettings es;
      es.gains = TrackingGains::from_stiffness(kp);
      const HumanTorqueProfile p = estimate_tau_h(m, motion, es);
      print_warnings(p);
      if (!extracted_out.empty()) io::write_file(extracted_out, io::format_motion(motion));
      write_or_print(torques_out, io::format_torques(p));
      std::fprintf(stderr, "tracking residual (RMS): hip %.4f deg, knee %.4f deg\n", p.rms_residual[0] / kDeg,
                   p.rms_residual[1] / kDeg);
    } else if (pers_cmd->parsed()) {
      const config::PipelineConfig cfg = load_pipeline(config_in);
      const CoupledModel m = load_model(model_in);
      const ReferencePath path = load_path(path_file, cfg.dead_band);
      const RecordedMotion motion = load_motion(motion_in, marks_in, m.exo.controller_rate);
      HumanTorqueProfile profile;
      if (torques_in.empty()) {
        profile = estimate_tau_h(m, motion);
        print_warnings(profile);
      } else {
        profile = io::read_torques(torques_in, m.exo.controller_rate);
        io::attach_initial_state(profile, motion);
      }
      const SubjectCase subject{subject_id, m, profile};
      const PersonalizationResult r = personalize(subject, path, cfg.personalization());
      const fs::path dir = fs::path(out_dir) / run_id / subject_id;
      write_subject_artifacts(dir, subject, path, cfg.personalization(), r);
      std::cout << result_summary(r) << "artifacts in " << dir.string() << "\n";
    } else if (cohort_cmd->parsed()) {
      config::PipelineConfig cfg = load_pipeline(config_in);
      PersonalizationConfig& pc = cfg.personalization();
      if (n_subjects) cfg.cohort.n_subjects = n_subjects;
      if (cohort_cmd->count("--seed")) cfg.cohort.seed = cohort_seed;
      if (threads) cfg.cohort.subject_threads = threads;
      if (cohort_cmd->count("--horizon-cycles")) pc.horizon_cycles = horizon;
      if (dt_override > 0.0) pc.dt = dt_override;
      if (max_evals) pc.max_evals = max_evals;
      const ReferencePath path = load_path(path_file, cfg.dead_band);
      const CohortResult result = cohort_study(cfg.cohort, path);
      const report::CohortReport rep = report::build_report(result, cfg, run_id);
      using report::Format;
      const auto files =
          report::emit(rep, {Format::TextTable, Format::StructuredDocument, Format::PlotSeries}, out_dir);
      if (!no_artifacts) {
        for (const auto& mem : result.members) {
          write_subject_artifacts(fs::path(out_dir) / run_id / mem.result.subject_id,
                                  {mem.result.subject_id, mem.subject.model, mem.subject.tau_h}, path, pc, mem.result);
        }
      }
      std::cout << report::format_text(rep) << "report in " << (fs::path(out_dir) / run_id).string() << "\n";
    } else if (stats_cmd->parsed()) {
      if (!report_in.empty()) {
        const report::CohortReport stored = report::from_json(config::read_json(report_in));
        report::CohortReport again = stored;
        again.aggregates = {};
        report::recompute(again, stored.aggregates.n_perm, stored.provenance.cohort_seed);
        std::cout << report::format_text(again);
        if (!(again == stored)) {
          std::cerr << "error: stored aggregates differ from the recomputation\n";
          return 1;
        }
        std::cout << "aggregates match the per-subject rows\n";
      }
      if (sample_files.empty() && report_in.empty()) throw ValidationError("samples", "give sample files or --report");
      std::vector<std::vector<double>> samples;
      for (const auto& f : sample_files) {
        samples.push_back(read_column(f, column));
        print_summary(f, samples.back());
      }
      if (samples.size() == 2) {
        const double p = stats::permutation_test(samples[0], samples[1], n_perm, stats_seed);
        std::printf("permutation test (two-sided, %zu permutations): p = %.6g\n", n_perm, p);
      }
    } else if (synth_cmd->parsed()) {
      SynthSpec s = spec_in.empty() ? SynthSpec{} : config::synth_from_json(config::read_json(spec_in));
      if (*o_id) s.id = spec.id;
      if (*o_h) s.height = spec.height;
      if (*o_m) s.mass = spec.mass;
      if (*o_n) s.noise_std = spec.noise_std;
      if (*o_hs) s.hip_swing_strength = spec.hip_swing_strength;
      if (*o_ks) s.knee_swing_strength = spec.knee_swing_strength;
      if (*o_ka) s.knee.swing_amplitude = spec.knee.swing_amplitude;
      if (*o_ha) s.hip.swing_amplitude = spec.hip.swing_amplitude;
      const SyntheticSubject subj = synth_subject(s, synth_seed);
      print_warnings(subj.tau_h);
      const fs::path dir = fs::path(out_dir) / s.id;
      make_dir(dir);
      io::write_file((dir / "spec.json").string(), config::synth_to_json(s).dump(2) + "\n");
      io::write_file((dir / "model.json").string(), config::model_to_json(subj.model).dump(2) + "\n");
      io::write_file((dir / "motion.csv").string(), io::format_motion(subj.motion));
      io::write_file((dir / "cycle_marks.csv").string(), io::format_cycle_marks(subj.motion));
      io::write_file((dir / "extracted.csv").string(), io::format_motion(subj.extracted));
      io::write_file((dir / "torques.csv").string(), io::format_torques(subj.tau_h));
      std::cout << "subject " << s.id << " written to " << dir.string() << "\n";
    }
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
