#pragma once

// Cohort report: per-subject rows, aggregates recomputable from the rows, and
// provenance. Emitted as a text table, a JSON document and plot-ready
// delimited series under <run-id>/ and <run-id>/<subject-id>/.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "exopt/config.hpp"
#include "exopt/errors.hpp"
#include "exopt/io.hpp"
#include "exopt/pipeline.hpp"
#include "exopt/statistics.hpp"

#ifndef EXOPT_VERSION
#define EXOPT_VERSION "0.1.0"
#endif

namespace exopt::report {

using json = nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;

struct TermsRow {
  double total = 0.0;
  double error_term = 0.0;
  double assist_term = 0.0;

  bool operator==(const TermsRow&) const = default;
};

struct SubjectRow {
  std::string id;
  std::uint64_t seed = 0;
  std::array<double, 4> stiffness{};  // K_hst, K_kst, K_hsw, K_ksw
  TermsRow optimized;
  TermsRow baseline;
  double improvement_pct = 0.0;
  bool baseline_outlier = false;
  std::vector<double> convergence;  // best value after each evaluation

  bool operator==(const SubjectRow&) const = default;
};

struct Aggregates {
  std::size_t n = 0;
  double mean_improvement_pct = 0.0;
  double median_improvement_pct = 0.0;
  double q1_improvement_pct = 0.0;
  double q3_improvement_pct = 0.0;
  double iqr_improvement_pct = 0.0;
  std::optional<double> cv_improvement;
  double mean_objective_opt = 0.0;
  double mean_objective_base = 0.0;
  std::optional<double> cv_objective_opt;
  std::optional<double> cv_objective_base;
  double permutation_p = 1.0;  // baseline vs optimized totals, two-sided
  std::size_t n_perm = 0;

  bool operator==(const Aggregates&) const = default;
};

struct Provenance {
  std::string run_id;
  std::string config_hash;
  std::uint64_t cohort_seed = 0;
  std::string version = EXOPT_VERSION;
  json config;  // resolved pipeline configuration

  bool operator==(const Provenance&) const = default;
};

struct CohortReport {
  std::vector<SubjectRow> rows;
  Aggregates aggregates;
  Provenance provenance;

  bool operator==(const CohortReport&) const = default;
};

namespace detail {

inline std::optional<double> safe_cv(const std::vector<double>& x) {
  try {
    return stats::cv(x);
  } catch (const stats::ZeroMeanError&) {
    return std::nullopt;
  }
}

}  // namespace detail

// Aggregates and outlier flags from the rows alone.
inline void recompute(CohortReport& r, std::size_t n_perm, std::uint64_t seed) {
  if (r.rows.empty()) throw ValidationError("report.rows", "empty cohort");
  std::vector<double> imp, opt, base;
  for (const auto& row : r.rows) {
    imp.push_back(row.improvement_pct);
    opt.push_back(row.optimized.total);
    base.push_back(row.baseline.total);
  }
  const auto flags = stats::iqr_outliers(base);
  for (std::size_t i = 0; i < r.rows.size(); ++i) r.rows[i].baseline_outlier = flags[i];

  Aggregates& a = r.aggregates;
  a.n = r.rows.size();
  const stats::Summary s = stats::summarize(imp);
  a.mean_improvement_pct = s.mean;
  a.median_improvement_pct = s.median;
  a.q1_improvement_pct = s.q1;
  a.q3_improvement_pct = s.q3;
  a.iqr_improvement_pct = s.iqr;
  a.cv_improvement = detail::safe_cv(imp);
  a.mean_objective_opt = stats::mean(opt);
  a.mean_objective_base = stats::mean(base);
  a.cv_objective_opt = detail::safe_cv(opt);
  a.cv_objective_base = detail::safe_cv(base);
  a.n_perm = n_perm;
  a.permutation_p = stats::permutation_test(base, opt, n_perm, seed);
}

inline CohortReport build_report(const CohortResult& cohort, const config::PipelineConfig& cfg,
                                 const std::string& run_id) {
  CohortReport r;
  for (const auto& m : cohort.members) {
    const PersonalizationResult& p = m.result;
    SubjectRow row;
    row.id = p.subject_id;
    row.seed = m.subject.seed;
    const auto k = p.optimized.to_vector();
    row.stiffness = {k[0], k[1], k[2], k[3]};
    row.optimized = {p.opt.total, p.opt.error_term, p.opt.assist_term};
    row.baseline = {p.base.total, p.base.error_term, p.base.assist_term};
    row.improvement_pct = p.improvement_pct();
    row.convergence = p.trace.incumbent_trace();
    r.rows.push_back(std::move(row));
  }
  r.provenance.run_id = run_id;
  r.provenance.config_hash = config::hex(config::config_hash(cfg));
  r.provenance.cohort_seed = cfg.cohort.seed;
  r.provenance.config = config::pipeline_to_json(cfg);
  recompute(r, cfg.cohort.n_perm, cfg.cohort.seed);
  return r;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
inline std::optional<double> opt_value(const json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}
inline json terms_json(const TermsRow& t) {
  return {{"total", t.total}, {"error_term", t.error_term}, {"assist_term", t.assist_term}};
}
inline TermsRow terms_from(const json& j) {
  return {j.at("total").get<double>(), j.at("error_term").get<double>(), j.at("assist_term").get<double>()};
}

}  // namespace detail

inline json to_json(const CohortReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"id", row.id},
                    {"seed", row.seed},
                    {"stiffness",
                     {{"K_hst", row.stiffness[0]},
                      {"K_kst", row.stiffness[1]},
                      {"K_hsw", row.stiffness[2]},
                      {"K_ksw", row.stiffness[3]}}},
                    {"optimized", detail::terms_json(row.optimized)},
                    {"baseline", detail::terms_json(row.baseline)},
                    {"improvement_pct", row.improvement_pct},
                    {"baseline_outlier", row.baseline_outlier},
                    {"convergence", row.convergence}});
  }
  const Aggregates& a = r.aggregates;
  return {{"schema_version", kReportSchemaVersion},
          {"provenance",
           {{"run_id", r.provenance.run_id},
            {"config_hash", r.provenance.config_hash},
            {"cohort_seed", r.provenance.cohort_seed},
            {"version", r.provenance.version},
            {"config", r.provenance.config}}},
          {"aggregates",
           {{"n", a.n},
            {"mean_improvement_pct", a.mean_improvement_pct},
            {"median_improvement_pct", a.median_improvement_pct},
            {"q1_improvement_pct", a.q1_improvement_pct},
            {"q3_improvement_pct", a.q3_improvement_pct},
            {"iqr_improvement_pct", a.iqr_improvement_pct},
            {"cv_improvement", detail::opt_json(a.cv_improvement)},
            {"mean_objective_opt", a.mean_objective_opt},
            {"mean_objective_base", a.mean_objective_base},
            {"cv_objective_opt", detail::opt_json(a.cv_objective_opt)},
            {"cv_objective_base", detail::opt_json(a.cv_objective_base)},
            {"permutation_p", a.permutation_p},
            {"n_perm", a.n_perm}}},
          {"subjects", rows}};
}

inline CohortReport from_json(const json& j) {
  if (j.value("schema_version", 0) != kReportSchemaVersion) {
    throw ValidationError("schema_version", "unsupported report version");
  }
  CohortReport r;
  const json& p = j.at("provenance");
  r.provenance.run_id = p.at("run_id").get<std::string>();
  r.provenance.config_hash = p.at("config_hash").get<std::string>();
  r.provenance.cohort_seed = p.at("cohort_seed").get<std::uint64_t>();
  r.provenance.version = p.at("version").get<std::string>();
  r.provenance.config = p.at("config");
  const json& a = j.at("aggregates");
  Aggregates& g = r.aggregates;
  g.n = a.at("n").get<std::size_t>();
  g.mean_improvement_pct = a.at("mean_improvement_pct").get<double>();
  g.median_improvement_pct = a.at("median_improvement_pct").get<double>();
  g.q1_improvement_pct = a.at("q1_improvement_pct").get<double>();
  g.q3_improvement_pct = a.at("q3_improvement_pct").get<double>();
  g.iqr_improvement_pct = a.at("iqr_improvement_pct").get<double>();
  g.cv_improvement = detail::opt_value(a.at("cv_improvement"));
  g.mean_objective_opt = a.at("mean_objective_opt").get<double>();
  g.mean_objective_base = a.at("mean_objective_base").get<double>();
  g.cv_objective_opt = detail::opt_value(a.at("cv_objective_opt"));
  g.cv_objective_base = detail::opt_value(a.at("cv_objective_base"));
  g.permutation_p = a.at("permutation_p").get<double>();
  g.n_perm = a.at("n_perm").get<std::size_t>();
  for (const auto& s : j.at("subjects")) {
    SubjectRow row;
    row.id = s.at("id").get<std::string>();
    row.seed = s.at("seed").get<std::uint64_t>();
    const json& k = s.at("stiffness");
    row.stiffness = {k.at("K_hst").get<double>(), k.at("K_kst").get<double>(), k.at("K_hsw").get<double>(),
                     k.at("K_ksw").get<double>()};
    row.optimized = detail::terms_from(s.at("optimized"));
    row.baseline = detail::terms_from(s.at("baseline"));
    row.improvement_pct = s.at("improvement_pct").get<double>();
    row.baseline_outlier = s.at("baseline_outlier").get<bool>();
    row.convergence = s.at("convergence").get<std::vector<double>>();
    r.rows.push_back(std::move(row));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Text

inline std::string format_text(const CohortReport& r) {
  if (r.rows.empty()) throw ValidationError("report.rows", "empty cohort");
  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof buf, "run %s  config %s  version %s  cohort seed %llu\n\n", r.provenance.run_id.c_str(),
                r.provenance.config_hash.c_str(), r.provenance.version.c_str(),
                static_cast<unsigned long long>(r.provenance.cohort_seed));
  s += buf;
  std::snprintf(buf, sizeof buf, "%-8s %7s %7s %7s %7s %11s %11s %8s %s\n", "subject", "K_hst", "K_kst", "K_hsw",
                "K_ksw", "J_base", "J_opt", "impr_%", "");
  s += buf;
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-8s %7.1f %7.1f %7.1f %7.1f %11.5g %11.5g %8.2f %s\n", row.id.c_str(),
                  row.stiffness[0], row.stiffness[1], row.stiffness[2], row.stiffness[3], row.baseline.total,
                  row.optimized.total, row.improvement_pct, row.baseline_outlier ? "outlier" : "");
    s += buf;
  }
  const Aggregates& a = r.aggregates;
  auto cv = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char out[32];
    std::snprintf(out, sizeof out, "%.4g", *v);
    return std::string(out);
  };
  std::snprintf(buf, sizeof buf,
                "\nsubjects %zu\nimprovement %%: mean %.2f  median %.2f  IQR %.2f [%.2f, %.2f]  CV %s\n", a.n,
                a.mean_improvement_pct, a.median_improvement_pct, a.iqr_improvement_pct, a.q1_improvement_pct,
                a.q3_improvement_pct, cv(a.cv_improvement).c_str());
  s += buf;
  std::snprintf(buf, sizeof buf, "objective: baseline mean %.5g (CV %s)  optimized mean %.5g (CV %s)\n",
                a.mean_objective_base, cv(a.cv_objective_base).c_str(), a.mean_objective_opt,
                cv(a.cv_objective_opt).c_str());
  s += buf;
  std::snprintf(buf, sizeof buf, "permutation test (baseline vs optimized, %zu permutations): p = %.6g\n", a.n_perm,
                a.permutation_p);
  s += buf;
  return s;
}

// ---------------------------------------------------------------------------
// Plot series

inline std::string stiffness_series(const CohortReport& r) {
  std::string s = "subject,K_hst,K_kst,K_hsw,K_ksw\n";
  for (const auto& row : r.rows) {
    s += row.id;
    for (double k : row.stiffness) s += "," + io::num(k);
    s += "\n";
  }
  return s;
}

inline std::string objective_series(const CohortReport& r) {
  std::string s = "subject,baseline_total,baseline_error,baseline_assist,optimized_total,optimized_error,"
                  "optimized_assist,improvement_pct,baseline_outlier\n";
  for (const auto& row : r.rows) {
    s += row.id + "," + io::num(row.baseline.total) + "," + io::num(row.baseline.error_term) + "," +
         io::num(row.baseline.assist_term) + "," + io::num(row.optimized.total) + "," +
         io::num(row.optimized.error_term) + "," + io::num(row.optimized.assist_term) + "," +
         io::num(row.improvement_pct) + "," + (row.baseline_outlier ? "1" : "0") + "\n";
  }
  return s;
}

inline std::string subject_stiffness_series(const SubjectRow& row) {
  static const char* labels[4][2] = {{"hip", "ST"}, {"knee", "ST"}, {"hip", "SW"}, {"knee", "SW"}};
  std::string s = "joint,phase,optimized,baseline\n";
  for (int i = 0; i < 4; ++i) {
    s += std::string(labels[i][0]) + "," + labels[i][1] + "," + io::num(row.stiffness[i]) + "," +
         io::num(kBaselineStiffness) + "\n";
  }
  return s;
}

inline std::string convergence_series(const SubjectRow& row) {
  std::string s = "eval_index,best_value\n";
  for (std::size_t i = 0; i < row.convergence.size(); ++i) s += std::to_string(i) + "," + io::num(row.convergence[i]) + "\n";
  return s;
}

enum class Format { TextTable, StructuredDocument, PlotSeries };

// Writes the requested formats under out_dir/<run-id>/ and returns the
// written paths in order.
inline std::vector<std::string> emit(const CohortReport& r, const std::vector<Format>& formats,
                                     const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (r.rows.empty()) throw ValidationError("report.rows", "empty cohort");
  const fs::path run = out_dir / r.provenance.run_id;
  std::error_code ec;
  fs::create_directories(run, ec);
  if (ec) throw IoError(run.string(), ec.message());
  std::vector<std::string> written;
  auto put = [&](const fs::path& p, const std::string& content) {
    io::write_file(p.string(), content);
    written.push_back(p.string());
  };
  for (Format f : formats) {
    switch (f) {
      case Format::TextTable: put(run / "report.txt", format_text(r)); break;
      case Format::StructuredDocument: put(run / "report.json", to_json(r).dump(2) + "\n"); break;
      case Format::PlotSeries:
        put(run / "stiffness.csv", stiffness_series(r));
        put(run / "objectives.csv", objective_series(r));
        for (const auto& row : r.rows) {
          const fs::path dir = run / row.id;
          fs::create_directories(dir, ec);
          if (ec) throw IoError(dir.string(), ec.message());
          put(dir / "stiffness.csv", subject_stiffness_series(row));
          put(dir / "convergence.csv", convergence_series(row));
        }
        break;
    }
  }
  return written;
}

// Hip-knee loops of the reference path and of the exo joints under two
// stiffness settings, for path overlay plots.
inline std::string path_overlay_series(const ReferencePath& path, const Trajectory& baseline,
                                       const Trajectory& optimized) {
  std::string s = "series,index,hip_rad,knee_rad\n";
  for (std::size_t i = 0; i < path.points.size(); ++i) {
    s += "reference," + std::to_string(i) + "," + io::num(path.points[i].hip) + "," + io::num(path.points[i].knee) + "\n";
  }
  auto add = [&](const char* name, const Trajectory& tr) {
    for (std::size_t i = 0; i < tr.size(); ++i) {
      s += std::string(name) + "," + std::to_string(i) + "," + io::num(tr.samples[i].q[2]) + "," +
           io::num(tr.samples[i].q[3]) + "\n";
    }
  };
  add("baseline", baseline);
  add("optimized", optimized);
  return s;
}

}  // namespace exopt::report
