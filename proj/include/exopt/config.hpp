#pragma once

// JSON documents for the model, the pipeline configuration and synthetic
// subject specs. Every document carries `schema_version`; unknown keys are
// rejected so misspelt options do not pass silently.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "exopt/errors.hpp"
#include "exopt/model.hpp"
#include "exopt/pipeline.hpp"

namespace exopt::config {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(where.empty() ? "document" : where, "must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw ValidationError(where.empty() ? k : where + "." + k, "unknown key");
  }
}

inline double number(const json& j, const std::string& field) {
  if (!j.is_number()) throw ValidationError(field, "must be a number");
  return j.get<double>();
}

inline std::size_t count(const json& j, const std::string& field) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ValidationError(field, "must be a non-negative integer");
  return j.get<std::size_t>();
}

template <typename F>
void if_has(const json& j, const char* key, F&& f) {
  if (j.contains(key)) f(j.at(key));
}

inline void check_version(const json& j) {
  if (!j.contains("schema_version")) throw ValidationError("schema_version", "missing");
  if (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != kSchemaVersion) {
    throw ValidationError("schema_version", "unsupported (expected " + std::to_string(kSchemaVersion) + ")");
  }
}

inline json link_json(const LinkParams& l) {
  return {{"length", l.length}, {"mass", l.mass}, {"com_offset", l.com_offset}, {"inertia", l.inertia}};
}

inline void read_link(const json& j, LinkParams& l, const std::string& where) {
  check_keys(j, where, {"length", "mass", "com_offset", "inertia"});
  if_has(j, "length", [&](const json& v) { l.length = number(v, where + ".length"); });
  if_has(j, "mass", [&](const json& v) { l.mass = number(v, where + ".mass"); });
  if_has(j, "com_offset", [&](const json& v) { l.com_offset = number(v, where + ".com_offset"); });
  if_has(j, "inertia", [&](const json& v) { l.inertia = number(v, where + ".inertia"); });
}

inline void read_range(const json& j, AngleRange& r, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ValidationError(where, "must be [min, max]");
  r.min = number(j[0], where + "[0]");
  r.max = number(j[1], where + "[1]");
}

inline void read_leg(const json& j, LegGeometry& leg, const std::string& where) {
  if_has(j, "thigh", [&](const json& v) { read_link(v, leg.thigh, where + ".thigh"); });
  if_has(j, "shank", [&](const json& v) { read_link(v, leg.shank, where + ".shank"); });
  if_has(j, "hip_range", [&](const json& v) { read_range(v, leg.hip_range, where + ".hip_range"); });
  if_has(j, "knee_range", [&](const json& v) { read_range(v, leg.knee_range, where + ".knee_range"); });
}

inline json bushing_json(const SiteBushing& b) {
  return {{"translational_stiffness", b.translational_stiffness},
          {"translational_damping", b.translational_damping},
          {"rotational_stiffness", b.rotational_stiffness},
          {"rotational_damping", b.rotational_damping}};
}

inline void read_pair(const json& j, std::array<double, 2>& a, const std::string& where) {
  if (j.is_number()) {
    a = {j.get<double>(), j.get<double>()};
    return;
  }
  if (!j.is_array() || j.size() != 2) throw ValidationError(where, "must be a number or [x, y]");
  a = {number(j[0], where + "[0]"), number(j[1], where + "[1]")};
}

inline void read_bushing(const json& j, SiteBushing& b, const std::string& where) {
  check_keys(j, where, {"translational_stiffness", "translational_damping", "rotational_stiffness", "rotational_damping"});
  if_has(j, "translational_stiffness", [&](const json& v) { read_pair(v, b.translational_stiffness, where + ".translational_stiffness"); });
  if_has(j, "translational_damping", [&](const json& v) { read_pair(v, b.translational_damping, where + ".translational_damping"); });
  if_has(j, "rotational_stiffness", [&](const json& v) { b.rotational_stiffness = number(v, where + ".rotational_stiffness"); });
  if_has(j, "rotational_damping", [&](const json& v) { b.rotational_damping = number(v, where + ".rotational_damping"); });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model document
//
// {
//   "schema_version": 1,
//   "subject": {"height": 1.75, "mass": 75, "thigh": {...}, "shank": {...},
//               "hip_range": [lo, hi], "knee_range": [lo, hi],
//               "hip_torque_limit": .., "knee_torque_limit": ..},
//   "exo": {"thigh": {...}, "shank": {...}, "hip_range": .., "knee_range": ..,
//           "actuator_torque_limit": 40, "controller_rate": 100},
//   "bushings": {"all": {...}, "upper_thigh": {...}, ...},
//   "strap_positions": {"upper_thigh": .., ...},
//   "gravity": 9.81,
//   "joint_stop": {"stiffness": 300, "damping": 1}
// }
//
// Subject links default to the anthropometric table for height and mass; the
// exo defaults to uniform rods fitted to the subject. Anything given
// explicitly overrides the default.

inline CoupledModel model_from_json(const json& j) {
  using namespace detail;
  check_keys(j, "", {"schema_version", "subject", "exo", "bushings", "strap_positions", "gravity", "joint_stop"});
  check_version(j);
  const json subj = j.value("subject", json::object());
  check_keys(subj, "subject", {"height", "mass", "thigh", "shank", "hip_range", "knee_range", "hip_torque_limit",
                               "knee_torque_limit"});
  const double height = subj.contains("height") ? number(subj["height"], "subject.height") : 1.75;
  const double mass = subj.contains("mass") ? number(subj["mass"], "subject.mass") : 75.0;
  SubjectModel s = anthropometric_subject(height, mass);
  read_leg(subj, s.leg, "subject");
  if_has(subj, "hip_torque_limit", [&](const json& v) { s.hip_torque_limit = number(v, "subject.hip_torque_limit"); });
  if_has(subj, "knee_torque_limit", [&](const json& v) { s.knee_torque_limit = number(v, "subject.knee_torque_limit"); });

  ExoModel e = fitted_exo(s);
  if (j.contains("exo")) {
    const json& ej = j["exo"];
    check_keys(ej, "exo", {"thigh", "shank", "hip_range", "knee_range", "actuator_torque_limit", "controller_rate"});
    read_leg(ej, e.leg, "exo");
    if_has(ej, "actuator_torque_limit", [&](const json& v) { e.actuator_torque_limit = number(v, "exo.actuator_torque_limit"); });
    if_has(ej, "controller_rate", [&](const json& v) { e.controller_rate = number(v, "exo.controller_rate"); });
  }

  BushingParams b = default_bushings();
  if (j.contains("bushings")) {
    const json& bj = j["bushings"];
    check_keys(bj, "bushings", {"all", "upper_thigh", "lower_thigh", "upper_shank", "lower_shank"});
    if (bj.contains("all")) {
      for (StrapSite site : kStrapSites) read_bushing(bj["all"], b.at(site), "bushings.all");
    }
    for (StrapSite site : kStrapSites) {
      const std::string name(site_name(site));
      if (bj.contains(name)) read_bushing(bj[name], b.at(site), "bushings." + name);
    }
  }

  validate(s);
  validate(e);
  validate(b);
  CoupledModel m;
  m.subject = s;
  m.exo = e;
  m.bushings = b;
  m.strap_positions = default_strap_positions(s, e);
  if (j.contains("strap_positions")) {
    const json& pj = j["strap_positions"];
    check_keys(pj, "strap_positions", {"upper_thigh", "lower_thigh", "upper_shank", "lower_shank"});
    for (StrapSite site : kStrapSites) {
      const std::string name(site_name(site));
      if (pj.contains(name)) {
        m.strap_positions[static_cast<int>(site)] = number(pj[name], "strap_positions." + name);
      }
    }
  }
  if_has(j, "gravity", [&](const json& v) { m.gravity = number(v, "gravity"); });
  if (j.contains("joint_stop")) {
    const json& sj = j["joint_stop"];
    check_keys(sj, "joint_stop", {"stiffness", "damping"});
    if_has(sj, "stiffness", [&](const json& v) { m.joint_stop.stiffness = number(v, "joint_stop.stiffness"); });
    if_has(sj, "damping", [&](const json& v) { m.joint_stop.damping = number(v, "joint_stop.damping"); });
  }
  validate(m);
  return m;
}

// Canonical, fully resolved document.
inline json model_to_json(const CoupledModel& m) {
  using namespace detail;
  auto leg = [](const LegGeometry& l) {
    return json{{"thigh", link_json(l.thigh)},
                {"shank", link_json(l.shank)},
                {"hip_range", {l.hip_range.min, l.hip_range.max}},
                {"knee_range", {l.knee_range.min, l.knee_range.max}}};
  };
  json subj = leg(m.subject.leg);
  subj["hip_torque_limit"] = m.subject.hip_torque_limit;
  subj["knee_torque_limit"] = m.subject.knee_torque_limit;
  json exo = leg(m.exo.leg);
  exo["actuator_torque_limit"] = m.exo.actuator_torque_limit;
  exo["controller_rate"] = m.exo.controller_rate;
  json bush = json::object();
  json straps = json::object();
  for (StrapSite site : kStrapSites) {
    bush[std::string(site_name(site))] = bushing_json(m.bushings.at(site));
    straps[std::string(site_name(site))] = m.strap_position(site);
  }
  return {{"schema_version", kSchemaVersion},
          {"subject", subj},
          {"exo", exo},
          {"bushings", bush},
          {"strap_positions", straps},
          {"gravity", m.gravity},
          {"joint_stop", {{"stiffness", m.joint_stop.stiffness}, {"damping", m.joint_stop.damping}}}};
}

// ---------------------------------------------------------------------------
// Pipeline configuration
//
// {
//   "schema_version": 1,
//   "objective": {"w1": 0.5, "w2": 0.5, "j1": 0, "j2": 0, "max_expected_error": 0.35},
//   "dead_band_rad": 0.0349,
//   "dt": 0.00025, "horizon_cycles": 0,
//   "bounds": [0, 600], "max_evals": 150, "batch_size": 1, "threads": 1,
//   "baseline": 340, "seed": 1,
//   "cohort": {"n_subjects": 18, "seed": 2024, "subject_threads": 1, "n_perm": 100000}
// }

struct PipelineConfig {
  CohortConfig cohort;
  double dead_band = kDefaultDeadBand;

  PersonalizationConfig& personalization() { return cohort.personalization; }
  const PersonalizationConfig& personalization() const { return cohort.personalization; }
};

inline PipelineConfig pipeline_from_json(const json& j) {
  using namespace detail;
  check_keys(j, "", {"schema_version", "objective", "dead_band_rad", "dt", "horizon_cycles", "bounds", "max_evals",
                     "batch_size", "threads", "baseline", "seed", "cohort"});
  check_version(j);
  PipelineConfig c;
  PersonalizationConfig& p = c.personalization();
  if (j.contains("objective")) {
    const json& o = j["objective"];
    check_keys(o, "objective", {"w1", "w2", "j1", "j2", "max_expected_error"});
    if_has(o, "w1", [&](const json& v) { p.objective.w1 = number(v, "objective.w1"); });
    if_has(o, "w2", [&](const json& v) { p.objective.w2 = number(v, "objective.w2"); });
    if_has(o, "j1", [&](const json& v) { p.objective.j1 = number(v, "objective.j1"); });
    if_has(o, "j2", [&](const json& v) { p.objective.j2 = number(v, "objective.j2"); });
    if_has(o, "max_expected_error", [&](const json& v) { p.objective.max_expected_error = number(v, "objective.max_expected_error"); });
  }
  if_has(j, "dead_band_rad", [&](const json& v) { c.dead_band = number(v, "dead_band_rad"); });
  if_has(j, "dt", [&](const json& v) { p.dt = number(v, "dt"); });
  if_has(j, "horizon_cycles", [&](const json& v) { p.horizon_cycles = count(v, "horizon_cycles"); });
  if_has(j, "bounds", [&](const json& v) {
    if (!v.is_array() || v.size() != 2) throw ValidationError("bounds", "must be [lower, upper]");
    p.lower = number(v[0], "bounds[0]");
    p.upper = number(v[1], "bounds[1]");
  });
  if_has(j, "max_evals", [&](const json& v) { p.max_evals = count(v, "max_evals"); });
  if_has(j, "batch_size", [&](const json& v) { p.batch_size = count(v, "batch_size"); });
  if_has(j, "threads", [&](const json& v) { p.threads = count(v, "threads"); });
  if_has(j, "baseline", [&](const json& v) { p.baseline = number(v, "baseline"); });
  if_has(j, "seed", [&](const json& v) { p.seed = v.get<std::uint64_t>(); });
  if (j.contains("cohort")) {
    const json& cj = j["cohort"];
    check_keys(cj, "cohort", {"n_subjects", "seed", "subject_threads", "n_perm"});
    if_has(cj, "n_subjects", [&](const json& v) { c.cohort.n_subjects = count(v, "cohort.n_subjects"); });
    if_has(cj, "seed", [&](const json& v) { c.cohort.seed = v.get<std::uint64_t>(); });
    if_has(cj, "subject_threads", [&](const json& v) { c.cohort.subject_threads = count(v, "cohort.subject_threads"); });
    if_has(cj, "n_perm", [&](const json& v) { c.cohort.n_perm = count(v, "cohort.n_perm"); });
  }
  validate(p);
  if (!(c.dead_band >= 0.0)) throw ValidationError("dead_band_rad", "must be >= 0");
  if (c.cohort.n_subjects < 2) throw ValidationError("cohort.n_subjects", "must be >= 2");
  if (c.cohort.n_perm < 1000) throw ValidationError("cohort.n_perm", "must be >= 1000");
  return c;
}

inline json pipeline_to_json(const PipelineConfig& c) {
  const PersonalizationConfig& p = c.personalization();
  return {{"schema_version", kSchemaVersion},
          {"objective",
           {{"w1", p.objective.w1},
            {"w2", p.objective.w2},
            {"j1", p.objective.j1},
            {"j2", p.objective.j2},
            {"max_expected_error", p.objective.max_expected_error}}},
          {"dead_band_rad", c.dead_band},
          {"dt", p.dt},
          {"horizon_cycles", p.horizon_cycles},
          {"bounds", {p.lower, p.upper}},
          {"max_evals", p.max_evals},
          {"batch_size", p.batch_size},
          {"threads", p.threads},
          {"baseline", p.baseline},
          {"seed", p.seed},
          {"cohort",
           {{"n_subjects", c.cohort.n_subjects},
            {"seed", c.cohort.seed},
            {"subject_threads", c.cohort.subject_threads},
            {"n_perm", c.cohort.n_perm}}}};
}

// FNV-1a over the canonical dump. Thread counts do not change results and are
// left out.
inline std::uint64_t config_hash(const PipelineConfig& c) {
  json j = pipeline_to_json(c);
  j.erase("threads");
  j["cohort"].erase("subject_threads");
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Synthetic subject spec

inline json synth_to_json(const SynthSpec& s) {
  auto warp = [](const JointWarp& w) {
    return json{{"stance_amplitude", w.stance_amplitude},
                {"swing_amplitude", w.swing_amplitude},
                {"stance_offset", w.stance_offset},
                {"swing_offset", w.swing_offset}};
  };
  return {{"schema_version", kSchemaVersion},
          {"id", s.id},
          {"height", s.height},
          {"mass", s.mass},
          {"period", s.period},
          {"hip", warp(s.hip)},
          {"knee", warp(s.knee)},
          {"noise_std", s.noise_std},
          {"hip_swing_strength", s.hip_swing_strength},
          {"knee_swing_strength", s.knee_swing_strength},
          {"cycles", s.cycles},
          {"phase_blend", s.phase_blend}};
}

inline SynthSpec synth_from_json(const json& j) {
  using namespace detail;
  check_keys(j, "", {"schema_version", "id", "height", "mass", "period", "hip", "knee", "noise_std",
                     "hip_swing_strength", "knee_swing_strength", "cycles", "phase_blend"});
  check_version(j);
  SynthSpec s;
  if_has(j, "id", [&](const json& v) { s.id = v.get<std::string>(); });
  if_has(j, "height", [&](const json& v) { s.height = number(v, "height"); });
  if_has(j, "mass", [&](const json& v) { s.mass = number(v, "mass"); });
  if_has(j, "period", [&](const json& v) { s.period = number(v, "period"); });
  auto warp = [&](const json& w, JointWarp& out, const std::string& where) {
    check_keys(w, where, {"stance_amplitude", "swing_amplitude", "stance_offset", "swing_offset"});
    if_has(w, "stance_amplitude", [&](const json& v) { out.stance_amplitude = number(v, where + ".stance_amplitude"); });
    if_has(w, "swing_amplitude", [&](const json& v) { out.swing_amplitude = number(v, where + ".swing_amplitude"); });
    if_has(w, "stance_offset", [&](const json& v) { out.stance_offset = number(v, where + ".stance_offset"); });
    if_has(w, "swing_offset", [&](const json& v) { out.swing_offset = number(v, where + ".swing_offset"); });
  };
  if_has(j, "hip", [&](const json& v) { warp(v, s.hip, "hip"); });
  if_has(j, "knee", [&](const json& v) { warp(v, s.knee, "knee"); });
  if_has(j, "noise_std", [&](const json& v) { s.noise_std = number(v, "noise_std"); });
  if_has(j, "hip_swing_strength", [&](const json& v) { s.hip_swing_strength = number(v, "hip_swing_strength"); });
  if_has(j, "knee_swing_strength", [&](const json& v) { s.knee_swing_strength = number(v, "knee_swing_strength"); });
  if_has(j, "cycles", [&](const json& v) { s.cycles = count(v, "cycles"); });
  if_has(j, "phase_blend", [&](const json& v) { s.phase_blend = number(v, "phase_blend"); });
  validate(s);
  return s;
}

// ---------------------------------------------------------------------------

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open for reading");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw IoError(path, e.what());
  }
}

}  // namespace exopt::config
