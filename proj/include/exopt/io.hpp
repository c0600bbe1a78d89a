#pragma once

// Delimited-text readers and writers. Fields may be separated by commas,
// semicolons, tabs or spaces; blank lines and lines starting with '#' are
// skipped. A first row containing a non-numeric field is a header, and named
// columns are looked up by header name.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "exopt/dynamics.hpp"
#include "exopt/errors.hpp"
#include "exopt/path_controller.hpp"
#include "exopt/surrogate_optimizer.hpp"
#include "exopt/torque_estimator.hpp"

namespace exopt::io {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // source line per row

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  const bool has_hard = line.find_first_of(",;\t") != std::string::npos;
  for (char c : line) {
    const bool sep = c == ',' || c == ';' || c == '\t' || (!has_hard && c == ' ');
    if (sep) {
      if (has_hard || !cur.empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (has_hard || !trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace detail

inline Table parse_table(std::istream& in, const std::string& source) {
  Table t;
  std::string line;
  std::size_t n = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++n;
    const std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    auto fields = detail::split(s);
    if (first) {
      first = false;
      const bool header = std::any_of(fields.begin(), fields.end(), [](const std::string& f) {
        return !detail::parse_number(f).has_value() && f != "ST" && f != "SW";
      });
      if (header) {
        for (auto& f : fields) t.header.push_back(detail::lower(f));
        continue;
      }
    }
    if (!t.header.empty() && fields.size() != t.header.size()) {
      throw IoError(source, "line " + std::to_string(n) + ": expected " + std::to_string(t.header.size()) +
                                " fields, found " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(n);
  }
  return t;
}

inline Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open for reading");
  return parse_table(in, path);
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << content;
  out.flush();
  if (!out) throw IoError(path, "write failed");
}

// Shortest round-trip representation.
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double back = 0.0;
  for (int p = 6; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, v);
    back = std::strtod(buf, nullptr);
    if (back == v) break;
  }
  return buf;
}

namespace detail {

// Column index by any of `names`, else by position.
inline std::size_t col(const Table& t, std::initializer_list<const char*> names, std::size_t pos,
                       const std::string& source) {
  if (t.header.empty()) return pos;
  for (const char* n : names) {
    if (auto c = t.column(n)) return *c;
  }
  throw IoError(source, std::string("missing column '") + *names.begin() + "'");
}

inline double number_at(const Table& t, std::size_t r, std::size_t c, const std::string& source) {
  if (c >= t.rows[r].size()) {
    throw IoError(source, "line " + std::to_string(t.line_numbers[r]) + ": missing field " + std::to_string(c + 1));
  }
  const auto v = parse_number(t.rows[r][c]);
  if (!v) {
    throw IoError(source, "line " + std::to_string(t.line_numbers[r]) + ": not a number '" + t.rows[r][c] + "'");
  }
  return *v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reference path: hip_rad, knee_rad, phase

inline ReferencePath parse_path(std::istream& in, const std::string& source,
                                double dead_band = kDefaultDeadBand) {
  const Table t = parse_table(in, source);
  const std::size_t ch = detail::col(t, {"hip_rad", "hip"}, 0, source);
  const std::size_t ck = detail::col(t, {"knee_rad", "knee"}, 1, source);
  const std::size_t cp = detail::col(t, {"phase"}, 2, source);
  ReferencePath p;
  p.dead_band_radius = dead_band;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    PathPoint pt;
    pt.hip = detail::number_at(t, r, ch, source);
    pt.knee = detail::number_at(t, r, ck, source);
    if (cp >= t.rows[r].size()) throw IoError(source, "line " + std::to_string(t.line_numbers[r]) + ": missing phase");
    try {
      pt.phase = parse_phase(t.rows[r][cp]);
    } catch (const std::exception& e) {
      throw IoError(source, "line " + std::to_string(t.line_numbers[r]) + ": " + e.what());
    }
    p.points.push_back(pt);
  }
  return p;
}

inline ReferencePath read_path(const std::string& path, double dead_band = kDefaultDeadBand) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open for reading");
  return parse_path(in, path, dead_band);
}

inline std::string format_path(const ReferencePath& p) {
  std::string s = "hip_rad,knee_rad,phase\n";
  for (const auto& pt : p.points) s += num(pt.hip) + "," + num(pt.knee) + "," + phase_label(pt.phase) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Kinematics: t, hip_rad, knee_rad. Cycle marks: one cycle-start time per row.

inline RecordedMotion parse_motion(std::istream& in, const std::string& source) {
  const Table t = parse_table(in, source);
  const std::size_t ct = detail::col(t, {"t", "time"}, 0, source);
  const std::size_t ch = detail::col(t, {"hip_rad", "hip"}, 1, source);
  const std::size_t ck = detail::col(t, {"knee_rad", "knee"}, 2, source);
  RecordedMotion m;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    m.t.push_back(detail::number_at(t, r, ct, source));
    m.q.emplace_back(detail::number_at(t, r, ch, source), detail::number_at(t, r, ck, source));
  }
  return m;
}

inline RecordedMotion read_motion(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open for reading");
  return parse_motion(in, path);
}

// Cycle starts given as times are snapped to the nearest sample.
inline std::vector<std::size_t> read_cycle_marks(const std::string& path, const RecordedMotion& m) {
  const Table t = read_table(path);
  const std::size_t ct = detail::col(t, {"t_start", "t", "time"}, 0, path);
  std::vector<std::size_t> marks;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double tc = detail::number_at(t, r, ct, path);
    const auto it = std::lower_bound(m.t.begin(), m.t.end(), tc);
    std::size_t i = static_cast<std::size_t>(it - m.t.begin());
    if (i == m.t.size() || (i > 0 && tc - m.t[i - 1] < m.t[i] - tc)) --i;
    marks.push_back(i);
  }
  return marks;
}

inline std::string format_motion(const RecordedMotion& m) {
  std::string s = "t,hip_rad,knee_rad\n";
  for (std::size_t i = 0; i < m.size(); ++i) s += num(m.t[i]) + "," + num(m.q[i][0]) + "," + num(m.q[i][1]) + "\n";
  return s;
}

inline std::string format_cycle_marks(const RecordedMotion& m) {
  std::string s = "t_start\n";
  for (std::size_t i : m.cycle_marks) s += num(m.t[i]) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Torque profile: t, tau_hip, tau_knee

inline std::string format_torques(const HumanTorqueProfile& p) {
  std::string s = "t,tau_hip,tau_knee\n";
  for (std::size_t i = 0; i < p.size(); ++i) s += num(p.t[i]) + "," + num(p.tau[i][0]) + "," + num(p.tau[i][1]) + "\n";
  return s;
}

// The file holds torques only; the initial state comes from the matching
// kinematics (first sample, one-sided fourth-order slope).
inline HumanTorqueProfile parse_torques(std::istream& in, const std::string& source, double rate) {
  const Table t = parse_table(in, source);
  const std::size_t ct = detail::col(t, {"t", "time"}, 0, source);
  const std::size_t ch = detail::col(t, {"tau_hip"}, 1, source);
  const std::size_t ck = detail::col(t, {"tau_knee"}, 2, source);
  HumanTorqueProfile p;
  p.rate = rate;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    p.t.push_back(detail::number_at(t, r, ct, source));
    p.tau.emplace_back(detail::number_at(t, r, ch, source), detail::number_at(t, r, ck, source));
  }
  for (std::size_t i = 1; i < p.t.size(); ++i) {
    if (std::abs(p.t[i] - p.t[i - 1] - 1.0 / rate) > 1e-6) {
      throw IoError(source, "torque samples must be uniform at " + num(rate) + " Hz");
    }
  }
  if (p.t.size() < 2) throw IoError(source, "need at least 2 torque samples");
  return p;
}

inline HumanTorqueProfile read_torques(const std::string& path, double rate) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open for reading");
  return parse_torques(in, path, rate);
}

inline void attach_initial_state(HumanTorqueProfile& p, const RecordedMotion& m) {
  if (m.size() < 5) throw ValidationError("motion", "need at least 5 samples");
  const double h = m.t[1] - m.t[0];
  p.q0 = m.q[0];
  p.qdot0 = (-25.0 * m.q[0] + 48.0 * m.q[1] - 36.0 * m.q[2] + 16.0 * m.q[3] - 3.0 * m.q[4]) / (12.0 * h);
  p.cycle_starts = m.cycle_marks;
}

// ---------------------------------------------------------------------------
// Trajectory: t, q1..q4, qd1..qd4, tau_h1, tau_h2, tau_r1, tau_r2

inline std::string format_trajectory(const Trajectory& tr) {
  std::string s = "t,q1,q2,q3,q4,qd1,qd2,qd3,qd4,tau_h1,tau_h2,tau_r1,tau_r2\n";
  for (const auto& x : tr.samples) {
    s += num(x.t);
    for (int i = 0; i < 4; ++i) s += "," + num(x.q[i]);
    for (int i = 0; i < 4; ++i) s += "," + num(x.qdot[i]);
    s += "," + num(x.tau_h[0]) + "," + num(x.tau_h[1]) + "," + num(x.tau_r[0]) + "," + num(x.tau_r[1]) + "\n";
  }
  return s;
}

inline Trajectory parse_trajectory(std::istream& in, const std::string& source) {
  const Table t = parse_table(in, source);
  if (t.header.size() != 13) throw IoError(source, "trajectory needs 13 named columns");
  Trajectory tr;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    TrajectorySample x;
    x.t = detail::number_at(t, r, 0, source);
    for (int i = 0; i < 4; ++i) x.q[i] = detail::number_at(t, r, 1 + i, source);
    for (int i = 0; i < 4; ++i) x.qdot[i] = detail::number_at(t, r, 5 + i, source);
    x.tau_h = {detail::number_at(t, r, 9, source), detail::number_at(t, r, 10, source)};
    x.tau_r = {detail::number_at(t, r, 11, source), detail::number_at(t, r, 12, source)};
    tr.samples.push_back(x);
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Optimizer trace: one evaluation per row.

inline std::string format_trace(const OptResult& r) {
  std::string s = "eval_index";
  const Eigen::Index d = r.history.empty() ? 0 : r.history.front().point.size();
  static const char* names[] = {"K_hst", "K_kst", "K_hsw", "K_ksw"};
  for (Eigen::Index i = 0; i < d; ++i) s += d == 4 ? std::string(",") + names[i] : ",x" + std::to_string(i + 1);
  s += ",value,best_value,wall_time,failed\n";
  const auto best = r.incumbent_trace();
  for (std::size_t k = 0; k < r.history.size(); ++k) {
    const auto& e = r.history[k];
    s += std::to_string(e.eval_index);
    for (Eigen::Index i = 0; i < d; ++i) s += "," + num(e.point[i]);
    s += "," + num(e.value) + "," + num(best[k]) + "," + num(e.wall_time) + "," + (e.failed ? "1" : "0") + "\n";
  }
  return s;
}

}  // namespace exopt::io
