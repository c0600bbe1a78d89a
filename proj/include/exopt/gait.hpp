#pragma once

// Periodic gait curves and reference-path construction.

#include <cmath>
#include <numbers>
#include <vector>

#include "exopt/path_controller.hpp"

namespace exopt {

// Truncated Fourier series through uniformly spaced samples of one period.
// With the default harmonic count the series interpolates the samples.
class PeriodicCurve {
 public:
  PeriodicCurve() = default;

  explicit PeriodicCurve(const std::vector<double>& samples, std::size_t harmonics = 0) {
    const std::size_t n = samples.size();
    if (n < 3) throw std::invalid_argument("PeriodicCurve needs at least 3 samples");
    const std::size_t max_h = (n - 1) / 2;
    const std::size_t h = harmonics == 0 ? max_h : std::min(harmonics, max_h);
    cos_.assign(h + 1, 0.0);
    sin_.assign(h + 1, 0.0);
    for (std::size_t k = 0; k <= h; ++k) {
      double c = 0.0, s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(n);
        c += samples[i] * std::cos(a);
        s += samples[i] * std::sin(a);
      }
      const double scale = (k == 0 ? 1.0 : 2.0) / static_cast<double>(n);
      cos_[k] = c * scale;
      sin_[k] = s * scale;
    }
  }

  // u is the cycle fraction; any real value is wrapped.
  double operator()(double u) const { return eval(u, 0); }
  double derivative(double u, int order = 1) const { return eval(u, order); }

  double mean() const { return cos_.empty() ? 0.0 : cos_[0]; }
  std::size_t harmonics() const { return cos_.empty() ? 0 : cos_.size() - 1; }

 private:
  double eval(double u, int order) const {
    double y = order == 0 ? mean() : 0.0;
    for (std::size_t k = 1; k < cos_.size(); ++k) {
      const double w = 2.0 * std::numbers::pi * static_cast<double>(k);
      const double a = w * u;
      const double c = std::cos(a), s = std::sin(a);
      switch (order) {
        case 0: y += cos_[k] * c + sin_[k] * s; break;
        case 1: y += w * (-cos_[k] * s + sin_[k] * c); break;
        default: y += -w * w * (cos_[k] * c + sin_[k] * s); break;
      }
    }
    return y;
  }

  std::vector<double> cos_;
  std::vector<double> sin_;
};

// Default hip-knee loop. u = 0 is maximal hip flexion (initial contact);
// stance covers u in [0, 0.6), swing [0.6, 1). The knee stays nearly
// extended through stance and flexes to about 59 deg in mid-swing.
namespace default_path_shape {
inline constexpr double kHipMean = 0.15;
inline constexpr double kHipAmplitude = 0.27;
inline constexpr double kKneeBase = 0.08;
inline constexpr double kKneeAmplitude = 0.95;
inline constexpr double kKneePeak = 0.75;
inline constexpr double kSwingStart = 0.6;
}  // namespace default_path_shape

inline Vec2 default_path_pose(double u) {
  namespace s = default_path_shape;
  const double hip = s::kHipMean + s::kHipAmplitude * std::cos(2.0 * std::numbers::pi * u);
  const double g = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * (u - s::kKneePeak)));
  return {hip, s::kKneeBase + s::kKneeAmplitude * g * g * g};
}

inline ReferencePath default_reference_path(std::size_t n = 200, double dead_band = kDefaultDeadBand) {
  ReferencePath path;
  path.dead_band_radius = dead_band;
  path.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n);
    const Vec2 q = default_path_pose(u);
    path.points.push_back({q[0], q[1], u < default_path_shape::kSwingStart ? Phase::Stance : Phase::Swing});
  }
  return path;
}

// Samples are read as uniformly spaced in cycle time. Resampling uses
// trigonometric interpolation; each new sample takes the phase label of the
// original sample whose half-open interval contains it.
inline ReferencePath resample_path(const ReferencePath& path, std::size_t n) {
  validate(path);
  if (n < 3) throw ValidationError("n", "must be >= 3");
  std::vector<double> hip, knee;
  for (const auto& p : path.points) {
    hip.push_back(p.hip);
    knee.push_back(p.knee);
  }
  const PeriodicCurve fh(hip), fk(knee);
  const std::size_t m = path.points.size();
  ReferencePath out;
  out.dead_band_radius = path.dead_band_radius;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n);
    auto src = static_cast<std::size_t>(std::floor(u * static_cast<double>(m) + 1e-9));
    src = std::min(src, m - 1);
    out.points.push_back({fh(u), fk(u), path.points[src].phase});
  }
  return out;
}

// Fraction of the cycle at which each phase begins, read from the labels.
struct PhaseBounds {
  double swing_start = 0.6;
  double swing_end = 1.0;  // = stance start, modulo 1
};

inline PhaseBounds phase_bounds(const ReferencePath& path) {
  const std::size_t n = path.points.size();
  PhaseBounds b;
  for (std::size_t i = 0; i < n; ++i) {
    const Phase prev = path.points[(i + n - 1) % n].phase;
    const Phase cur = path.points[i].phase;
    const double u = static_cast<double>(i) / static_cast<double>(n);
    if (prev == Phase::Stance && cur == Phase::Swing) b.swing_start = u;
    if (prev == Phase::Swing && cur == Phase::Stance) b.swing_end = u == 0.0 ? 1.0 : u;
  }
  return b;
}

// C2 step from 0 to 1 over x in [0, 1].
inline double smoothstep5(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return x * x * x * (x * (6.0 * x - 15.0) + 10.0);
}

// Smooth periodic swing indicator: ~1 inside the swing arc, ~0 in stance,
// with C2 transitions of the given width centred on the phase boundaries.
inline double swing_weight(double u, const PhaseBounds& b, double width = 0.1) {
  u -= std::floor(u);
  double start = b.swing_start;
  double end = b.swing_end;
  if (end <= start) end += 1.0;
  if (u < start - 0.5 * width) u += 1.0;
  const double rise = smoothstep5((u - start) / width + 0.5);
  const double fall = smoothstep5((end - u) / width + 0.5);
  return rise * fall;
}

// Cycle starts as upward crossings of the hip angle through its mean,
// separated by at least `min_separation` samples.
inline std::vector<std::size_t> detect_cycle_marks(const std::vector<Vec2>& q,
                                                   std::size_t min_separation) {
  std::vector<std::size_t> marks;
  if (q.size() < 2) return marks;
  double mean = 0.0;
  for (const auto& v : q) mean += v[0];
  mean /= static_cast<double>(q.size());
  for (std::size_t i = 1; i < q.size(); ++i) {
    if (q[i - 1][0] < mean && q[i][0] >= mean) {
      if (marks.empty() || i - marks.back() >= min_separation) marks.push_back(i);
    }
  }
  return marks;
}

}  // namespace exopt
