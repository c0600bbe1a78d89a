#pragma once

// Bounded derivative-free global minimisation with a cubic radial basis
// function surrogate.
//
// After a seeded Latin-hypercube design, every iteration fits
//   s(x) = sum_i lambda_i |x - x_i|^3 + c_0 + c^T x
// to all evaluations (coordinates scaled to the unit box), draws a cloud of
// candidates around the incumbent plus uniform samples, and picks the
// candidate minimising the merit
//   w * scaled surrogate value + (1 - w) * scaled (negative) distance to the
//       nearest evaluated point.
// w and the perturbation scale cycle through fixed sequences, from
// exploratory (w = 0.3, wide cloud) to greedy (w = 0.95, tight cloud).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "exopt/errors.hpp"

namespace exopt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Evaluation callback. A non-finite return value, or a thrown
// DivergenceError, marks the evaluation as failed.
using Objective = std::function<double(const VectorXd&)>;

struct OptProblem {
  std::size_t dim = 0;
  VectorXd lower;
  VectorXd upper;
  std::size_t max_evals = 150;
  Objective objective;
  std::uint64_t seed = 0;
  std::vector<VectorXd> initial_points;
  // Points proposed per surrogate refit; evaluations inside one batch may run
  // concurrently on up to `threads` workers.
  std::size_t batch_size = 1;
  std::size_t threads = 1;

  static OptProblem box(std::size_t dim, double lo, double hi) {
    OptProblem p;
    p.dim = dim;
    p.lower = VectorXd::Constant(static_cast<Eigen::Index>(dim), lo);
    p.upper = VectorXd::Constant(static_cast<Eigen::Index>(dim), hi);
    return p;
  }
};

inline void validate(const OptProblem& p) {
  const auto d = static_cast<Eigen::Index>(p.dim);
  if (p.dim == 0) throw ValidationError("problem.dim", "must be >= 1");
  if (p.lower.size() != d || p.upper.size() != d) {
    throw ValidationError("problem.bounds", "size must equal dim");
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(std::isfinite(p.lower[i]) && std::isfinite(p.upper[i]) && p.lower[i] < p.upper[i])) {
      throw ValidationError("problem.bounds", "need finite lower < upper in every coordinate");
    }
  }
  if (p.max_evals < p.dim + 1) throw ValidationError("problem.max_evals", "must be >= dim + 1");
  if (!p.objective) throw ValidationError("problem.objective", "missing");
  if (p.batch_size == 0) throw ValidationError("problem.batch_size", "must be >= 1");
  for (const auto& x : p.initial_points) {
    if (x.size() != d || (x.array() < p.lower.array()).any() || (x.array() > p.upper.array()).any()) {
      throw ValidationError("problem.initial_points", "every point must lie within bounds");
    }
  }
}

struct EvalRecord {
  VectorXd point;
  double value = 0.0;
  std::size_t eval_index = 0;
  double wall_time = 0.0;  // s since the start of minimize
  bool failed = false;
};

struct OptResult {
  VectorXd best_point;
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<EvalRecord> history;
  std::string termination_reason;

  // Best value seen after each evaluation.
  std::vector<double> incumbent_trace() const {
    std::vector<double> out;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : history) {
      best = std::min(best, r.value);
      out.push_back(best);
    }
    return out;
  }
};

namespace detail {

inline VectorXd to_unit(const VectorXd& x, const VectorXd& lo, const VectorXd& hi) {
  return ((x - lo).array() / (hi - lo).array()).matrix();
}

inline VectorXd from_unit(const VectorXd& u, const VectorXd& lo, const VectorXd& hi) {
  return (lo.array() + u.array() * (hi - lo).array()).matrix();
}

inline bool same_point(const VectorXd& a, const VectorXd& b) { return (a - b).cwiseAbs().maxCoeff() == 0.0; }

}  // namespace detail

// Seeded Latin hypercube of max(2 dim, 8) points, prefixed by the caller's
// initial points (duplicates dropped).
inline std::vector<VectorXd> initial_design(const OptProblem& p) {
  validate(p);
  std::vector<VectorXd> out;
  for (const auto& x : p.initial_points) {
    if (std::none_of(out.begin(), out.end(), [&](const VectorXd& y) { return detail::same_point(x, y); })) {
      out.push_back(x);
    }
  }
  const std::size_t n = std::max<std::size_t>(2 * p.dim, 8);
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  MatrixXd unit(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p.dim));
  std::vector<std::size_t> strata(n);
  for (std::size_t j = 0; j < p.dim; ++j) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      unit(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (static_cast<double>(strata[i]) + jitter(rng)) / static_cast<double>(n);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    VectorXd x = detail::from_unit(unit.row(static_cast<Eigen::Index>(i)).transpose(), p.lower, p.upper);
    x = x.cwiseMax(p.lower).cwiseMin(p.upper);
    if (std::none_of(out.begin(), out.end(), [&](const VectorXd& y) { return detail::same_point(x, y); })) {
      out.push_back(std::move(x));
    }
  }
  return out;
}

// Cubic RBF interpolant with a linear polynomial tail.
class SurrogateModel {
 public:
  static constexpr double kRidge = 1e-10;
  static constexpr double kResidualTolerance = 1e-8;

  SurrogateModel() = default;

  SurrogateModel(const std::vector<VectorXd>& points, const std::vector<double>& values, const VectorXd& lower,
                 const VectorXd& upper)
      : lower_(lower), upper_(upper) {
    // Drop repeated points; the first occurrence wins.
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < points.size(); ++i) {
      bool dup = false;
      for (std::size_t k : keep) dup = dup || detail::same_point(points[i], points[k]);
      if (!dup) keep.push_back(i);
    }
    const auto n = static_cast<Eigen::Index>(keep.size());
    const auto d = lower.size();
    if (n < d + 1) throw ValidationError("surrogate", "need at least dim + 1 distinct points");

    centers_.resize(n, d);
    VectorXd f(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      centers_.row(i) = detail::to_unit(points[keep[static_cast<std::size_t>(i)]], lower, upper).transpose();
      f[i] = values[keep[static_cast<std::size_t>(i)]];
    }

    const Eigen::Index m = n + d + 1;
    MatrixXd a = MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double r = (centers_.row(i) - centers_.row(j)).norm();
        a(i, j) = a(j, i) = r * r * r;
      }
      a(i, n) = a(n, i) = 1.0;
      for (Eigen::Index k = 0; k < d; ++k) a(i, n + 1 + k) = a(n + 1 + k, i) = centers_(i, k);
    }
    VectorXd rhs = VectorXd::Zero(m);
    rhs.head(n) = f;

    VectorXd sol = a.fullPivLu().solve(rhs);
    const double scale = std::max(1.0, f.cwiseAbs().maxCoeff());
    auto residual = [&](const VectorXd& s) {
      const VectorXd r = a * s - rhs;
      return std::isfinite(r.norm()) ? r.cwiseAbs().maxCoeff() / scale : std::numeric_limits<double>::infinity();
    };
    if (!(residual(sol) <= kResidualTolerance)) {
      MatrixXd ar = a;
      ar.topLeftCorner(n, n).diagonal().array() += kRidge;
      sol = ar.colPivHouseholderQr().solve(rhs);
      regularized_ = true;
    }
    weights_ = sol.head(n);
    constant_ = sol[n];
    linear_ = sol.tail(d);
  }

  double operator()(const VectorXd& x) const { return eval_unit(detail::to_unit(x, lower_, upper_)); }

  double eval_unit(const VectorXd& u) const {
    double s = constant_ + linear_.dot(u);
    for (Eigen::Index i = 0; i < centers_.rows(); ++i) {
      const double r = (centers_.row(i).transpose() - u).norm();
      s += weights_[i] * r * r * r;
    }
    return s;
  }

  bool regularized() const { return regularized_; }
  std::size_t size() const { return static_cast<std::size_t>(centers_.rows()); }

 private:
  VectorXd lower_, upper_;
  MatrixXd centers_;
  VectorXd weights_;
  VectorXd linear_;
  double constant_ = 0.0;
  bool regularized_ = false;
};

inline SurrogateModel fit_surrogate(const std::vector<EvalRecord>& history, const VectorXd& lower,
                                    const VectorXd& upper) {
  std::vector<VectorXd> pts;
  std::vector<double> vals;
  for (const auto& r : history) {
    pts.push_back(r.point);
    vals.push_back(r.value);
  }
  return SurrogateModel(pts, vals, lower, upper);
}

// Position in the exploration/exploitation cycle.
struct CycleState {
  static constexpr std::array<double, 4> kWeights = {0.3, 0.5, 0.8, 0.95};
  // Gaussian perturbation std-dev as a fraction of each coordinate's range.
  static constexpr std::array<double, 4> kScales = {0.2, 0.05, 0.01, 0.002};
  static constexpr double kUniformFraction = 0.25;

  std::size_t step = 0;

  double weight() const { return kWeights[step % kWeights.size()]; }
  double scale() const { return kScales[step % kScales.size()]; }
  void advance() { ++step; }
};

struct Candidate {
  VectorXd point;
  double surrogate = 0.0;
  double min_distance = 0.0;  // in unit-box coordinates
  double merit = 0.0;
};

// Scores candidates in place and returns the index of the merit minimiser
// (first index on ties).
inline std::size_t select_candidate(std::vector<Candidate>& cands, double weight) {
  double smin = std::numeric_limits<double>::infinity(), smax = -smin;
  double dmin = smin, dmax = -smin;
  for (const auto& c : cands) {
    smin = std::min(smin, c.surrogate);
    smax = std::max(smax, c.surrogate);
    dmin = std::min(dmin, c.min_distance);
    dmax = std::max(dmax, c.min_distance);
  }
  std::size_t best = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    auto& c = cands[i];
    const double vs = smax > smin ? (c.surrogate - smin) / (smax - smin) : 0.0;
    const double vd = dmax > dmin ? (dmax - c.min_distance) / (dmax - dmin) : 0.0;
    c.merit = weight * vs + (1.0 - weight) * vd;
    if (c.merit < cands[best].merit) best = i;
  }
  return best;
}

inline double min_unit_distance(const VectorXd& u, const std::vector<VectorXd>& evaluated_unit) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& e : evaluated_unit) d = std::min(d, (e - u).norm());
  return d;
}

struct ProposalSettings {
  std::size_t candidates_per_dim = 250;
  double tie_epsilon = 1e-6;  // unit-box perturbation applied on collision
};

// Candidate cloud around the incumbent, scored against `evaluated` (which
// may include points proposed but not yet evaluated in the current batch).
inline std::vector<Candidate> candidate_cloud(const SurrogateModel& surrogate, const std::vector<VectorXd>& evaluated,
                                              const VectorXd& incumbent, const OptProblem& p,
                                              const CycleState& cycle, std::mt19937_64& rng,
                                              const ProposalSettings& settings = {}) {
  const auto d = static_cast<Eigen::Index>(p.dim);
  const std::size_t count = settings.candidates_per_dim * p.dim;
  const auto uniform_count = static_cast<std::size_t>(CycleState::kUniformFraction * static_cast<double>(count));
  std::normal_distribution<double> gauss(0.0, cycle.scale());
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<VectorXd> evaluated_unit;
  evaluated_unit.reserve(evaluated.size());
  for (const auto& e : evaluated) evaluated_unit.push_back(detail::to_unit(e, p.lower, p.upper));
  const VectorXd inc_unit = detail::to_unit(incumbent, p.lower, p.upper);

  std::vector<Candidate> cands(count);
  for (std::size_t i = 0; i < count; ++i) {
    VectorXd u(d);
    if (i < count - uniform_count) {
      for (Eigen::Index k = 0; k < d; ++k) u[k] = std::clamp(inc_unit[k] + gauss(rng), 0.0, 1.0);
    } else {
      for (Eigen::Index k = 0; k < d; ++k) u[k] = unif(rng);
    }
    cands[i].point = detail::from_unit(u, p.lower, p.upper);
    cands[i].surrogate = surrogate.eval_unit(u);
    cands[i].min_distance = min_unit_distance(u, evaluated_unit);
  }
  return cands;
}

// Next point to evaluate. Never returns a point in `evaluated`.
inline VectorXd propose_next(const SurrogateModel& surrogate, const std::vector<VectorXd>& evaluated,
                             const VectorXd& incumbent, const OptProblem& p, const CycleState& cycle,
                             std::mt19937_64& rng, const ProposalSettings& settings = {}) {
  std::vector<Candidate> cands = candidate_cloud(surrogate, evaluated, incumbent, p, cycle, rng, settings);
  VectorXd x = cands[select_candidate(cands, cycle.weight())].point;
  x = x.cwiseMax(p.lower).cwiseMin(p.upper);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  auto collides = [&](const VectorXd& y) {
    return std::any_of(evaluated.begin(), evaluated.end(), [&](const VectorXd& e) {
      return (detail::to_unit(e, p.lower, p.upper) - detail::to_unit(y, p.lower, p.upper)).norm() <
             0.5 * settings.tie_epsilon;
    });
  };
  while (collides(x)) {
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      x[k] += settings.tie_epsilon * sym(rng) * (p.upper[k] - p.lower[k]);
    }
    x = x.cwiseMax(p.lower).cwiseMin(p.upper);
  }
  return x;
}

// Failed evaluations score 1e3 x the largest finite value so far, or 1e6
// when nothing finite has been seen.
inline double penalty_value(const std::vector<EvalRecord>& history) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& r : history) {
    if (!r.failed) worst = std::max(worst, r.value);
  }
  return std::isfinite(worst) ? 1e3 * std::max(std::abs(worst), 1e-12) : 1e6;
}

inline OptResult minimize(const OptProblem& p, const ProposalSettings& settings = {}) {
  validate(p);
  const auto start = std::chrono::steady_clock::now();
  OptResult result;
  std::mt19937_64 rng(p.seed ^ 0x9e3779b97f4a7c15ULL);

  auto evaluate_batch = [&](const std::vector<VectorXd>& batch) {
    std::vector<double> raw(batch.size());
    std::vector<char> threw(batch.size(), 0);
    auto run_one = [&](std::size_t i) {
      try {
        raw[i] = p.objective(batch[i]);
      } catch (const DivergenceError&) {
        threw[i] = 1;
      }
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(p.threads, batch.size()));
    if (workers == 1) {
      for (std::size_t i = 0; i < batch.size(); ++i) run_one(i);
    } else {
      std::vector<std::future<void>> jobs;
      for (std::size_t w = 0; w < workers; ++w) {
        jobs.push_back(std::async(std::launch::async, [&, w] {
          for (std::size_t i = w; i < batch.size(); i += workers) run_one(i);
        }));
      }
      for (auto& j : jobs) j.get();
    }
    // Commit in proposal order.
    for (std::size_t i = 0; i < batch.size(); ++i) {
      EvalRecord r;
      r.point = batch[i];
      r.eval_index = result.history.size();
      r.failed = threw[i] || !std::isfinite(raw[i]);
      r.value = r.failed ? penalty_value(result.history) : raw[i];
      r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (r.value < result.best_value || result.history.empty()) {
        result.best_value = r.value;
        result.best_point = r.point;
      }
      result.history.push_back(std::move(r));
    }
  };

  std::vector<VectorXd> design = initial_design(p);
  if (design.size() > p.max_evals) design.resize(p.max_evals);
  for (std::size_t i = 0; i < design.size(); i += p.batch_size) {
    const std::size_t end = std::min(design.size(), i + p.batch_size);
    evaluate_batch(std::vector<VectorXd>(design.begin() + static_cast<std::ptrdiff_t>(i),
                                         design.begin() + static_cast<std::ptrdiff_t>(end)));
  }

  CycleState cycle;
  while (result.history.size() < p.max_evals) {
    const SurrogateModel surrogate = fit_surrogate(result.history, p.lower, p.upper);
    std::vector<VectorXd> evaluated;
    evaluated.reserve(result.history.size() + p.batch_size);
    for (const auto& r : result.history) evaluated.push_back(r.point);

    std::vector<VectorXd> batch;
    const std::size_t room = std::min(p.batch_size, p.max_evals - result.history.size());
    for (std::size_t b = 0; b < room; ++b) {
      VectorXd x = propose_next(surrogate, evaluated, result.best_point, p, cycle, rng, settings);
      evaluated.push_back(x);
      batch.push_back(std::move(x));
      cycle.advance();
    }
    evaluate_batch(batch);
  }
  result.termination_reason = "max_evals reached";
  return result;
}

}  // namespace exopt
