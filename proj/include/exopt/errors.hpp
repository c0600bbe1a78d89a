#pragma once

#include <stdexcept>
#include <string>

namespace exopt {

// Invalid model, path, or configuration input. field() names the first
// violated invariant, e.g. "subject.thigh.mass".
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& rule)
      : std::invalid_argument(field + ": " + rule), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// A rollout left the admissible state region (|q| > 2 pi, |qdot| > 1e3 rad/s,
// or a non-finite entry).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double t) : std::runtime_error(what), time_(t) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace exopt
