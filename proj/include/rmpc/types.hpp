#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace rmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Reference trajectory: one column per step, rows = reference dimension.
// Column j holds r_{j+1}.
using RefTraj = Eigen::MatrixXd;

// Caller broke a documented precondition (dimension mismatch, bad horizon).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A numeric evaluation left its valid domain (tan singularity, overflow).
class NumericDomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A rollout left the model's validity envelope.
class DivergedRollout : public std::runtime_error {
 public:
  DivergedRollout(const std::string& what, int step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

// Configuration or file-format problem; carries an optional line number.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw ContractViolation(msg);
}

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

// Exact, locale-independent text forms of doubles.
inline std::string hex_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

// Shortest decimal text that reads back to the same double.
inline std::string fmt_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

template <class V>
std::string hex_join(const V& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += hex_double(v[i]);
  }
  return s;
}

}  // namespace rmpc
