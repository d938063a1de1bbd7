#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace fedeec {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using Index = Eigen::Index;

// Floor applied inside every log() on probabilities.
inline constexpr double kProbFloor = 1e-12;
// Tolerance for "sums to one" checks on probability vectors.
inline constexpr double kProbSumTol = 1e-9;

/// Error with a stage tag so multi-stage runs can report where they died.
class Error : public std::runtime_error {
public:
  Error(std::string stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

/// A probability distribution over C classes: entries >= 0, sum == 1
/// within kProbSumTol. Validated on construction.
class ProbVector {
public:
  explicit ProbVector(Vector values) : v_(std::move(values)) {
    if (v_.size() == 0) throw std::invalid_argument("ProbVector: empty");
    double sum = 0.0;
    for (Index i = 0; i < v_.size(); ++i) {
      if (!std::isfinite(v_[i]) || v_[i] < 0.0)
        throw std::invalid_argument("ProbVector: negative or non-finite entry");
      sum += v_[i];
    }
    if (std::abs(sum - 1.0) > kProbSumTol)
      throw std::invalid_argument("ProbVector: entries sum to " + std::to_string(sum));
  }

  const Vector& values() const { return v_; }
  double operator[](Index i) const { return v_[i]; }
  Index size() const { return v_.size(); }

private:
  Vector v_;
};

}  // namespace fedeec
