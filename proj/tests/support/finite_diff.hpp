#pragma once

// Central-finite-difference gradient oracle for loss functions over a
// DenseModel's parameters. Stays independent of the analytic backward path:
// it only calls the scalar loss.

#include <functional>

#include "fedeec/nn.hpp"

namespace testsupport {

using fedeec::Index;
using fedeec::nn::DenseModel;
using fedeec::nn::Gradients;

inline Gradients finite_diff_gradients(const DenseModel& model,
                                       const std::function<double(const DenseModel&)>& loss,
                                       double step = 1e-5) {
  Gradients g = fedeec::nn::zeros_like(model);
  DenseModel work = model;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    for (Index r = 0; r < model.weights[l].rows(); ++r)
      for (Index c = 0; c < model.weights[l].cols(); ++c) {
        const double saved = work.weights[l](r, c);
        work.weights[l](r, c) = saved + step;
        const double up = loss(work);
        work.weights[l](r, c) = saved - step;
        const double down = loss(work);
        work.weights[l](r, c) = saved;
        g.d_weights[l](r, c) = (up - down) / (2.0 * step);
      }
    for (Index i = 0; i < model.biases[l].size(); ++i) {
      const double saved = work.biases[l][i];
      work.biases[l][i] = saved + step;
      const double up = loss(work);
      work.biases[l][i] = saved - step;
      const double down = loss(work);
      work.biases[l][i] = saved;
      g.d_biases[l][i] = (up - down) / (2.0 * step);
    }
  }
  return g;
}

// Relative error with a small floor so near-zero entries compare sanely.
inline double max_relative_error(const Gradients& analytic, const Gradients& numeric) {
  double worst = 0.0;
  auto update = [&worst](double a, double n) {
    const double denom = std::max({std::abs(a), std::abs(n), 1e-3});
    worst = std::max(worst, std::abs(a - n) / denom);
  };
  for (std::size_t l = 0; l < analytic.d_weights.size(); ++l) {
    for (Index r = 0; r < analytic.d_weights[l].rows(); ++r)
      for (Index c = 0; c < analytic.d_weights[l].cols(); ++c)
        update(analytic.d_weights[l](r, c), numeric.d_weights[l](r, c));
    for (Index i = 0; i < analytic.d_biases[l].size(); ++i)
      update(analytic.d_biases[l][i], numeric.d_biases[l][i]);
  }
  return worst;
}

// Keeps finite differences honest: rejects models whose hidden pre-acts sit
// on the rectifier kink for the given inputs.
inline bool relu_kink_margin_ok(const DenseModel& model, const fedeec::Matrix& inputs,
                                double margin = 1e-3) {
  const auto trace = fedeec::nn::forward_trace(model, inputs);
  for (std::size_t l = 0; l + 1 < model.weights.size(); ++l)
    if ((trace.preacts[l].array().abs() < margin).any()) return false;
  return true;
}

}  // namespace testsupport
