#pragma once

#include <iosfwd>
#include <vector>

#include "fedeec/rng.hpp"
#include "fedeec/types.hpp"

namespace fedeec::nn {

/// Fully connected classifier/regressor: rectifier hidden layers, linear
/// output. Weights are (out x in); inputs are row-major batches.
struct DenseModel {
  std::vector<int> layer_dims;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  long param_count() const;
};

/// Gradients (or any other per-parameter tensor set) shaped like a model.
struct Gradients {
  std::vector<Matrix> d_weights;
  std::vector<Vector> d_biases;

  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
};

Gradients zeros_like(const DenseModel& model);

/// The composite distillation loss split into its reported terms. Non-leaf
/// students combine a bridge cross-entropy with a weighted divergence term;
/// leaf students add the private-data cross-entropy in front.
struct LossBreakdown {
  double total = 0.0;
  double ce_term = 0.0;
  double kl_term = 0.0;
  double local_ce_term = 0.0;  // zero for non-leaf losses

  static LossBreakdown non_leaf(double ce, double kl, double beta) {
    return {ce + beta * kl, ce, kl, 0.0};
  }
  static LossBreakdown leaf(double local_ce, double ce, double kl, double beta, double gamma) {
    return {local_ce + gamma * (ce + beta * kl), ce, kl, local_ce};
  }
};

/// Seeded init: He-scaled normal weights, zero biases.
DenseModel init_dense(const std::vector<int>& layer_dims, RngStream& stream);

/// Raw logits for a batch (no softmax).
Matrix forward(const DenseModel& model, const Matrix& inputs);

/// Forward pass that keeps pre- and post-activation values for backprop.
struct ForwardTrace {
  std::vector<Matrix> activations;  // activations[0] = inputs
  std::vector<Matrix> preacts;      // preacts[l] = z of layer l
  const Matrix& logits() const { return activations.back(); }
};

ForwardTrace forward_trace(const DenseModel& model, const Matrix& inputs);

/// Backprop of an arbitrary upstream gradient d_logits through the model.
/// Also produces the gradient w.r.t. the inputs, so stacked models
/// (encoder + decoder) can chain.
struct BackwardResult {
  Gradients grads;
  Matrix d_inputs;
};

BackwardResult backward(const DenseModel& model, const ForwardTrace& trace,
                        const Matrix& d_logits);

/// w <- w - lr * g for every parameter.
void sgd_step(DenseModel& model, const Gradients& grads, double lr);

/// Temperature softmax with max-subtraction; temperature > 0.
ProbVector softmax_temp(const Vector& logits, double temperature);

/// Row-wise temperature softmax for batches.
Matrix softmax_rows(const Matrix& logits, double temperature);

/// -log(p[label]) with the probability floored at kProbFloor.
double cross_entropy(const ProbVector& probs, int label);

/// sum_i p_i log(p_i / q_i), q floored at kProbFloor, 0 log 0 := 0.
double kl_div(const ProbVector& p, const ProbVector& q);

/// Same divergence on raw rows (used in batched loss paths).
double kl_div_rows(const Eigen::Ref<const Eigen::RowVectorXd>& p,
                   const Eigen::Ref<const Eigen::RowVectorXd>& q);

/// One epoch of shuffled mini-batch SGD on plain softmax cross-entropy.
/// Returns the mean per-step loss.
double train_epoch_ce(DenseModel& model, const Matrix& inputs, const IntVector& labels,
                      int batch_size, double lr, RngStream& stream);

/// FNV hash of the exact parameter bytes; used for frozen-weight checks.
std::uint64_t weight_checksum(const DenseModel& model);

/// Flat text serialization: one header line with layer dims, then one
/// whitespace-separated line of parameters in layer-major weight-then-bias
/// order (weights traversed row by row). Values carry 17 significant
/// digits so a round trip is bit exact.
void save_dense(std::ostream& out, const DenseModel& model);
DenseModel load_dense(std::istream& in);

void save_dense_file(const std::string& path, const DenseModel& model);
DenseModel load_dense_file(const std::string& path);

}  // namespace fedeec::nn
