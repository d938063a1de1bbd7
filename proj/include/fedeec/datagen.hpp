#pragma once

#include <vector>

#include "fedeec/rng.hpp"
#include "fedeec/types.hpp"

namespace fedeec::datagen {

struct LabeledDataset {
  Matrix inputs;      // N x input_dim
  IntVector labels;   // N, values in [0, C)
  int class_count = 0;
  std::uint64_t seed = 0;

  Index size() const { return inputs.rows(); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
};

/// The sampling space of a synthetic task: C anisotropic Gaussian clusters
/// sharing principal axes, means separated by class_sep inside the
/// top-variance subspace, rotated into observation coordinates and
/// standardized per dimension against the generating distribution's exact
/// moments. Train, test and public splits must share one space so they are
/// identically distributed.
class GaussianMixture {
public:
  static GaussianMixture create(int class_count, int input_dim, double class_sep,
                                std::uint64_t seed);

  /// Draw n labeled samples with balanced class counts (+-1).
  LabeledDataset sample(int n, std::uint64_t sample_seed) const;

  /// Draw unlabeled rows with uniform class mixing (public corpus).
  Matrix sample_inputs(int n, std::uint64_t sample_seed) const;

  int class_count() const { return class_count_; }
  int input_dim() const { return input_dim_; }

private:
  int class_count_ = 0;
  int input_dim_ = 0;
  double class_sep_ = 0.0;
  Matrix rotation_;      // input_dim x input_dim, orthonormal
  Vector latent_sigma;   // decaying spectrum, length input_dim
  Matrix class_means_;   // C x input_dim, latent coordinates
  Vector shift_;         // per-dim standardization offset
  Vector scale_;         // per-dim standardization divisor

  Vector draw_one(int label, RngStream& stream) const;
};

/// One-shot convenience matching the (n, C, input_dim, class_sep, seed)
/// signature: builds a space from the seed and samples n points.
LabeledDataset make_dataset(int n, int class_count, int input_dim, double class_sep,
                            std::uint64_t seed);

struct PartitionPlan {
  std::vector<std::vector<int>> client_indices;  // K disjoint lists
  double alpha = 0.0;
  std::uint64_t seed = 0;
};

/// Split dataset indices across K clients with per-class Dirichlet(alpha)
/// proportions. Every client receives at least one sample (the draw is
/// retried up to 100 times otherwise).
PartitionPlan dirichlet_partition(const LabeledDataset& ds, int clients, double alpha,
                                  std::uint64_t seed);

/// Per-class histogram of a label subset, normalized to sum 1.
Vector class_histogram(const IntVector& labels, const std::vector<int>& indices,
                       int class_count);
Vector class_histogram_all(const IntVector& labels, int class_count);

/// Total variation distance between two normalized histograms.
double total_variation(const Vector& a, const Vector& b);

}  // namespace fedeec::datagen
