#pragma once

#include <optional>

#include "fedeec/autocodec.hpp"
#include "fedeec/nn.hpp"
#include "fedeec/rng.hpp"
#include "fedeec/skr.hpp"
#include "fedeec/types.hpp"

namespace fedeec::bsbodp {

struct DistillConfig {
  double beta = 1.5;         // weight of the divergence term
  double gamma = 1.0;        // weight of the bridge loss inside the leaf loss
  double temperature = 0.5;  // teacher softmax temperature
  int batch_size = 8;
  int local_epochs = 1;      // passes per directional update
  double learning_rate = 0.001;
  bool student_temperature = false;  // also divide the student's divergence-term logits by T
  bool skr_enabled = true;           // false reproduces the unrectified predecessor protocol
};

/// Everything the student consumes for one directional pass, aligned row by
/// row with the pair's embedding set.
struct BridgeBatch {
  Matrix embeddings;            // n x embed_dim
  IntVector labels;             // n
  Matrix decoded;               // n x input_dim, the bridge samples
  Matrix knowledge;             // n x C, teacher distributions (rectified or raw)
  std::vector<char> rectified;  // n flags

  Index size() const { return embeddings.rows(); }
};

/// Teacher side of a directional pass: decode every stored embedding,
/// extract logits, temperature-softmax them and (when enabled) run the
/// rectification decision per sample. Queues grow only on correctly
/// attributed predictions.
BridgeBatch teacher_emit(const nn::DenseModel& teacher, skr::KnowledgeQueues& queues,
                         const Matrix& embeddings, const IntVector& labels,
                         const autocodec::AutoEncoder& codec, const DistillConfig& cfg,
                         skr::OutcomeCounts* counts = nullptr);

/// Composite loss of a student on a bridge batch (plus the private term for
/// leaves), reported as its breakdown. Pure; used by the gradient oracle.
nn::LossBreakdown distill_loss(const nn::DenseModel& student, const BridgeBatch& batch,
                               const DistillConfig& cfg, bool is_leaf,
                               const Matrix* private_inputs = nullptr,
                               const IntVector* private_labels = nullptr);

/// Exact analytic gradients of distill_loss w.r.t. every parameter.
nn::Gradients distill_gradients(const nn::DenseModel& student, const BridgeBatch& batch,
                                const DistillConfig& cfg, bool is_leaf,
                                const Matrix* private_inputs = nullptr,
                                const IntVector* private_labels = nullptr);

/// Run local_epochs of mini-batch SGD on the student against the batch.
/// Leaves pair one private mini-batch with one bridge mini-batch per step,
/// cycling the shorter stream. Returns one loss breakdown per step.
std::vector<nn::LossBreakdown> student_update(nn::DenseModel& student, const BridgeBatch& batch,
                                              const DistillConfig& cfg, bool is_leaf,
                                              const Matrix* private_inputs,
                                              const IntVector* private_labels,
                                              RngStream& stream);

/// One side of a pair round as the orchestrator sees it.
struct PairNodeRef {
  nn::DenseModel* model = nullptr;
  skr::KnowledgeQueues* queues = nullptr;
  bool is_leaf = false;
  const Matrix* private_inputs = nullptr;   // leaves only
  const IntVector* private_labels = nullptr;
};

struct DirectionalResult {
  std::vector<nn::LossBreakdown> losses;
  skr::OutcomeCounts teacher_counts;
  std::uint64_t rectified_messages = 0;
};

struct PairRoundResult {
  DirectionalResult child_as_student;
  DirectionalResult parent_as_student;
  Index sample_count = 0;
};

/// Full pair round over the child-subtree embedding set: the child learns
/// from the parent first, then roles swap. Both passes walk the same
/// embedding rows.
PairRoundResult bsbodp_pair_round(PairNodeRef child, PairNodeRef parent,
                                  const Matrix& embeddings, const IntVector& labels,
                                  const autocodec::AutoEncoder& codec, const DistillConfig& cfg,
                                  RngStream& stream);

}  // namespace fedeec::bsbodp
