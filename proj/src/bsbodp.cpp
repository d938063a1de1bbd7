#include "fedeec/bsbodp.hpp"

#include <cmath>
#include <numeric>

namespace fedeec::bsbodp {

namespace {

struct BridgeTerms {
  double ce = 0.0;
  double kl = 0.0;
  Matrix d_logits;  // gradient of (w_ce * ce + w_kl * kl) w.r.t. student logits
};

// Mean cross-entropy and divergence of the student on decoded rows, plus
// the combined upstream gradient. The divergence compares the student's
// distribution against the fixed teacher knowledge row by row.
BridgeTerms bridge_terms(const Matrix& logits, const IntVector& labels, const Matrix& knowledge,
                         const DistillConfig& cfg, double w_ce, double w_kl) {
  const Index n = logits.rows();
  const Index classes = logits.cols();
  const double t_student = cfg.student_temperature ? cfg.temperature : 1.0;

  const Matrix p = nn::softmax_rows(logits, 1.0);
  const Matrix ps = cfg.student_temperature ? nn::softmax_rows(logits, t_student) : p;

  BridgeTerms out;
  out.d_logits = Matrix::Zero(n, classes);
  for (Index i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= classes) throw Error("bsbodp", "bridge label out of range");
    out.ce += -std::log(std::max(p(i, y), kProbFloor));

    const double kl_i = nn::kl_div_rows(ps.row(i), knowledge.row(i));
    out.kl += kl_i;

    for (Index j = 0; j < classes; ++j) {
      double g = w_ce * (p(i, j) - (j == y ? 1.0 : 0.0));
      const double psj = ps(i, j);
      if (psj > 0.0) {
        const double q = std::max(knowledge(i, j), kProbFloor);
        g += w_kl / t_student * psj * (std::log(psj / q) - kl_i);
      }
      out.d_logits(i, j) = g / static_cast<double>(n);
    }
  }
  out.ce /= static_cast<double>(n);
  out.kl /= static_cast<double>(n);
  return out;
}

struct PrivateTerm {
  double ce = 0.0;
  Matrix d_logits;
};

PrivateTerm private_term(const Matrix& logits, const IntVector& labels) {
  const Index n = logits.rows();
  const Matrix p = nn::softmax_rows(logits, 1.0);
  PrivateTerm out;
  out.d_logits = p;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= logits.cols()) throw Error("bsbodp", "private label out of range");
    out.ce += -std::log(std::max(p(i, y), kProbFloor));
    out.d_logits(i, y) -= 1.0;
  }
  out.d_logits /= static_cast<double>(n);
  out.ce /= static_cast<double>(n);
  return out;
}

void require_leaf_inputs(bool is_leaf, const Matrix* xs, const IntVector* ys) {
  if (is_leaf && (xs == nullptr || ys == nullptr))
    throw Error("bsbodp", "leaf student update requires private data");
}

Matrix take_rows(const Matrix& src, const std::vector<int>& order, int start, int count) {
  Matrix out(count, src.cols());
  for (int i = 0; i < count; ++i) out.row(i) = src.row(order[(start + i) % order.size()]);
  return out;
}

IntVector take_labels(const IntVector& src, const std::vector<int>& order, int start, int count) {
  IntVector out(count);
  for (int i = 0; i < count; ++i) out[i] = src[order[(start + i) % order.size()]];
  return out;
}

}  // namespace

BridgeBatch teacher_emit(const nn::DenseModel& teacher, skr::KnowledgeQueues& queues,
                         const Matrix& embeddings, const IntVector& labels,
                         const autocodec::AutoEncoder& codec, const DistillConfig& cfg,
                         skr::OutcomeCounts* counts) {
  if (embeddings.rows() != labels.size())
    throw Error("bsbodp", "embedding/label row counts disagree");
  BridgeBatch batch;
  batch.embeddings = embeddings;
  batch.labels = labels;
  batch.decoded = autocodec::decode_batch(codec, embeddings);
  const Matrix logits = nn::forward(teacher, batch.decoded);
  const Matrix probs = nn::softmax_rows(logits, cfg.temperature);

  const Index n = embeddings.rows();
  batch.knowledge = Matrix(n, logits.cols());
  batch.rectified.assign(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    if (!cfg.skr_enabled) {
      batch.knowledge.row(i) = probs.row(i);
      continue;
    }
    ProbVector p(probs.row(i).transpose());
    skr::Produced produced = skr::produce_knowledge(p, labels[i], queues);
    batch.knowledge.row(i) = produced.message.distribution.values().transpose();
    batch.rectified[static_cast<std::size_t>(i)] =
        produced.message.rectified ? 1 : 0;
    if (counts) counts->add(produced.outcome);
  }
  return batch;
}

nn::LossBreakdown distill_loss(const nn::DenseModel& student, const BridgeBatch& batch,
                               const DistillConfig& cfg, bool is_leaf,
                               const Matrix* private_inputs, const IntVector* private_labels) {
  require_leaf_inputs(is_leaf, private_inputs, private_labels);
  const Matrix logits = nn::forward(student, batch.decoded);
  const BridgeTerms terms = bridge_terms(logits, batch.labels, batch.knowledge, cfg, 0, 0);
  if (!is_leaf) return nn::LossBreakdown::non_leaf(terms.ce, terms.kl, cfg.beta);
  const PrivateTerm local = private_term(nn::forward(student, *private_inputs), *private_labels);
  return nn::LossBreakdown::leaf(local.ce, terms.ce, terms.kl, cfg.beta, cfg.gamma);
}

nn::Gradients distill_gradients(const nn::DenseModel& student, const BridgeBatch& batch,
                                const DistillConfig& cfg, bool is_leaf,
                                const Matrix* private_inputs, const IntVector* private_labels) {
  require_leaf_inputs(is_leaf, private_inputs, private_labels);
  const double w_ce = is_leaf ? cfg.gamma : 1.0;
  const double w_kl = w_ce * cfg.beta;

  nn::ForwardTrace trace = nn::forward_trace(student, batch.decoded);
  const BridgeTerms terms =
      bridge_terms(trace.logits(), batch.labels, batch.knowledge, cfg, w_ce, w_kl);
  nn::Gradients grads = nn::backward(student, trace, terms.d_logits).grads;

  if (is_leaf) {
    nn::ForwardTrace ptrace = nn::forward_trace(student, *private_inputs);
    const PrivateTerm local = private_term(ptrace.logits(), *private_labels);
    grads += nn::backward(student, ptrace, local.d_logits).grads;
  }
  return grads;
}

std::vector<nn::LossBreakdown> student_update(nn::DenseModel& student, const BridgeBatch& batch,
                                              const DistillConfig& cfg, bool is_leaf,
                                              const Matrix* private_inputs,
                                              const IntVector* private_labels,
                                              RngStream& stream) {
  require_leaf_inputs(is_leaf, private_inputs, private_labels);
  const int n_bridge = static_cast<int>(batch.size());
  if (n_bridge == 0) return {};
  const int n_private = is_leaf ? static_cast<int>(private_inputs->rows()) : 0;
  const double w_ce = is_leaf ? cfg.gamma : 1.0;
  const double w_kl = w_ce * cfg.beta;

  std::vector<nn::LossBreakdown> history;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::vector<int> bridge_order(n_bridge);
    std::iota(bridge_order.begin(), bridge_order.end(), 0);
    stream.shuffle(bridge_order);
    std::vector<int> private_order(std::max(n_private, 0));
    std::iota(private_order.begin(), private_order.end(), 0);
    if (is_leaf) stream.shuffle(private_order);

    const int longest = std::max(n_bridge, n_private);
    const int steps = (longest + cfg.batch_size - 1) / cfg.batch_size;
    for (int step = 0; step < steps; ++step) {
      const int start = step * cfg.batch_size;
      const int bb = std::min(cfg.batch_size, longest - start);

      BridgeBatch mini;
      mini.decoded = take_rows(batch.decoded, bridge_order, start, bb);
      mini.labels = take_labels(batch.labels, bridge_order, start, bb);
      mini.knowledge = take_rows(batch.knowledge, bridge_order, start, bb);

      nn::ForwardTrace trace = nn::forward_trace(student, mini.decoded);
      const BridgeTerms terms =
          bridge_terms(trace.logits(), mini.labels, mini.knowledge, cfg, w_ce, w_kl);
      nn::Gradients grads = nn::backward(student, trace, terms.d_logits).grads;

      double local_ce = 0.0;
      if (is_leaf) {
        const Matrix px = take_rows(*private_inputs, private_order, start, bb);
        const IntVector py = take_labels(*private_labels, private_order, start, bb);
        nn::ForwardTrace ptrace = nn::forward_trace(student, px);
        const PrivateTerm local = private_term(ptrace.logits(), py);
        grads += nn::backward(student, ptrace, local.d_logits).grads;
        local_ce = local.ce;
      }
      nn::sgd_step(student, grads, cfg.learning_rate);

      history.push_back(is_leaf
                            ? nn::LossBreakdown::leaf(local_ce, terms.ce, terms.kl, cfg.beta,
                                                      cfg.gamma)
                            : nn::LossBreakdown::non_leaf(terms.ce, terms.kl, cfg.beta));
    }
  }
  return history;
}

PairRoundResult bsbodp_pair_round(PairNodeRef child, PairNodeRef parent,
                                  const Matrix& embeddings, const IntVector& labels,
                                  const autocodec::AutoEncoder& codec, const DistillConfig& cfg,
                                  RngStream& stream) {
  if (child.model == nullptr || parent.model == nullptr)
    throw Error("bsbodp", "pair round needs both models");
  if (child.queues == nullptr || parent.queues == nullptr)
    throw Error("bsbodp", "pair round needs both knowledge queues");

  PairRoundResult result;
  result.sample_count = embeddings.rows();

  auto directional = [&](PairNodeRef& student, PairNodeRef& teacher) {
    DirectionalResult dir;
    BridgeBatch batch = teacher_emit(*teacher.model, *teacher.queues, embeddings, labels, codec,
                                     cfg, &dir.teacher_counts);
    dir.rectified_messages = dir.teacher_counts.misattributed_rectified;
    dir.losses = student_update(*student.model, batch, cfg, student.is_leaf,
                                student.private_inputs, student.private_labels, stream);
    return dir;
  };

  // child learns from the parent first, then roles swap
  result.child_as_student = directional(child, parent);
  result.parent_as_student = directional(parent, child);
  return result;
}

}  // namespace fedeec::bsbodp
