#include "fedeec/skr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedeec::skr {

void BoundedQueue::push(double value) {
  if (values_.size() == static_cast<std::size_t>(capacity_)) values_.pop_front();
  values_.push_back(value);
}

std::optional<double> BoundedQueue::mean() const {
  if (values_.empty()) return std::nullopt;
  const double sum = std::accumulate(values_.begin(), values_.end(), 0.0);
  return sum / static_cast<double>(values_.size());
}

double KnowledgeQueues::mean_occupancy() const {
  if (queues_.empty()) return 0.0;
  double total = 0.0;
  for (const auto& q : queues_) total += static_cast<double>(q.size());
  return total / static_cast<double>(queues_.size());
}

bool detect_misattribution(const ProbVector& probs, int label) {
  if (label < 0 || label >= probs.size())
    throw std::invalid_argument("detect_misattribution: label out of range");
  const double p_label = probs[label];
  for (Index i = 0; i < probs.size(); ++i) {
    if (i == label) continue;
    if (probs[i] > p_label) return true;  // strictly greater; ties stay correct
  }
  return false;
}

void queue_push(BoundedQueue& queue, double label_prob) {
  if (!(label_prob > 0.0 && label_prob <= 1.0))
    throw std::invalid_argument("queue_push: probability must lie in (0, 1]");
  queue.push(label_prob);
}

std::optional<double> rectified_label_prob(const BoundedQueue& queue) { return queue.mean(); }

ProbVector redistribute(const ProbVector& probs, int label, double label_prob) {
  if (label < 0 || label >= probs.size())
    throw std::invalid_argument("redistribute: label out of range");
  if (!(label_prob > 0.0 && label_prob < 1.0))
    throw std::invalid_argument("redistribute: rectified probability must lie in (0, 1)");

  const Index n = probs.size();
  Vector q(n);
  double rest = 0.0;
  for (Index i = 0; i < n; ++i)
    if (i != label) rest += probs[i];

  if (rest < 1e-9) {
    // all mass sat on the label class; spread the remainder uniformly
    const double share = (1.0 - label_prob) / static_cast<double>(n - 1);
    for (Index i = 0; i < n; ++i) q[i] = (i == label) ? label_prob : share;
    return ProbVector(std::move(q));
  }

  const double scale = (1.0 - label_prob) / rest;
  for (Index i = 0; i < n; ++i) q[i] = (i == label) ? label_prob : probs[i] * scale;
  return ProbVector(std::move(q));
}

Produced produce_knowledge(const ProbVector& probs, int label, KnowledgeQueues& queues) {
  BoundedQueue& queue = queues.for_class(label);

  if (!detect_misattribution(probs, label)) {
    queue_push(queue, std::max(probs[label], kProbFloor));
    return {KnowledgeMessage{probs, false, -1, label}, Outcome::correct};
  }
  const std::optional<double> estimate = rectified_label_prob(queue);
  if (!estimate) {
    return {KnowledgeMessage{probs, false, -1, label}, Outcome::misattributed_unrectified};
  }
  const double clamped = std::clamp(*estimate, kProbFloor, 1.0 - kProbFloor);
  ProbVector q = redistribute(probs, label, clamped);
  return {KnowledgeMessage{std::move(q), true, -1, label}, Outcome::misattributed_rectified};
}

}  // namespace fedeec::skr
