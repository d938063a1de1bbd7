#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "fedeec/types.hpp"

namespace fedeec::skr {

/// Bounded FIFO of label-class probabilities from correctly attributed
/// predictions. Oldest entry is evicted when a push hits capacity.
class BoundedQueue {
public:
  explicit BoundedQueue(int capacity) : capacity_(capacity) {
    if (capacity <= 0) throw std::invalid_argument("BoundedQueue: capacity must be positive");
  }

  void push(double value);
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  int capacity() const { return capacity_; }
  /// Mean of the current contents (over actual length, not capacity).
  std::optional<double> mean() const;
  const std::deque<double>& values() const { return values_; }

private:
  int capacity_;
  std::deque<double> values_;
};

/// One queue per class.
class KnowledgeQueues {
public:
  KnowledgeQueues(int class_count, int capacity)
      : queues_(static_cast<std::size_t>(class_count), BoundedQueue(capacity)) {}

  BoundedQueue& for_class(int c) { return queues_.at(static_cast<std::size_t>(c)); }
  const BoundedQueue& for_class(int c) const { return queues_.at(static_cast<std::size_t>(c)); }
  int class_count() const { return static_cast<int>(queues_.size()); }
  double mean_occupancy() const;

private:
  std::vector<BoundedQueue> queues_;
};

/// Distribution handed to the student, with the rectification flag and the
/// sample tag it travels with.
struct KnowledgeMessage {
  ProbVector distribution;
  bool rectified = false;
  int sample_index = -1;  // row in the pair's bridge batch
  int label = -1;
};

enum class Outcome { correct, misattributed_unrectified, misattributed_rectified };

struct OutcomeCounts {
  std::uint64_t correct = 0;
  std::uint64_t misattributed_unrectified = 0;
  std::uint64_t misattributed_rectified = 0;

  void add(Outcome o) {
    switch (o) {
      case Outcome::correct: ++correct; break;
      case Outcome::misattributed_unrectified: ++misattributed_unrectified; break;
      case Outcome::misattributed_rectified: ++misattributed_rectified; break;
    }
  }
  OutcomeCounts& operator+=(const OutcomeCounts& o) {
    correct += o.correct;
    misattributed_unrectified += o.misattributed_unrectified;
    misattributed_rectified += o.misattributed_rectified;
    return *this;
  }
};

/// True iff some non-label class got a strictly higher probability than the
/// label class.
bool detect_misattribution(const ProbVector& probs, int label);

/// Push the label-class probability of a correctly attributed prediction.
/// Values must lie in (0, 1].
void queue_push(BoundedQueue& queue, double label_prob);

/// Maximum-likelihood estimate of the label-class probability: the mean of
/// the stored history. Empty queues yield nothing (caller falls back).
std::optional<double> rectified_label_prob(const BoundedQueue& queue);

/// Replace the label-class probability by label_prob and rescale the other
/// classes proportionally, which is the divergence-minimal completion on
/// the simplex slice. Degenerate non-label mass (< 1e-9) is spread
/// uniformly instead.
ProbVector redistribute(const ProbVector& probs, int label, double label_prob);

struct Produced {
  KnowledgeMessage message;
  Outcome outcome;
};

/// Full teacher-side decision for one bridge sample: correct predictions
/// feed the queue and travel unchanged; misattributed ones travel rectified
/// when history exists, unchanged otherwise. Queues are only mutated on the
/// correct branch.
Produced produce_knowledge(const ProbVector& probs, int label, KnowledgeQueues& queues);

}  // namespace fedeec::skr
