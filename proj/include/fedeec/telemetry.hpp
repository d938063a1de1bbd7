#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedeec/nn.hpp"
#include "fedeec/types.hpp"

namespace fedeec::telemetry {

enum class EdgeClass { end_edge, edge_cloud };
enum class Payload { embedding, label, knowledge, parameters };
enum class Direction { up, down };

const char* to_string(EdgeClass c);
const char* to_string(Payload p);

/// Exact scalar-level traffic counters, keyed by edge class and payload
/// kind, with an up/down refinement for parameter transfers. One scalar is
/// one real number or one integer label.
class TrafficLedger {
public:
  void add(EdgeClass edge, Payload payload, Direction dir, std::uint64_t scalars);

  std::uint64_t count(EdgeClass edge, Payload payload) const;
  std::uint64_t count(EdgeClass edge, Payload payload, Direction dir) const;
  std::uint64_t edge_total(EdgeClass edge) const;
  std::uint64_t total() const;

  void merge(const TrafficLedger& other);

private:
  // [edge][payload][direction]
  std::array<std::array<std::array<std::uint64_t, 2>, 4>, 2> counts_{};
};

/// Per-node teacher-side rectification counts for one round.
struct SkrNodeCounts {
  std::uint64_t correct = 0;
  std::uint64_t misattributed_unrectified = 0;
  std::uint64_t misattributed_rectified = 0;
};

struct RoundMetrics {
  int round = 0;
  double cloud_accuracy = 0.0;
  // tier -> mean loss terms over the round's student updates at that tier
  std::map<int, nn::LossBreakdown> tier_losses;
  std::map<std::string, SkrNodeCounts> skr_counts;
  double mean_queue_occupancy = 0.0;
  std::uint64_t end_edge_scalars = 0;    // cumulative
  std::uint64_t edge_cloud_scalars = 0;  // cumulative
  std::string parent_map;
};

/// One JSON object per line; deterministic field order.
std::string round_metrics_to_json(const RoundMetrics& m);
RoundMetrics round_metrics_from_json(const std::string& line);

/// Closed-form traffic predictors. The distillation protocol ships each
/// sample's embedding once at init (|eps|+1 scalars per edge traversed) and
/// a (|z|+1)-scalar knowledge payload per sample per round; the value below
/// applies to each edge class of a three-tier network.
std::uint64_t predict_fedeec_traffic(const std::vector<std::uint64_t>& client_sizes,
                                     std::uint64_t embedding_len, std::uint64_t logits_len,
                                     std::uint64_t rounds);

/// Parameter-averaging traffic: rounds * sum of model sizes, per direction;
/// the measured ledger counts both directions.
std::uint64_t predict_hierfavg_traffic(const std::vector<std::uint64_t>& model_sizes,
                                       std::uint64_t rounds);

/// A completed run as persisted on disk.
struct RunArtifact {
  std::string mode;
  std::uint64_t seed = 0;
  std::string config_snapshot;  // exact config bytes
  std::string data_section;     // the [data] lines, for comparability checks
  std::vector<RoundMetrics> rounds;
};

struct SummaryRow {
  std::string method;
  std::vector<std::uint64_t> seeds;
  double mean_best_accuracy = 0.0;
  double max_best_accuracy = 0.0;
  std::uint64_t end_edge_scalars = 0;
  std::uint64_t edge_cloud_scalars = 0;
};

/// Best-round accuracy of one run (the maximum observed during training).
double best_accuracy(const RunArtifact& run);

/// Group runs by mode into comparison rows. Runs must share the test set
/// (equal [data] sections); mismatches raise an error naming the sections.
std::vector<SummaryRow> summarize(const std::vector<RunArtifact>& runs);

std::string summary_to_csv(const std::vector<SummaryRow>& rows);

}  // namespace fedeec::telemetry
