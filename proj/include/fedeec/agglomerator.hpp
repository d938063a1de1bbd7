#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fedeec/autocodec.hpp"
#include "fedeec/bsbodp.hpp"
#include "fedeec/datagen.hpp"
#include "fedeec/telemetry.hpp"
#include "fedeec/topology.hpp"

namespace fedeec::sim {

enum class Mode { fedeec, fedagg, hierfavg };

const char* to_string(Mode m);
Mode mode_from_string(const std::string& name);

struct MigrationEvent {
  int round = 0;
  topo::NodeId node;
  topo::NodeId new_parent;
};

/// Everything a run needs. Parsed from the config file; see config.hpp.
struct ExperimentConfig {
  std::string topology_spec = "r(e1(d1,d2,d3,d4),e2(d5,d6,d7,d8))";
  std::map<int, std::vector<int>> tier_model_dims;  // tier index -> layer dims
  // per-node overrides for device-heterogeneity experiments; distillation
  // is model-agnostic, so any mix is fine as long as sizes stay monotone
  // along every edge
  std::map<topo::NodeId, std::vector<int>> node_model_dims;

  // data
  int train_n = 4000;
  int test_n = 1000;
  int class_count = 4;
  int input_dim = 16;
  double class_sep = 1.5;
  double alpha = 2.0;
  std::uint64_t data_seed = 42;  // fixes the task and the test set across seeds

  // autoencoder
  autocodec::PretrainConfig ae;
  int ae_corpus_n = 2000;

  // training
  int rounds = 30;
  bsbodp::DistillConfig distill;
  int queue_capacity = 20;
  int kappa1 = 1;  // local epochs per sub-round (parameter-averaging baseline)
  int kappa2 = 1;  // sub-rounds per cloud round (parameter-averaging baseline)
  bool coalesce_parent_rounds = false;
  bool parallel_subtrees = false;

  std::vector<MigrationEvent> migrations;
  Mode mode = Mode::fedeec;
  std::uint64_t seed = 1;

  /// skr_enabled resolved against the mode (fedagg forces it off).
  bool skr_active() const { return mode == Mode::fedeec && distill.skr_enabled; }
};

/// Per-node embedding records, aligned arrays. Rows are ordered by origin
/// leaf id, then by the leaf's own sample order.
struct EmbeddingStore {
  Matrix embeddings;  // n x embed_dim
  IntVector labels;
  std::vector<topo::NodeId> origins;

  Index size() const { return embeddings.rows(); }
};

struct NodeRuntime {
  nn::DenseModel model;
  skr::KnowledgeQueues queues;
  EmbeddingStore store;
  Matrix private_inputs;     // leaves only
  IntVector private_labels;  // leaves only

  NodeRuntime(nn::DenseModel m, int class_count, int queue_capacity)
      : model(std::move(m)), queues(class_count, queue_capacity) {}
};

struct RunResult {
  std::vector<telemetry::RoundMetrics> rounds;
  std::map<topo::NodeId, nn::DenseModel> final_models;
  autocodec::AutoEncoder codec;
  telemetry::TrafficLedger ledger;
};

/// Fraction of test samples whose arg-max logit matches the label.
double evaluate(const nn::DenseModel& model, const datagen::LabeledDataset& test);

/// The flat pair-round sequence of one training round: (child, parent)
/// pairs in the order the recursion visits them. Pure in the topology and
/// the coalescing flag.
std::vector<std::pair<topo::NodeId, topo::NodeId>> round_schedule(
    const topo::TreeTopology& topology, bool coalesce_parent_rounds);

/// A prepared distillation run: topology, per-node models and stores, data
/// splits, ledger. Stages are split out so tests can step and inspect.
class Simulation {
public:
  explicit Simulation(ExperimentConfig cfg);

  /// Leaves encode their private samples; records propagate to the root.
  void init_embeddings();

  /// Apply the migrations scheduled for this round (throws on illegal ones)
  /// and re-route stores.
  void apply_migrations(int round);

  /// One full training round (callers run init_embeddings first).
  telemetry::RoundMetrics train_round(int round);

  /// Whole pipeline: init, rounds with migrations, per-round evaluation.
  RunResult run();

  const topo::TreeTopology& topology() const { return topology_; }
  const NodeRuntime& runtime(const topo::NodeId& id) const;
  const autocodec::AutoEncoder& codec() const { return codec_; }
  const datagen::LabeledDataset& test_set() const { return test_; }
  const telemetry::TrafficLedger& ledger() const { return ledger_; }
  const ExperimentConfig& config() const { return cfg_; }

  /// Store-consistency invariant: every node's store holds exactly the
  /// records originating in its leaf set, in canonical order.
  bool stores_consistent() const;

private:
  ExperimentConfig cfg_;
  topo::TreeTopology topology_;
  autocodec::AutoEncoder codec_;
  datagen::LabeledDataset train_;
  datagen::LabeledDataset test_;
  std::map<topo::NodeId, std::unique_ptr<NodeRuntime>> runtime_;
  telemetry::TrafficLedger ledger_;
  bool initialized_ = false;

  struct RoundAccumulator {
    std::map<int, std::vector<nn::LossBreakdown>> tier_losses;
    std::map<std::string, telemetry::SkrNodeCounts> skr_counts;
    telemetry::TrafficLedger ledger_delta;

    void merge(const RoundAccumulator& other);
  };

  void rebuild_stores();
  void run_pair(const topo::NodeId& child, const topo::NodeId& parent, int round,
                RoundAccumulator& acc);
};

/// Full distillation-mode run (fedeec / fedagg).
RunResult run(const ExperimentConfig& cfg);

/// Comparator for the end-to-end acceptance check: each leaf's model
/// trained alone on its own shard, one epoch per round, evaluated on the
/// global test set. Returns per-leaf accuracies.
std::vector<double> train_isolated_leaves(const ExperimentConfig& cfg);

/// Run artifact directory: config.snapshot, metrics.jsonl, final model
/// files in the flat text format.
void write_run_dir(const std::filesystem::path& dir, const std::string& config_text,
                   const RunResult& result, Mode mode, std::uint64_t seed);
telemetry::RunArtifact load_run_dir(const std::filesystem::path& dir);

}  // namespace fedeec::sim
