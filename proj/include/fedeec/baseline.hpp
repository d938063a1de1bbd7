#pragma once

#include "fedeec/agglomerator.hpp"

namespace fedeec::baseline {

/// Data-count weighted parameter average: each child contributes with the
/// total sample count of its leaf set. All models (and the parent) must
/// share one layout; heterogeneous shapes are exactly the bottleneck this
/// protocol cannot cross.
void aggregate(nn::DenseModel& parent, const std::vector<const nn::DenseModel*>& children,
               const std::vector<double>& weights);

/// Hierarchical parameter-averaging run with the leaf-tier model deployed
/// uniformly on every node. Per cloud round: kappa2 sub-rounds of
/// {distribute down, kappa1 local epochs, upload, aggregate at the leaf
/// parents}, then a bottom-up aggregation to the root and a distribution
/// back down. Traffic counts full parameter vectors per upload/download.
class HierFavgSimulation {
public:
  explicit HierFavgSimulation(sim::ExperimentConfig cfg);

  telemetry::RoundMetrics cloud_round(int round);
  sim::RunResult run();

  const topo::TreeTopology& topology() const { return topology_; }
  const nn::DenseModel& model(const topo::NodeId& id) const { return models_.at(id); }
  const datagen::LabeledDataset& test_set() const { return test_; }
  const telemetry::TrafficLedger& ledger() const { return ledger_; }

  /// Leaf data-count weight used in every aggregation above this node.
  double subtree_weight(const topo::NodeId& id) const;

private:
  sim::ExperimentConfig cfg_;
  topo::TreeTopology topology_;
  datagen::LabeledDataset train_;
  datagen::LabeledDataset test_;
  std::map<topo::NodeId, nn::DenseModel> models_;
  std::map<topo::NodeId, Matrix> leaf_inputs_;
  std::map<topo::NodeId, IntVector> leaf_labels_;
  telemetry::TrafficLedger ledger_;

  void local_epochs(const topo::NodeId& leaf, int round, int sub_round);
  void aggregate_children(const topo::NodeId& parent);
  void count_parameter_hop(const topo::NodeId& child, telemetry::Direction dir);
};

sim::RunResult run_hierfavg(const sim::ExperimentConfig& cfg);

}  // namespace fedeec::baseline
