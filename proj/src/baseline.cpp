#include "fedeec/baseline.hpp"

#include <numeric>

namespace fedeec::baseline {

using telemetry::Direction;
using telemetry::EdgeClass;
using telemetry::Payload;

void aggregate(nn::DenseModel& parent, const std::vector<const nn::DenseModel*>& children,
               const std::vector<double>& weights) {
  if (children.empty()) throw Error("baseline", "aggregate needs at least one child");
  if (children.size() != weights.size())
    throw Error("baseline", "one weight per child required");
  double total = 0.0;
  for (double w : weights) {
    if (w <= 0.0) throw Error("baseline", "aggregation weights must be positive");
    total += w;
  }
  for (const nn::DenseModel* child : children)
    if (child->layer_dims != parent.layer_dims)
      throw Error("baseline",
                  "heterogeneous model structures cannot be parameter-averaged");

  for (std::size_t l = 0; l < parent.weights.size(); ++l) {
    Matrix w_acc = Matrix::Zero(parent.weights[l].rows(), parent.weights[l].cols());
    Vector b_acc = Vector::Zero(parent.biases[l].size());
    for (std::size_t c = 0; c < children.size(); ++c) {
      w_acc += weights[c] * children[c]->weights[l];
      b_acc += weights[c] * children[c]->biases[l];
    }
    parent.weights[l] = w_acc / total;
    parent.biases[l] = b_acc / total;
  }
}

HierFavgSimulation::HierFavgSimulation(sim::ExperimentConfig cfg)
    : cfg_(std::move(cfg)), topology_(topo::TreeTopology::parse(cfg_.topology_spec)) {
  // the leaf-tier structure is deployed uniformly; one shared init
  auto dims_it = cfg_.tier_model_dims.find(topology_.tiers());
  if (dims_it == cfg_.tier_model_dims.end())
    throw Error("config", "no model dims for the leaf tier");
  RngStream init = derive_stream(cfg_.seed, "uniform-model", 0, "model-init");
  nn::DenseModel shared = nn::init_dense(dims_it->second, init);
  for (const auto& id : topology_.node_ids()) models_.emplace(id, shared);

  datagen::GaussianMixture space = datagen::GaussianMixture::create(
      cfg_.class_count, cfg_.input_dim, cfg_.class_sep, cfg_.data_seed);
  train_ = space.sample(cfg_.train_n, derive_seed(cfg_.data_seed, "train"));
  test_ = space.sample(cfg_.test_n, derive_seed(cfg_.data_seed, "test"));
  const auto leaves = topology_.leaves();
  datagen::PartitionPlan plan = datagen::dirichlet_partition(
      train_, static_cast<int>(leaves.size()), cfg_.alpha, derive_seed(cfg_.seed, "partition"));

  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const auto& indices = plan.client_indices[k];
    Matrix xs(indices.size(), cfg_.input_dim);
    IntVector ys(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      xs.row(static_cast<Index>(i)) = train_.inputs.row(indices[i]);
      ys[static_cast<Index>(i)] = train_.labels[indices[i]];
    }
    leaf_inputs_[leaves[k]] = std::move(xs);
    leaf_labels_[leaves[k]] = std::move(ys);
  }
}

double HierFavgSimulation::subtree_weight(const topo::NodeId& id) const {
  double total = 0.0;
  for (const auto& leaf : topology_.leaf_set(id))
    total += static_cast<double>(leaf_inputs_.at(leaf).rows());
  return total;
}

void HierFavgSimulation::count_parameter_hop(const topo::NodeId& child, Direction dir) {
  const EdgeClass edge =
      topology_.is_leaf(child) ? EdgeClass::end_edge : EdgeClass::edge_cloud;
  ledger_.add(edge, Payload::parameters, dir,
              static_cast<std::uint64_t>(models_.at(child).param_count()));
}

void HierFavgSimulation::aggregate_children(const topo::NodeId& parent) {
  const auto& children = topology_.node(parent).children;
  std::vector<const nn::DenseModel*> models;
  std::vector<double> weights;
  for (const auto& c : children) {
    models.push_back(&models_.at(c));
    weights.push_back(subtree_weight(c));
  }
  aggregate(models_.at(parent), models, weights);
}

telemetry::RoundMetrics HierFavgSimulation::cloud_round(int round) {
  const auto leaves = topology_.leaves();
  double leaf_loss_sum = 0.0;
  int leaf_loss_steps = 0;

  for (int sub = 1; sub <= cfg_.kappa2; ++sub) {
    for (const auto& leaf : leaves) {
      // download the parent's current model, train, upload
      models_.at(leaf) = models_.at(*topology_.node(leaf).parent);
      count_parameter_hop(leaf, Direction::down);
      const std::uint64_t index =
          static_cast<std::uint64_t>(round - 1) * cfg_.kappa2 + static_cast<std::uint64_t>(sub);
      RngStream stream = derive_stream(cfg_.seed, leaf, index, "hier-local");
      for (int e = 0; e < cfg_.kappa1; ++e) {
        leaf_loss_sum += nn::train_epoch_ce(models_.at(leaf), leaf_inputs_.at(leaf),
                                            leaf_labels_.at(leaf), cfg_.distill.batch_size,
                                            cfg_.distill.learning_rate, stream);
        ++leaf_loss_steps;
      }
      count_parameter_hop(leaf, Direction::up);
    }
    const int leaf_parent_tier = topology_.tiers() - 1;
    if (leaf_parent_tier >= 1)
      for (const auto& id : topology_.tier_nodes(leaf_parent_tier)) aggregate_children(id);
  }

  // bottom-up to the root, then back down to every internal node
  for (int tier = topology_.tiers() - 2; tier >= 1; --tier) {
    for (const auto& id : topology_.tier_nodes(tier)) {
      for (const auto& child : topology_.node(id).children)
        count_parameter_hop(child, Direction::up);
      aggregate_children(id);
    }
  }
  for (int tier = 1; tier <= topology_.tiers() - 2; ++tier) {
    for (const auto& id : topology_.tier_nodes(tier)) {
      for (const auto& child : topology_.node(id).children) {
        models_.at(child) = models_.at(id);
        count_parameter_hop(child, Direction::down);
      }
    }
  }

  telemetry::RoundMetrics metrics;
  metrics.round = round;
  metrics.cloud_accuracy = sim::evaluate(models_.at(topology_.root()), test_);
  if (leaf_loss_steps > 0) {
    nn::LossBreakdown leaf_loss;
    leaf_loss.local_ce_term = leaf_loss_sum / leaf_loss_steps;
    leaf_loss.total = leaf_loss.local_ce_term;
    metrics.tier_losses[topology_.tiers()] = leaf_loss;
  }
  metrics.end_edge_scalars = ledger_.edge_total(EdgeClass::end_edge);
  metrics.edge_cloud_scalars = ledger_.edge_total(EdgeClass::edge_cloud);
  metrics.parent_map = topology_.parent_map_string();
  return metrics;
}

sim::RunResult HierFavgSimulation::run() {
  sim::RunResult result;
  telemetry::RoundMetrics first;
  first.round = 0;
  first.cloud_accuracy = sim::evaluate(models_.at(topology_.root()), test_);
  first.parent_map = topology_.parent_map_string();
  result.rounds.push_back(std::move(first));

  for (int round = 1; round <= cfg_.rounds; ++round) {
    for (const auto& event : cfg_.migrations) {
      if (event.round != round) continue;
      const auto check = topo::check_migration(topology_, topo::ProtocolKind::equivalence(),
                                               event.node, event.new_parent);
      if (!check.legal)
        throw Error("migration", "cannot move '" + event.node + "': " + check.reason);
      topology_.migrate(event.node, event.new_parent);
    }
    result.rounds.push_back(cloud_round(round));
  }
  for (const auto& [id, model] : models_) result.final_models[id] = model;
  result.ledger = ledger_;
  return result;
}

sim::RunResult run_hierfavg(const sim::ExperimentConfig& cfg) {
  HierFavgSimulation simulation(cfg);
  return simulation.run();
}

}  // namespace fedeec::baseline
