#pragma once

// Independent flat federated-averaging oracle: one server, K clients, no
// hierarchy. Shares the data pipeline and RNG stream derivations with the
// simulator (so local training is identical) but re-implements the
// aggregation loop from scratch.

#include <vector>

#include "fedeec/agglomerator.hpp"

namespace testsupport {

inline fedeec::nn::DenseModel flat_fedavg(const fedeec::sim::ExperimentConfig& cfg,
                                          int cloud_rounds) {
  using namespace fedeec;

  const topo::TreeTopology topology = topo::TreeTopology::parse(cfg.topology_spec);
  const auto leaves = topology.leaves();

  datagen::GaussianMixture space = datagen::GaussianMixture::create(
      cfg.class_count, cfg.input_dim, cfg.class_sep, cfg.data_seed);
  datagen::LabeledDataset train = space.sample(cfg.train_n, derive_seed(cfg.data_seed, "train"));
  datagen::PartitionPlan plan = datagen::dirichlet_partition(
      train, static_cast<int>(leaves.size()), cfg.alpha, derive_seed(cfg.seed, "partition"));

  std::vector<Matrix> xs;
  std::vector<IntVector> ys;
  for (const auto& client : plan.client_indices) {
    Matrix x(client.size(), cfg.input_dim);
    IntVector y(client.size());
    for (std::size_t i = 0; i < client.size(); ++i) {
      x.row(static_cast<Index>(i)) = train.inputs.row(client[i]);
      y[static_cast<Index>(i)] = train.labels[client[i]];
    }
    xs.push_back(std::move(x));
    ys.push_back(std::move(y));
  }

  RngStream init = derive_stream(cfg.seed, "uniform-model", 0, "model-init");
  nn::DenseModel global = nn::init_dense(cfg.tier_model_dims.at(topology.tiers()), init);

  for (int round = 1; round <= cloud_rounds; ++round) {
    std::vector<nn::DenseModel> locals;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      nn::DenseModel local = global;  // distribute
      RngStream stream =
          derive_stream(cfg.seed, leaves[k], static_cast<std::uint64_t>(round), "hier-local");
      for (int e = 0; e < cfg.kappa1; ++e)
        nn::train_epoch_ce(local, xs[k], ys[k], cfg.distill.batch_size,
                           cfg.distill.learning_rate, stream);
      locals.push_back(std::move(local));
    }
    // weighted average, weights = client sample counts
    double total = 0.0;
    for (std::size_t k = 0; k < leaves.size(); ++k) total += static_cast<double>(ys[k].size());
    for (std::size_t l = 0; l < global.weights.size(); ++l) {
      Matrix w_acc = Matrix::Zero(global.weights[l].rows(), global.weights[l].cols());
      Vector b_acc = Vector::Zero(global.biases[l].size());
      for (std::size_t k = 0; k < leaves.size(); ++k) {
        const double w = static_cast<double>(ys[k].size());
        w_acc += w * locals[k].weights[l];
        b_acc += w * locals[k].biases[l];
      }
      global.weights[l] = w_acc / total;
      global.biases[l] = b_acc / total;
    }
  }
  return global;
}

inline double max_param_diff(const fedeec::nn::DenseModel& a, const fedeec::nn::DenseModel& b) {
  double worst = 0.0;
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    worst = std::max(worst, (a.weights[l] - b.weights[l]).cwiseAbs().maxCoeff());
    worst = std::max(worst, (a.biases[l] - b.biases[l]).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace testsupport
