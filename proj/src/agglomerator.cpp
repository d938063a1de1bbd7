#include "fedeec/agglomerator.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <future>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fedeec::sim {

namespace fs = std::filesystem;
using telemetry::Direction;
using telemetry::EdgeClass;
using telemetry::Payload;

const char* to_string(Mode m) {
  switch (m) {
    case Mode::fedeec: return "fedeec";
    case Mode::fedagg: return "fedagg";
    case Mode::hierfavg: return "hierfavg";
  }
  return "?";
}

Mode mode_from_string(const std::string& name) {
  if (name == "fedeec") return Mode::fedeec;
  if (name == "fedagg") return Mode::fedagg;
  if (name == "hierfavg") return Mode::hierfavg;
  throw Error("config", "unknown mode '" + name + "'");
}

double evaluate(const nn::DenseModel& model, const datagen::LabeledDataset& test) {
  if (test.size() == 0) throw Error("evaluate", "empty test set");
  const Matrix logits = nn::forward(model, test.inputs);
  long correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index argmax;
    logits.row(i).maxCoeff(&argmax);
    if (static_cast<int>(argmax) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::vector<std::pair<topo::NodeId, topo::NodeId>> round_schedule(
    const topo::TreeTopology& topology, bool coalesce_parent_rounds) {
  std::vector<std::pair<topo::NodeId, topo::NodeId>> out;
  std::function<void(const topo::NodeId&)> visit = [&](const topo::NodeId& id) {
    const topo::Node& node = topology.node(id);
    if (topology.is_root(id)) {
      for (const auto& child : node.children) visit(child);
      return;
    }
    if (node.children.empty()) {
      out.emplace_back(id, *node.parent);
      return;
    }
    for (const auto& child : node.children) {
      visit(child);
      if (!coalesce_parent_rounds) out.emplace_back(id, *node.parent);
    }
    if (coalesce_parent_rounds) out.emplace_back(id, *node.parent);
  };
  visit(topology.root());
  return out;
}

namespace {

EdgeClass classify_hop(const topo::TreeTopology& topology, const topo::NodeId& lower) {
  return topology.is_leaf(lower) ? EdgeClass::end_edge : EdgeClass::edge_cloud;
}

struct DataBundle {
  datagen::LabeledDataset train;
  datagen::LabeledDataset test;
  datagen::PartitionPlan plan;
};

DataBundle build_data(const ExperimentConfig& cfg, int leaves) {
  datagen::GaussianMixture space = datagen::GaussianMixture::create(
      cfg.class_count, cfg.input_dim, cfg.class_sep, cfg.data_seed);
  DataBundle out;
  out.train = space.sample(cfg.train_n, derive_seed(cfg.data_seed, "train"));
  out.test = space.sample(cfg.test_n, derive_seed(cfg.data_seed, "test"));
  out.plan = datagen::dirichlet_partition(out.train, leaves, cfg.alpha,
                                          derive_seed(cfg.seed, "partition"));
  return out;
}

autocodec::AutoEncoder build_codec(const ExperimentConfig& cfg) {
  datagen::GaussianMixture space = datagen::GaussianMixture::create(
      cfg.class_count, cfg.input_dim, cfg.class_sep, cfg.data_seed);
  // the "public" corpus: same generator family, reserved seed, disjoint
  // from every client shard
  const Matrix corpus =
      space.sample_inputs(cfg.ae_corpus_n, derive_seed(cfg.data_seed, "public"));
  autocodec::PretrainConfig ae_cfg = cfg.ae;
  ae_cfg.input_dim = cfg.input_dim;
  return autocodec::pretrain(corpus, ae_cfg, derive_seed(cfg.data_seed, "autocodec"));
}

long dims_param_count(const std::vector<int>& dims) {
  long n = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    n += static_cast<long>(dims[l]) * dims[l + 1] + dims[l + 1];
  return n;
}

const std::vector<int>& dims_for_node(const ExperimentConfig& cfg,
                                      const topo::TreeTopology& topology,
                                      const topo::NodeId& id) {
  auto it = cfg.node_model_dims.find(id);
  if (it != cfg.node_model_dims.end()) return it->second;
  auto tier_it = cfg.tier_model_dims.find(topology.node(id).tier);
  if (tier_it == cfg.tier_model_dims.end())
    throw Error("config", "no model dims for tier " + std::to_string(topology.node(id).tier));
  return tier_it->second;
}

void validate_models(const ExperimentConfig& cfg, const topo::TreeTopology& topology) {
  for (const auto& id : topology.node_ids()) {
    const auto& dims = dims_for_node(cfg, topology, id);
    if (dims.front() != cfg.input_dim)
      throw Error("config", "model for '" + id + "' has input dim " +
                                std::to_string(dims.front()) + " != data input_dim " +
                                std::to_string(cfg.input_dim));
    if (dims.back() != cfg.class_count)
      throw Error("config", "model for '" + id + "' has output dim " +
                                std::to_string(dims.back()) + " != class count " +
                                std::to_string(cfg.class_count));
  }
  // sizes must not shrink along any edge toward the root
  for (const auto& id : topology.node_ids()) {
    const auto& parent = topology.node(id).parent;
    if (!parent) continue;
    const long child_params = dims_param_count(dims_for_node(cfg, topology, id));
    const long parent_params = dims_param_count(dims_for_node(cfg, topology, *parent));
    if (parent_params < child_params)
      throw Error("config", "model for '" + *parent + "' (" + std::to_string(parent_params) +
                                " params) is smaller than its child '" + id + "' (" +
                                std::to_string(child_params) +
                                "); sizes must grow from leaves to the root");
  }
}

}  // namespace

void Simulation::RoundAccumulator::merge(const RoundAccumulator& other) {
  for (const auto& [tier, losses] : other.tier_losses) {
    auto& dst = tier_losses[tier];
    dst.insert(dst.end(), losses.begin(), losses.end());
  }
  for (const auto& [node, counts] : other.skr_counts) {
    auto& dst = skr_counts[node];
    dst.correct += counts.correct;
    dst.misattributed_unrectified += counts.misattributed_unrectified;
    dst.misattributed_rectified += counts.misattributed_rectified;
  }
  ledger_delta.merge(other.ledger_delta);
}

Simulation::Simulation(ExperimentConfig cfg)
    : cfg_(std::move(cfg)), topology_(topo::TreeTopology::parse(cfg_.topology_spec)) {
  if (cfg_.mode == Mode::hierfavg)
    throw Error("config", "Simulation drives distillation modes; use the baseline for hierfavg");
  validate_models(cfg_, topology_);
  cfg_.distill.skr_enabled = cfg_.skr_active();

  codec_ = build_codec(cfg_);
  const auto leaves = topology_.leaves();
  DataBundle data = build_data(cfg_, static_cast<int>(leaves.size()));
  train_ = std::move(data.train);
  test_ = std::move(data.test);

  for (const auto& id : topology_.node_ids()) {
    RngStream init = derive_stream(cfg_.seed, id, 0, "model-init");
    nn::DenseModel model = nn::init_dense(dims_for_node(cfg_, topology_, id), init);
    runtime_.emplace(id, std::make_unique<NodeRuntime>(std::move(model), cfg_.class_count,
                                                       cfg_.queue_capacity));
  }

  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const auto& indices = data.plan.client_indices[k];
    NodeRuntime& rt = *runtime_.at(leaves[k]);
    rt.private_inputs = Matrix(indices.size(), cfg_.input_dim);
    rt.private_labels = IntVector(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      rt.private_inputs.row(static_cast<Index>(i)) = train_.inputs.row(indices[i]);
      rt.private_labels[static_cast<Index>(i)] = train_.labels[indices[i]];
    }
  }
}

const NodeRuntime& Simulation::runtime(const topo::NodeId& id) const {
  auto it = runtime_.find(id);
  if (it == runtime_.end()) throw Error("sim", "unknown node '" + id + "'");
  return *it->second;
}

void Simulation::init_embeddings() {
  for (const auto& leaf : topology_.leaves()) {
    NodeRuntime& rt = *runtime_.at(leaf);
    if (rt.private_inputs.rows() == 0) throw Error("init", "leaf '" + leaf + "' has no data");
    rt.store.embeddings = autocodec::encode_batch(codec_, rt.private_inputs);
    rt.store.labels = rt.private_labels;
    rt.store.origins.assign(static_cast<std::size_t>(rt.private_inputs.rows()), leaf);

    // one (|eps|+1)-scalar record per sample per edge on the way to the root
    const auto path = topology_.path_to_root(leaf);
    const std::uint64_t n = static_cast<std::uint64_t>(rt.private_inputs.rows());
    for (std::size_t hop = 0; hop + 1 < path.size(); ++hop) {
      const EdgeClass edge = classify_hop(topology_, path[hop]);
      ledger_.add(edge, Payload::embedding, Direction::up,
                  n * static_cast<std::uint64_t>(codec_.embed_dim));
      ledger_.add(edge, Payload::label, Direction::up, n);
    }
  }
  rebuild_stores();
  initialized_ = true;
}

void Simulation::rebuild_stores() {
  for (const auto& id : topology_.node_ids()) {
    if (topology_.is_leaf(id)) continue;
    NodeRuntime& rt = *runtime_.at(id);
    Index total = 0;
    for (const auto& leaf : topology_.leaf_set(id))
      total += runtime_.at(leaf)->store.size();
    rt.store.embeddings = Matrix(total, codec_.embed_dim);
    rt.store.labels = IntVector(total);
    rt.store.origins.clear();
    rt.store.origins.reserve(static_cast<std::size_t>(total));
    Index row = 0;
    for (const auto& leaf : topology_.leaf_set(id)) {
      const EmbeddingStore& src = runtime_.at(leaf)->store;
      rt.store.embeddings.middleRows(row, src.size()) = src.embeddings;
      rt.store.labels.segment(row, src.size()) = src.labels;
      rt.store.origins.insert(rt.store.origins.end(), src.origins.begin(), src.origins.end());
      row += src.size();
    }
  }
}

bool Simulation::stores_consistent() const {
  for (const auto& id : topology_.node_ids()) {
    const EmbeddingStore& store = runtime_.at(id)->store;
    Index row = 0;
    for (const auto& leaf : topology_.leaf_set(id)) {
      const EmbeddingStore& src = runtime_.at(leaf)->store;
      if (row + src.size() > store.size()) return false;
      if ((store.embeddings.middleRows(row, src.size()).array() != src.embeddings.array())
              .any())
        return false;
      if ((store.labels.segment(row, src.size()).array() != src.labels.array()).any())
        return false;
      for (Index i = 0; i < src.size(); ++i)
        if (store.origins[static_cast<std::size_t>(row + i)] != leaf) return false;
      row += src.size();
    }
    if (row != store.size()) return false;
  }
  return true;
}

void Simulation::apply_migrations(int round) {
  for (const auto& event : cfg_.migrations) {
    if (event.round != round) continue;
    const auto check =
        topo::check_migration(topology_, topo::ProtocolKind::equivalence(), event.node,
                              event.new_parent);
    if (!check.legal)
      throw Error("migration", "round " + std::to_string(round) + ": cannot move '" +
                                   event.node + "' under '" + event.new_parent +
                                   "': " + check.reason);

    const auto old_ancestors = topology_.path_to_root(*topology_.node(event.node).parent);
    topology_.migrate(event.node, event.new_parent);

    // new ancestors that never held this subtree's records receive them now
    const std::set<topo::NodeId> old_set(old_ancestors.begin(), old_ancestors.end());
    std::uint64_t records = 0;
    for (const auto& leaf : topology_.leaf_set(event.node))
      records += static_cast<std::uint64_t>(runtime_.at(leaf)->store.size());
    topo::NodeId lower = event.node;
    for (const auto& ancestor : topology_.path_to_root(event.new_parent)) {
      if (!old_set.count(ancestor)) {
        const EdgeClass edge = classify_hop(topology_, lower);
        ledger_.add(edge, Payload::embedding, Direction::up,
                    records * static_cast<std::uint64_t>(codec_.embed_dim));
        ledger_.add(edge, Payload::label, Direction::up, records);
      }
      lower = ancestor;
    }
    rebuild_stores();
  }
}

void Simulation::run_pair(const topo::NodeId& child, const topo::NodeId& parent, int round,
                          RoundAccumulator& acc) {
  NodeRuntime& child_rt = *runtime_.at(child);
  NodeRuntime& parent_rt = *runtime_.at(parent);
  const EmbeddingStore& store = child_rt.store;  // the pair's shared sample set
  if (store.size() == 0) return;

  bsbodp::PairNodeRef child_ref{&child_rt.model, &child_rt.queues, topology_.is_leaf(child),
                                &child_rt.private_inputs, &child_rt.private_labels};
  bsbodp::PairNodeRef parent_ref{&parent_rt.model, &parent_rt.queues, false, nullptr, nullptr};

  RngStream stream = derive_stream(cfg_.seed, child, static_cast<std::uint64_t>(round), "pair");
  bsbodp::PairRoundResult result = bsbodp::bsbodp_pair_round(
      child_ref, parent_ref, store.embeddings, store.labels, codec_, cfg_.distill, stream);

  const int child_tier = topology_.node(child).tier;
  const int parent_tier = topology_.node(parent).tier;
  auto& child_losses = acc.tier_losses[child_tier];
  child_losses.insert(child_losses.end(), result.child_as_student.losses.begin(),
                      result.child_as_student.losses.end());
  auto& parent_losses = acc.tier_losses[parent_tier];
  parent_losses.insert(parent_losses.end(), result.parent_as_student.losses.begin(),
                       result.parent_as_student.losses.end());

  auto add_counts = [&](const topo::NodeId& teacher, const skr::OutcomeCounts& c) {
    auto& dst = acc.skr_counts[teacher];
    dst.correct += c.correct;
    dst.misattributed_unrectified += c.misattributed_unrectified;
    dst.misattributed_rectified += c.misattributed_rectified;
  };
  add_counts(parent, result.child_as_student.teacher_counts);
  add_counts(child, result.parent_as_student.teacher_counts);

  // one (C+1)-scalar knowledge payload per sample per round for this pair,
  // on the edge class the pair sits on
  const EdgeClass edge = classify_hop(topology_, child);
  const std::uint64_t n = static_cast<std::uint64_t>(store.size());
  acc.ledger_delta.add(edge, Payload::knowledge, Direction::up,
                       n * static_cast<std::uint64_t>(cfg_.class_count));
  acc.ledger_delta.add(edge, Payload::label, Direction::up, n);
}

telemetry::RoundMetrics Simulation::train_round(int round) {
  if (!initialized_) throw Error("train", "init_embeddings must run first");
  const auto schedule = round_schedule(topology_, cfg_.coalesce_parent_rounds);
  RoundAccumulator acc;

  if (!cfg_.parallel_subtrees) {
    for (const auto& [child, parent] : schedule) run_pair(child, parent, round, acc);
  } else {
    // subtrees under distinct root children share only the root; their pair
    // rounds may overlap, root-touching pairs serialize on a mutex. Not
    // bitwise-reproducible; excluded from acceptance runs.
    std::mutex root_mutex;
    const auto& root_children = topology_.node(topology_.root()).children;
    std::vector<std::future<RoundAccumulator>> futures;
    for (const auto& top : root_children) {
      futures.push_back(std::async(std::launch::async, [&, top] {
        RoundAccumulator local;
        for (const auto& [child, parent] : schedule) {
          if (!topology_.in_subtree(top, child)) continue;
          if (parent == topology_.root()) {
            std::lock_guard<std::mutex> lock(root_mutex);
            run_pair(child, parent, round, local);
          } else {
            run_pair(child, parent, round, local);
          }
        }
        return local;
      }));
    }
    for (auto& f : futures) acc.merge(f.get());
  }

  ledger_.merge(acc.ledger_delta);

  telemetry::RoundMetrics metrics;
  metrics.round = round;
  metrics.cloud_accuracy = evaluate(runtime_.at(topology_.root())->model, test_);
  for (const auto& [tier, losses] : acc.tier_losses) {
    nn::LossBreakdown mean;
    for (const auto& l : losses) {
      mean.total += l.total;
      mean.ce_term += l.ce_term;
      mean.kl_term += l.kl_term;
      mean.local_ce_term += l.local_ce_term;
    }
    const double n = static_cast<double>(losses.size());
    if (n > 0) {
      mean.total /= n;
      mean.ce_term /= n;
      mean.kl_term /= n;
      mean.local_ce_term /= n;
    }
    metrics.tier_losses[tier] = mean;
  }
  metrics.skr_counts = acc.skr_counts;

  double occupancy = 0.0;
  for (const auto& id : topology_.node_ids())
    occupancy += runtime_.at(id)->queues.mean_occupancy();
  metrics.mean_queue_occupancy = occupancy / static_cast<double>(topology_.size());

  metrics.end_edge_scalars = ledger_.edge_total(EdgeClass::end_edge);
  metrics.edge_cloud_scalars = ledger_.edge_total(EdgeClass::edge_cloud);
  metrics.parent_map = topology_.parent_map_string();
  return metrics;
}

RunResult Simulation::run() {
  init_embeddings();

  RunResult result;
  telemetry::RoundMetrics first;
  first.round = 0;
  first.cloud_accuracy = evaluate(runtime_.at(topology_.root())->model, test_);
  first.end_edge_scalars = ledger_.edge_total(EdgeClass::end_edge);
  first.edge_cloud_scalars = ledger_.edge_total(EdgeClass::edge_cloud);
  first.parent_map = topology_.parent_map_string();
  result.rounds.push_back(std::move(first));

  for (int round = 1; round <= cfg_.rounds; ++round) {
    apply_migrations(round);
    if (!stores_consistent()) throw Error("train", "embedding stores inconsistent");
    result.rounds.push_back(train_round(round));
  }

  for (const auto& id : topology_.node_ids()) result.final_models[id] = runtime_.at(id)->model;
  result.codec = codec_;
  result.ledger = ledger_;
  return result;
}

RunResult run(const ExperimentConfig& cfg) {
  if (cfg.mode == Mode::hierfavg)
    throw Error("config", "hierfavg runs go through the baseline module");
  Simulation sim(cfg);
  return sim.run();
}

std::vector<double> train_isolated_leaves(const ExperimentConfig& cfg) {
  topo::TreeTopology topology = topo::TreeTopology::parse(cfg.topology_spec);
  const auto leaves = topology.leaves();
  DataBundle data = build_data(cfg, static_cast<int>(leaves.size()));

  std::vector<double> accuracies;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const auto& indices = data.plan.client_indices[k];
    Matrix xs(indices.size(), cfg.input_dim);
    IntVector ys(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      xs.row(static_cast<Index>(i)) = data.train.inputs.row(indices[i]);
      ys[static_cast<Index>(i)] = data.train.labels[indices[i]];
    }

    RngStream init = derive_stream(cfg.seed, leaves[k], 0, "model-init");
    nn::DenseModel model = nn::init_dense(dims_for_node(cfg, topology, leaves[k]), init);
    const int n = static_cast<int>(indices.size());
    std::vector<int> order(n);
    for (int round = 1; round <= cfg.rounds; ++round) {
      std::iota(order.begin(), order.end(), 0);
      RngStream stream =
          derive_stream(cfg.seed, leaves[k], static_cast<std::uint64_t>(round), "isolated");
      stream.shuffle(order);
      for (int start = 0; start < n; start += cfg.distill.batch_size) {
        const int bs = std::min(cfg.distill.batch_size, n - start);
        Matrix bx(bs, cfg.input_dim);
        IntVector by(bs);
        for (int i = 0; i < bs; ++i) {
          bx.row(i) = xs.row(order[start + i]);
          by[i] = ys[order[start + i]];
        }
        nn::ForwardTrace trace = nn::forward_trace(model, bx);
        Matrix probs = nn::softmax_rows(trace.logits(), 1.0);
        for (int i = 0; i < bs; ++i) probs(i, by[i]) -= 1.0;
        probs /= static_cast<double>(bs);
        nn::sgd_step(model, nn::backward(model, trace, probs).grads, cfg.distill.learning_rate);
      }
    }
    accuracies.push_back(evaluate(model, data.test));
  }
  return accuracies;
}

void write_run_dir(const fs::path& dir, const std::string& config_text, const RunResult& result,
                   Mode mode, std::uint64_t seed) {
  fs::create_directories(dir / "models");
  {
    std::ofstream out(dir / "config.snapshot", std::ios::binary);
    if (!out) throw Error("artifacts", "cannot write config.snapshot");
    out << config_text;
  }
  {
    std::ofstream out(dir / "metrics.jsonl", std::ios::binary);
    for (const auto& round : result.rounds)
      out << telemetry::round_metrics_to_json(round) << '\n';
  }
  {
    nlohmann::ordered_json j;
    j["mode"] = to_string(mode);
    j["seed"] = seed;
    j["rounds"] = result.rounds.empty() ? 0 : result.rounds.back().round;
    std::ofstream out(dir / "run.json", std::ios::binary);
    out << j.dump(2) << '\n';
  }
  for (const auto& [id, model] : result.final_models)
    nn::save_dense_file((dir / "models" / (id + ".txt")).string(), model);
  if (result.codec.embed_dim > 0)
    autocodec::save_autoencoder_file((dir / "autoencoder.txt").string(), result.codec);
}

namespace {

std::string extract_data_section(const std::string& config_text) {
  std::istringstream in(config_text);
  std::string line, section, out;
  while (std::getline(in, line)) {
    std::string trimmed = line;
    trimmed.erase(0, trimmed.find_first_not_of(" \t"));
    if (!trimmed.empty() && trimmed.front() == '[') {
      const auto end = trimmed.find(']');
      section = (end == std::string::npos) ? "" : trimmed.substr(1, end - 1);
      continue;
    }
    if (section == "data" && !trimmed.empty() && trimmed.front() != '#') out += trimmed + "\n";
  }
  return out;
}

}  // namespace

telemetry::RunArtifact load_run_dir(const fs::path& dir) {
  telemetry::RunArtifact artifact;

  std::ifstream cfg(dir / "config.snapshot", std::ios::binary);
  if (!cfg) throw Error("artifacts", "missing config.snapshot in " + dir.string());
  std::ostringstream cfg_text;
  cfg_text << cfg.rdbuf();
  artifact.config_snapshot = cfg_text.str();
  artifact.data_section = extract_data_section(artifact.config_snapshot);

  std::ifstream runfile(dir / "run.json");
  if (!runfile) throw Error("artifacts", "missing run.json in " + dir.string());
  nlohmann::json j = nlohmann::json::parse(runfile);
  artifact.mode = j.at("mode").get<std::string>();
  artifact.seed = j.at("seed").get<std::uint64_t>();

  std::ifstream metrics(dir / "metrics.jsonl");
  if (!metrics) throw Error("artifacts", "missing metrics.jsonl in " + dir.string());
  std::string line;
  while (std::getline(metrics, line)) {
    if (line.empty()) continue;
    artifact.rounds.push_back(telemetry::round_metrics_from_json(line));
  }
  return artifact;
}

}  // namespace fedeec::sim
