#include "fedeec/config.hpp"

#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

namespace fedeec::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct Entry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;

  std::string locator() const { return "[" + section + "] " + key; }
};

std::vector<Entry> tokenize(const std::string& text) {
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string raw, section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      const auto end = line.find(']');
      if (end == std::string::npos)
        throw Error("config-parse", "line " + std::to_string(line_no) + ": unterminated '['");
      section = trim(line.substr(1, end - 1));
      if (section.empty())
        throw Error("config-parse", "line " + std::to_string(line_no) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config-parse",
                  "line " + std::to_string(line_no) + ": expected 'key = value'");
    Entry e;
    e.section = section;
    e.key = trim(line.substr(0, eq));
    e.value = trim(line.substr(eq + 1));
    e.line = line_no;
    if (e.section.empty())
      throw Error("config-parse", "line " + std::to_string(line_no) + ": key before any section");
    if (e.key.empty())
      throw Error("config-parse", "line " + std::to_string(line_no) + ": empty key");
    entries.push_back(std::move(e));
  }
  return entries;
}

long long parse_int(const Entry& e) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(e.value, &used);
    if (used != e.value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error("config-parse", e.locator() + ": '" + e.value + "' is not an integer");
  }
}

double parse_real(const Entry& e) {
  try {
    std::size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (used != e.value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error("config-parse", e.locator() + ": '" + e.value + "' is not a number");
  }
}

bool parse_bool(const Entry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no") return false;
  throw Error("config-parse", e.locator() + ": '" + e.value + "' is not a boolean");
}

std::vector<int> parse_dims(const Entry& e) {
  std::istringstream in(e.value);
  std::vector<int> dims;
  int d;
  while (in >> d) dims.push_back(d);
  if (!in.eof() || dims.size() < 2)
    throw Error("config-parse", e.locator() + ": expected a list of layer dims");
  return dims;
}

}  // namespace

sim::ExperimentConfig parse(const std::string& text) {
  sim::ExperimentConfig cfg;
  cfg.tier_model_dims.clear();
  std::vector<std::pair<topo::NodeId, topo::NodeId>> explicit_edges;
  bool topology_given = false;

  for (const Entry& e : tokenize(text)) {
    if (e.section == "topology") {
      if (e.key == "tree") {
        cfg.topology_spec = e.value;
        topology_given = true;
      } else if (e.key == "edge") {
        std::istringstream in(e.value);
        std::string parent, child, extra;
        if (!(in >> parent >> child) || (in >> extra))
          throw Error("config-parse", e.locator() + ": expected 'edge = parent child'");
        explicit_edges.emplace_back(parent, child);
      } else {
        throw Error("config-parse", e.locator() + ": unknown key");
      }
    } else if (e.section == "models") {
      if (e.key.rfind("tier", 0) == 0) {
        int tier = 0;
        try {
          tier = std::stoi(e.key.substr(4));
        } catch (const std::exception&) {
          throw Error("config-parse", e.locator() + ": expected tier<N>");
        }
        cfg.tier_model_dims[tier] = parse_dims(e);
      } else if (e.key.rfind("node.", 0) == 0) {
        const std::string id = e.key.substr(5);
        if (id.empty()) throw Error("config-parse", e.locator() + ": expected node.<id>");
        cfg.node_model_dims[id] = parse_dims(e);
      } else if (e.key == "embed_dim") {
        cfg.ae.embed_dim = static_cast<int>(parse_int(e));
      } else if (e.key == "ae_hidden") {
        cfg.ae.hidden_dim = static_cast<int>(parse_int(e));
      } else if (e.key == "ae_epochs") {
        cfg.ae.epochs = static_cast<int>(parse_int(e));
      } else if (e.key == "ae_lr") {
        cfg.ae.lr = parse_real(e);
      } else if (e.key == "ae_batch_size") {
        cfg.ae.batch_size = static_cast<int>(parse_int(e));
      } else if (e.key == "ae_mse_max") {
        cfg.ae.mse_max = parse_real(e);
      } else if (e.key == "ae_corpus_n") {
        cfg.ae_corpus_n = static_cast<int>(parse_int(e));
      } else {
        throw Error("config-parse", e.locator() + ": unknown key");
      }
    } else if (e.section == "data") {
      if (e.key == "train_n") cfg.train_n = static_cast<int>(parse_int(e));
      else if (e.key == "test_n") cfg.test_n = static_cast<int>(parse_int(e));
      else if (e.key == "classes") cfg.class_count = static_cast<int>(parse_int(e));
      else if (e.key == "input_dim") cfg.input_dim = static_cast<int>(parse_int(e));
      else if (e.key == "class_sep") cfg.class_sep = parse_real(e);
      else if (e.key == "alpha") cfg.alpha = parse_real(e);
      else if (e.key == "seed") cfg.data_seed = static_cast<std::uint64_t>(parse_int(e));
      else throw Error("config-parse", e.locator() + ": unknown key");
    } else if (e.section == "train") {
      if (e.key == "rounds") cfg.rounds = static_cast<int>(parse_int(e));
      else if (e.key == "lr") cfg.distill.learning_rate = parse_real(e);
      else if (e.key == "batch_size") cfg.distill.batch_size = static_cast<int>(parse_int(e));
      else if (e.key == "beta") cfg.distill.beta = parse_real(e);
      else if (e.key == "gamma") cfg.distill.gamma = parse_real(e);
      else if (e.key == "temperature") cfg.distill.temperature = parse_real(e);
      else if (e.key == "local_epochs") cfg.distill.local_epochs = static_cast<int>(parse_int(e));
      else if (e.key == "student_temperature") cfg.distill.student_temperature = parse_bool(e);
      else if (e.key == "coalesce_parent_rounds") cfg.coalesce_parent_rounds = parse_bool(e);
      else if (e.key == "parallel_subtrees") cfg.parallel_subtrees = parse_bool(e);
      else if (e.key == "kappa1") cfg.kappa1 = static_cast<int>(parse_int(e));
      else if (e.key == "kappa2") cfg.kappa2 = static_cast<int>(parse_int(e));
      else throw Error("config-parse", e.locator() + ": unknown key");
    } else if (e.section == "skr") {
      if (e.key == "enabled") cfg.distill.skr_enabled = parse_bool(e);
      else if (e.key == "queue_capacity") cfg.queue_capacity = static_cast<int>(parse_int(e));
      else throw Error("config-parse", e.locator() + ": unknown key");
    } else if (e.section == "migrations") {
      if (e.key == "migrate") {
        std::istringstream in(e.value);
        sim::MigrationEvent event;
        std::string extra;
        if (!(in >> event.round >> event.node >> event.new_parent) || (in >> extra))
          throw Error("config-parse",
                      e.locator() + ": expected 'migrate = <round> <node> <new_parent>'");
        cfg.migrations.push_back(std::move(event));
      } else {
        throw Error("config-parse", e.locator() + ": unknown key");
      }
    } else if (e.section == "mode") {
      if (e.key == "mode") cfg.mode = sim::mode_from_string(e.value);
      else if (e.key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(e));
      else throw Error("config-parse", e.locator() + ": unknown key");
    } else {
      throw Error("config-parse", "unknown section [" + e.section + "]");
    }
  }

  if (!explicit_edges.empty()) {
    if (topology_given)
      throw Error("config-parse", "[topology]: give either 'tree' or 'edge' entries, not both");
    // normalize to the string form so everything downstream shares one path
    const topo::TreeTopology t = topo::TreeTopology::from_edges(explicit_edges);
    std::function<std::string(const topo::NodeId&)> render = [&](const topo::NodeId& id) {
      const auto& children = t.node(id).children;
      if (children.empty()) return id;
      std::string out = id + "(";
      for (std::size_t i = 0; i < children.size(); ++i)
        out += (i ? "," : "") + render(children[i]);
      return out + ")";
    };
    cfg.topology_spec = render(t.root());
  }
  return cfg;
}

sim::ExperimentConfig parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("config-parse", "cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::vector<Diagnostic> validate(const sim::ExperimentConfig& cfg) {
  std::vector<Diagnostic> out;
  auto fail = [&out](const std::string& locator, const std::string& message) {
    out.push_back({locator, message});
  };

  std::optional<topo::TreeTopology> topology;
  try {
    topology = topo::TreeTopology::parse(cfg.topology_spec);
  } catch (const Error& e) {
    fail("[topology] tree", e.what());
  }

  if (cfg.train_n < cfg.class_count) fail("[data] train_n", "need at least one sample per class");
  if (cfg.test_n < cfg.class_count) fail("[data] test_n", "need at least one sample per class");
  if (cfg.class_count < 2) fail("[data] classes", "need at least 2 classes");
  if (cfg.input_dim < 1) fail("[data] input_dim", "need at least 1 input dim");
  if (cfg.alpha <= 0.0) fail("[data] alpha", "Dirichlet concentration must be positive");

  if (cfg.rounds < 0) fail("[train] rounds", "must be >= 0");
  if (cfg.distill.learning_rate <= 0.0) fail("[train] lr", "must be positive");
  if (cfg.distill.batch_size < 1) fail("[train] batch_size", "must be >= 1");
  if (cfg.distill.beta < 0.0) fail("[train] beta", "must be >= 0");
  if (cfg.distill.gamma < 0.0) fail("[train] gamma", "must be >= 0");
  if (cfg.distill.temperature <= 0.0) fail("[train] temperature", "must be positive");
  if (cfg.distill.local_epochs < 1) fail("[train] local_epochs", "must be >= 1");
  if (cfg.kappa1 < 0) fail("[train] kappa1", "must be >= 0");
  if (cfg.kappa2 < 1) fail("[train] kappa2", "must be >= 1");
  if (cfg.queue_capacity < 1) fail("[skr] queue_capacity", "must be >= 1");

  if (cfg.ae.embed_dim < 1) fail("[models] embed_dim", "must be >= 1");
  if (cfg.ae.epochs < 0) fail("[models] ae_epochs", "must be >= 0");
  if (cfg.ae.lr <= 0.0) fail("[models] ae_lr", "must be positive");
  if (cfg.ae.mse_max <= 0.0) fail("[models] ae_mse_max", "must be positive");
  if (cfg.ae_corpus_n < 8) fail("[models] ae_corpus_n", "corpus too small to hold out from");

  if (!topology) return out;

  if (topology->leaves().size() > static_cast<std::size_t>(cfg.train_n))
    fail("[data] train_n", "fewer samples than leaves; some client would be empty");

  long long previous = -1;
  for (int tier = topology->tiers(); tier >= 1; --tier) {
    auto it = cfg.tier_model_dims.find(tier);
    if (it == cfg.tier_model_dims.end()) {
      fail("[models] tier" + std::to_string(tier), "missing layer dims for this tier");
      continue;
    }
    const auto& dims = it->second;
    for (int d : dims)
      if (d <= 0) fail("[models] tier" + std::to_string(tier), "non-positive layer dim");
    if (dims.front() != cfg.input_dim)
      fail("[models] tier" + std::to_string(tier),
           "first dim " + std::to_string(dims.front()) + " != [data] input_dim " +
               std::to_string(cfg.input_dim));
    if (dims.back() != cfg.class_count)
      fail("[models] tier" + std::to_string(tier),
           "last dim " + std::to_string(dims.back()) + " != [data] classes " +
               std::to_string(cfg.class_count));

    long long params = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
      params += static_cast<long long>(dims[l]) * dims[l + 1] + dims[l + 1];
    if (previous >= 0 && params < previous)
      fail("[models] tier" + std::to_string(tier),
           "param count " + std::to_string(params) + " is below tier " +
               std::to_string(tier + 1) + " (" + std::to_string(previous) +
               "); sizes must be non-decreasing from leaves to the root");
    previous = params;
  }
  for (const auto& [tier, dims] : cfg.tier_model_dims)
    if (tier < 1 || tier > topology->tiers())
      fail("[models] tier" + std::to_string(tier),
           "topology has tiers 1.." + std::to_string(topology->tiers()));

  auto params_of_dims = [](const std::vector<int>& dims) {
    long long n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
      n += static_cast<long long>(dims[l]) * dims[l + 1] + dims[l + 1];
    return n;
  };
  for (const auto& [id, dims] : cfg.node_model_dims) {
    const std::string locator = "[models] node." + id;
    if (!topology->contains(id)) {
      fail(locator, "unknown node '" + id + "'");
      continue;
    }
    if (dims.front() != cfg.input_dim)
      fail(locator, "first dim " + std::to_string(dims.front()) + " != [data] input_dim " +
                        std::to_string(cfg.input_dim));
    if (dims.back() != cfg.class_count)
      fail(locator, "last dim " + std::to_string(dims.back()) + " != [data] classes " +
                        std::to_string(cfg.class_count));
    for (int d : dims)
      if (d <= 0) fail(locator, "non-positive layer dim");
  }
  if (!cfg.node_model_dims.empty() && cfg.mode == sim::Mode::hierfavg)
    fail("[models] node.*",
         "parameter averaging needs a uniform model structure; per-node overrides cannot be "
         "aggregated");
  // per-edge monotonicity with overrides applied
  auto dims_of = [&](const topo::NodeId& id) -> const std::vector<int>* {
    auto it = cfg.node_model_dims.find(id);
    if (it != cfg.node_model_dims.end()) return &it->second;
    auto tier_it = cfg.tier_model_dims.find(topology->node(id).tier);
    return tier_it == cfg.tier_model_dims.end() ? nullptr : &tier_it->second;
  };
  for (const auto& id : topology->node_ids()) {
    const auto& parent = topology->node(id).parent;
    if (!parent) continue;
    // tier-uniform violations are already reported above
    if (!cfg.node_model_dims.count(id) && !cfg.node_model_dims.count(*parent)) continue;
    const auto* child_dims = dims_of(id);
    const auto* parent_dims = dims_of(*parent);
    if (!child_dims || !parent_dims) continue;  // missing tiers already reported
    if (params_of_dims(*parent_dims) < params_of_dims(*child_dims))
      fail("[models] node." + id,
           "override leaves '" + *parent + "' (" + std::to_string(params_of_dims(*parent_dims)) +
               " params) smaller than its child '" + id + "' (" +
               std::to_string(params_of_dims(*child_dims)) +
               "); sizes must grow from leaves to the root");
  }

  // lightweight-codec target: below 10% of the root model's parameters
  if (cfg.tier_model_dims.count(1)) {
    const auto& dims = cfg.tier_model_dims.at(1);
    long long root_params = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
      root_params += static_cast<long long>(dims[l]) * dims[l + 1] + dims[l + 1];
    const long long enc = static_cast<long long>(cfg.input_dim) * cfg.ae.hidden_dim +
                          cfg.ae.hidden_dim +
                          static_cast<long long>(cfg.ae.hidden_dim) * cfg.ae.embed_dim +
                          cfg.ae.embed_dim;
    const long long dec = static_cast<long long>(cfg.ae.embed_dim) * cfg.ae.hidden_dim +
                          cfg.ae.hidden_dim +
                          static_cast<long long>(cfg.ae.hidden_dim) * cfg.input_dim +
                          cfg.input_dim;
    if ((enc + dec) * 10 >= root_params)
      fail("[models] embed_dim", "autoencoder (" + std::to_string(enc + dec) +
                                     " params) is not lightweight next to the tier-1 model (" +
                                     std::to_string(root_params) + ")");
  }

  for (std::size_t i = 0; i < cfg.migrations.size(); ++i) {
    const auto& event = cfg.migrations[i];
    const std::string locator = "[migrations] migrate#" + std::to_string(i + 1);
    if (event.round < 1 || event.round > cfg.rounds)
      fail(locator, "round " + std::to_string(event.round) + " outside 1.." +
                        std::to_string(cfg.rounds));
    if (!topology->contains(event.node)) fail(locator, "unknown node '" + event.node + "'");
    if (!topology->contains(event.new_parent))
      fail(locator, "unknown node '" + event.new_parent + "'");
  }
  return out;
}

std::string default_config_text() {
  return R"(# Default desk-scale experiment: two edges, four devices each.

[topology]
tree = r(e1(d1,d2,d3,d4),e2(d5,d6,d7,d8))

[models]
# per-tier classifier layer dims, input -> hidden... -> classes
tier1 = 16 80 32 4
tier2 = 16 48 16 4
tier3 = 16 72 4
# shared autoencoder
embed_dim = 4
ae_hidden = 8
ae_epochs = 200
ae_lr = 0.02
ae_batch_size = 32
ae_mse_max = 0.05
ae_corpus_n = 2000

[data]
train_n = 4000
test_n = 1000
classes = 4
input_dim = 16
class_sep = 1.5
alpha = 2.0
seed = 42

[train]
rounds = 30
lr = 0.001
batch_size = 8
beta = 1.5
gamma = 1.0
temperature = 0.5
local_epochs = 1
student_temperature = false
coalesce_parent_rounds = false
parallel_subtrees = false
kappa1 = 1
kappa2 = 1

[skr]
enabled = true
queue_capacity = 20

[migrations]
# migrate = <round> <node> <new_parent>

[mode]
mode = fedeec
seed = 1
)";
}

}  // namespace fedeec::config
