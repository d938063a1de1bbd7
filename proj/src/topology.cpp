#include "fedeec/topology.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace fedeec::topo {

namespace {

[[noreturn]] void parse_fail(const std::string& msg, std::size_t pos) {
  throw Error("topology-parse", msg + " at position " + std::to_string(pos));
}

bool id_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

}  // namespace

TreeTopology TreeTopology::parse(const std::string& spec) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::optional<NodeId> single;

  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < spec.size() && std::isspace(static_cast<unsigned char>(spec[pos]))) ++pos;
  };
  auto read_id = [&]() -> NodeId {
    skip_ws();
    const std::size_t start = pos;
    while (pos < spec.size() && id_char(spec[pos])) ++pos;
    if (pos == start) parse_fail("expected node id", pos);
    return spec.substr(start, pos - start);
  };

  std::function<NodeId()> read_node = [&]() -> NodeId {
    const NodeId id = read_id();
    skip_ws();
    if (pos < spec.size() && spec[pos] == '(') {
      ++pos;
      for (;;) {
        const NodeId child = read_node();
        edges.emplace_back(id, child);
        skip_ws();
        if (pos >= spec.size()) parse_fail("unterminated '('", pos);
        if (spec[pos] == ',') {
          ++pos;
          continue;
        }
        if (spec[pos] == ')') {
          ++pos;
          break;
        }
        parse_fail(std::string("unexpected character '") + spec[pos] + "'", pos);
      }
    }
    return id;
  };

  skip_ws();
  if (pos >= spec.size()) parse_fail("empty topology", pos);
  const NodeId root = read_node();
  skip_ws();
  if (pos != spec.size()) parse_fail("trailing input after tree", pos);
  if (edges.empty()) single = root;
  return from_edges(edges, single);
}

TreeTopology TreeTopology::from_edges(const std::vector<std::pair<NodeId, NodeId>>& edges,
                                      const std::optional<NodeId>& single) {
  TreeTopology t;
  if (edges.empty()) {
    if (!single) throw Error("topology-build", "no edges and no single node given");
    t.nodes_[*single] = Node{*single, 0, std::nullopt, {}};
    t.root_ = *single;
    t.finalize();
    return t;
  }

  for (const auto& [parent, child] : edges) {
    if (parent == child) throw Error("topology-build", "self edge at '" + parent + "'");
    t.nodes_.try_emplace(parent, Node{parent, 0, std::nullopt, {}});
    auto [it, inserted] = t.nodes_.try_emplace(child, Node{child, 0, std::nullopt, {}});
    if (it->second.parent)
      throw Error("topology-build", "duplicate id or second parent for '" + child + "'");
    it->second.parent = parent;
    t.nodes_[parent].children.push_back(child);
  }

  std::vector<NodeId> roots;
  for (const auto& [id, node] : t.nodes_)
    if (!node.parent) roots.push_back(id);
  if (roots.empty()) throw Error("topology-build", "no root (cycle)");
  if (roots.size() > 1) {
    std::string list;
    for (const auto& r : roots) list += (list.empty() ? "" : ", ") + r;
    throw Error("topology-build", "multiple roots: " + list);
  }
  t.root_ = roots.front();
  t.finalize();
  return t;
}

void TreeTopology::finalize() {
  for (auto& [id, node] : nodes_) std::sort(node.children.begin(), node.children.end());
  const auto duplicate = [&] {
    for (const auto& [id, node] : nodes_)
      for (std::size_t i = 1; i < node.children.size(); ++i)
        if (node.children[i] == node.children[i - 1]) return true;
    return false;
  };
  if (duplicate()) throw Error("topology-build", "duplicate child id under one parent");

  // assign tiers from the root, detect disconnected nodes
  for (auto& [id, node] : nodes_) node.tier = 0;
  std::vector<NodeId> stack{root_};
  nodes_[root_].tier = 1;
  std::size_t visited = 0;
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    ++visited;
    const Node& n = nodes_.at(id);
    for (const NodeId& c : n.children) {
      Node& child = nodes_.at(c);
      if (child.tier != 0) throw Error("topology-build", "cycle through '" + c + "'");
      child.tier = n.tier + 1;
      stack.push_back(c);
    }
  }
  if (visited != nodes_.size())
    throw Error("topology-build", "nodes unreachable from the root");

  tiers_ = 0;
  for (const auto& [id, node] : nodes_) tiers_ = std::max(tiers_, node.tier);
  for (const auto& [id, node] : nodes_)
    if (node.children.empty() && node.tier != tiers_)
      throw Error("topology-build", "uneven leaf depth: leaf '" + id + "' at tier " +
                                        std::to_string(node.tier) + ", expected " +
                                        std::to_string(tiers_));

  // leaf sets bottom-up
  leaf_sets_.clear();
  std::function<void(const NodeId&)> fill = [&](const NodeId& id) {
    const Node& n = nodes_.at(id);
    std::vector<NodeId> acc;
    if (n.children.empty()) {
      acc.push_back(id);
    } else {
      for (const NodeId& c : n.children) {
        fill(c);
        const auto& sub = leaf_sets_.at(c);
        acc.insert(acc.end(), sub.begin(), sub.end());
      }
      std::sort(acc.begin(), acc.end());
    }
    leaf_sets_[id] = std::move(acc);
  };
  fill(root_);
}

const Node& TreeTopology::node(const NodeId& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error("topology", "unknown node '" + id + "'");
  return it->second;
}

std::vector<NodeId> TreeTopology::node_ids() const {
  std::vector<NodeId> ids;
  ids.reserve(nodes_.size());
  for (const auto& [id, node] : nodes_) ids.push_back(id);
  return ids;
}

const std::vector<NodeId>& TreeTopology::leaf_set(const NodeId& v) const {
  node(v);  // existence check
  return leaf_sets_.at(v);
}

std::vector<NodeId> TreeTopology::tier_nodes(int tier) const {
  std::vector<NodeId> out;
  for (const auto& [id, node] : nodes_)
    if (node.tier == tier) out.push_back(id);
  return out;
}

bool TreeTopology::in_subtree(const NodeId& ancestor, const NodeId& descendant) const {
  node(ancestor);
  NodeId cur = descendant;
  for (;;) {
    if (cur == ancestor) return true;
    const auto& p = node(cur).parent;
    if (!p) return false;
    cur = *p;
  }
}

std::vector<NodeId> TreeTopology::path_to_root(const NodeId& v) const {
  std::vector<NodeId> path{v};
  while (nodes_.at(path.back()).parent) path.push_back(*nodes_.at(path.back()).parent);
  return path;
}

void TreeTopology::migrate(const NodeId& v1, const NodeId& new_parent) {
  node(v1);
  node(new_parent);
  Node& moving = nodes_.at(v1);
  if (!moving.parent) throw Error("topology-migrate", "cannot migrate the root");
  Node& old_parent = nodes_.at(*moving.parent);
  old_parent.children.erase(
      std::find(old_parent.children.begin(), old_parent.children.end(), v1));
  moving.parent = new_parent;
  nodes_.at(new_parent).children.push_back(v1);
  finalize();  // revalidates invariants and recomputes tiers/leaf sets
}

std::string TreeTopology::parent_map_string() const {
  std::string out;
  for (const auto& [id, node] : nodes_) {
    if (!node.parent) continue;
    if (!out.empty()) out += ',';
    out += id + ":" + *node.parent;
  }
  return out;
}

std::string TreeTopology::describe() const {
  std::ostringstream os;
  for (const auto& [id, node] : nodes_) {
    os << id << "  tier=" << node.tier << "  parent=" << (node.parent ? *node.parent : "-")
       << "  leaf_set={";
    const auto& ls = leaf_sets_.at(id);
    for (std::size_t i = 0; i < ls.size(); ++i) os << (i ? "," : "") << ls[i];
    os << "}\n";
  }
  return os.str();
}

MigrationCheck check_migration(const TreeTopology& topo, const ProtocolKind& protocol,
                               const NodeId& v1, const NodeId& new_parent) {
  const Node& moving = topo.node(v1);
  const Node& target = topo.node(new_parent);

  if (topo.is_root(v1)) return MigrationCheck::no("v1 is the root");
  if (topo.is_leaf(new_parent)) return MigrationCheck::no("new parent is a leaf");
  if (topo.in_subtree(v1, new_parent))
    return MigrationCheck::no("new parent lies inside v1's subtree");
  const NodeId old_parent = *moving.parent;
  if (target.tier != topo.node(old_parent).tier)
    return MigrationCheck::no("cross-tier reattachment (tier " +
                              std::to_string(target.tier) + " != tier " +
                              std::to_string(topo.node(old_parent).tier) + ")");
  if (new_parent != old_parent && topo.node(old_parent).children.size() == 1)
    return MigrationCheck::no("old parent '" + old_parent +
                              "' would be left childless (uniform leaf depth)");

  if (protocol.kind == ProtocolKind::Kind::equivalence) return MigrationCheck::ok();

  auto descriptor = [&](const NodeId& id) {
    auto it = protocol.model_descriptor.find(id);
    if (it == protocol.model_descriptor.end())
      throw Error("topology", "no model descriptor for node '" + id + "'");
    return it->second;
  };
  const long long a = descriptor(v1);
  const long long b = descriptor(new_parent);
  if (a <= b) return MigrationCheck::ok();
  return MigrationCheck::no("partial order violated: Model(" + v1 + ")=" + std::to_string(a) +
                            " is not <= Model(" + new_parent + ")=" + std::to_string(b));
}

}  // namespace fedeec::topo
