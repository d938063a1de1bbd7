#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedeec/types.hpp"

namespace fedeec::topo {

using NodeId = std::string;

struct Node {
  NodeId id;
  int tier = 0;                    // root = 1, leaves = T
  std::optional<NodeId> parent;    // absent for the root
  std::vector<NodeId> children;    // kept sorted for a canonical order
};

/// Rooted tree of computing nodes with uniform leaf depth. Tiers count from
/// the root (tier 1) down to the leaves (tier T).
class TreeTopology {
public:
  /// Parse a nested-parentheses description, e.g. "r(e1(d1,d2),e2(d3,d4))".
  /// Parse errors carry the character position.
  static TreeTopology parse(const std::string& spec);

  /// Build from explicit (parent, child) edges; single node iff edges empty
  /// and `single` given.
  static TreeTopology from_edges(const std::vector<std::pair<NodeId, NodeId>>& edges,
                                 const std::optional<NodeId>& single = std::nullopt);

  const Node& node(const NodeId& id) const;
  bool contains(const NodeId& id) const { return nodes_.count(id) > 0; }
  const NodeId& root() const { return root_; }
  int tiers() const { return tiers_; }
  std::size_t size() const { return nodes_.size(); }

  bool is_leaf(const NodeId& id) const { return node(id).children.empty(); }
  bool is_root(const NodeId& id) const { return id == root_; }

  /// All node ids, sorted (the canonical iteration order).
  std::vector<NodeId> node_ids() const;
  /// Leaves of the subtree rooted at v, sorted.
  const std::vector<NodeId>& leaf_set(const NodeId& v) const;
  /// All leaves (== leaf_set(root)).
  const std::vector<NodeId>& leaves() const { return leaf_set(root_); }
  /// Nodes of tier t, sorted.
  std::vector<NodeId> tier_nodes(int tier) const;
  /// True if `descendant` lies in the subtree rooted at `ancestor`.
  bool in_subtree(const NodeId& ancestor, const NodeId& descendant) const;
  /// Path from v up to the root, starting at v.
  std::vector<NodeId> path_to_root(const NodeId& v) const;

  /// Re-parent v1 under new_parent. Caller must have cleared the move with
  /// check_migration; structural invariants are revalidated afterwards.
  void migrate(const NodeId& v1, const NodeId& new_parent);

  /// Compact "child:parent" listing, sorted; used in run metrics.
  std::string parent_map_string() const;
  /// Human-readable per-node dump (tier, parent, leaf set).
  std::string describe() const;

private:
  std::map<NodeId, Node> nodes_;
  NodeId root_;
  int tiers_ = 0;
  std::map<NodeId, std::vector<NodeId>> leaf_sets_;

  void finalize();  // assign tiers, validate invariants, precompute leaf sets
};

/// Interaction-protocol classification used by the migration checker. For
/// the partial-order kind, models are compared through an integer
/// descriptor per node (parameter count in live runs).
struct ProtocolKind {
  enum class Kind { equivalence, partial_order };
  Kind kind = Kind::equivalence;
  std::map<NodeId, long long> model_descriptor;  // required for partial_order

  static ProtocolKind equivalence() { return {Kind::equivalence, {}}; }
  static ProtocolKind partial_order(std::map<NodeId, long long> descriptors) {
    return {Kind::partial_order, std::move(descriptors)};
  }
};

struct MigrationCheck {
  bool legal = false;
  std::string reason;  // empty when legal

  static MigrationCheck ok() { return {true, ""}; }
  static MigrationCheck no(std::string why) { return {false, std::move(why)}; }
};

/// Decide whether re-parenting v1 under new_parent preserves the tree's
/// structure and the protocol's interaction constraint. Equivalence
/// protocols accept every structurally valid move; partial-order protocols
/// additionally require descriptor(v1) <= descriptor(new_parent).
MigrationCheck check_migration(const TreeTopology& topo, const ProtocolKind& protocol,
                               const NodeId& v1, const NodeId& new_parent);

}  // namespace fedeec::topo
