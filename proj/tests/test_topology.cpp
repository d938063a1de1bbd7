#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "fedeec/topology.hpp"
#include "support/generators.hpp"

using namespace fedeec;
using topo::TreeTopology;

TEST_CASE("parse: three-tier example") {
  auto t = TreeTopology::parse("r(e1(d1,d2),e2(d3,d4))");
  CHECK(t.tiers() == 3);
  CHECK(t.root() == "r");
  CHECK(t.tier_nodes(1) == std::vector<topo::NodeId>{"r"});
  CHECK(t.tier_nodes(2) == std::vector<topo::NodeId>{"e1", "e2"});
  CHECK(t.tier_nodes(3).size() == 4);
  CHECK(t.leaf_set("e1") == std::vector<topo::NodeId>{"d1", "d2"});
  CHECK(t.leaf_set("r") == std::vector<topo::NodeId>{"d1", "d2", "d3", "d4"});
  CHECK(t.leaf_set("d1") == std::vector<topo::NodeId>{"d1"});
}

TEST_CASE("parse: single node is both root and leaf") {
  auto t = TreeTopology::parse("r");
  CHECK(t.tiers() == 1);
  CHECK(t.is_leaf("r"));
  CHECK(t.is_root("r"));
  CHECK(t.leaves() == std::vector<topo::NodeId>{"r"});
}

TEST_CASE("parse: errors carry positions") {
  CHECK_THROWS_WITH_AS(TreeTopology::parse("r(a,,b)"), doctest::Contains("position 4"), Error);
  CHECK_THROWS_WITH_AS(TreeTopology::parse("r(a,b"), doctest::Contains("position"), Error);
  CHECK_THROWS_WITH_AS(TreeTopology::parse(""), doctest::Contains("empty"), Error);
  CHECK_THROWS_WITH_AS(TreeTopology::parse("r(a)b"), doctest::Contains("trailing"), Error);
}

TEST_CASE("build: duplicate ids rejected") {
  CHECK_THROWS_WITH_AS(TreeTopology::parse("r(a,a)"), doctest::Contains("duplicate"), Error);
  CHECK_THROWS_AS(TreeTopology::parse("r(a(x),b(x))"), Error);
}

TEST_CASE("build: uneven leaf depth rejected") {
  CHECK_THROWS_WITH_AS(TreeTopology::parse("r(e1(d1,d2),d3)"),
                       doctest::Contains("uneven leaf depth"), Error);
}

TEST_CASE("build: multiple roots rejected in edge form") {
  CHECK_THROWS_WITH_AS(TreeTopology::from_edges({{"a", "b"}, {"c", "d"}}),
                       doctest::Contains("multiple roots"), Error);
}

TEST_CASE("build: cycles rejected") {
  CHECK_THROWS_AS(TreeTopology::from_edges({{"a", "b"}, {"b", "c"}, {"c", "a"}}), Error);
}

TEST_CASE("node queries: unknown node throws") {
  auto t = TreeTopology::parse("r(a,b)");
  CHECK_THROWS_AS(t.leaf_set("zzz"), Error);
  CHECK_THROWS_AS(t.node("zzz"), Error);
}

TEST_CASE("check_migration: partial order flags the counterexample tree") {
  auto t = TreeTopology::parse("10(9(8,7),5(4,3))");
  std::map<topo::NodeId, long long> descriptors;
  for (const auto& id : t.node_ids()) descriptors[id] = std::stoll(id);
  auto partial = topo::ProtocolKind::partial_order(descriptors);

  auto verdict = topo::check_migration(t, partial, "7", "5");
  CHECK_FALSE(verdict.legal);
  CHECK(verdict.reason.find("partial order") != std::string::npos);

  // the mirror move is fine: 3 <= 9
  CHECK(topo::check_migration(t, partial, "3", "9").legal);
}

TEST_CASE("check_migration: equivalence accepts the same move") {
  auto t = TreeTopology::parse("10(9(8,7),5(4,3))");
  CHECK(topo::check_migration(t, topo::ProtocolKind::equivalence(), "7", "5").legal);
}

TEST_CASE("check_migration: structural rejections") {
  auto t = TreeTopology::parse("r(e1(d1,d2),e2(d3,d4))");
  auto eq = topo::ProtocolKind::equivalence();
  CHECK_FALSE(topo::check_migration(t, eq, "r", "e1").legal);     // root cannot move
  CHECK_FALSE(topo::check_migration(t, eq, "e1", "d3").legal);    // leaf target
  CHECK_FALSE(topo::check_migration(t, eq, "e1", "e1").legal);    // inside own subtree
  CHECK_FALSE(topo::check_migration(t, eq, "d1", "r").legal);     // cross tier
  CHECK(topo::check_migration(t, eq, "d1", "e2").legal);
  CHECK(topo::check_migration(t, eq, "d1", "e1").legal);          // no-op reattachment
  CHECK_THROWS_AS(topo::check_migration(t, eq, "nope", "e1"), Error);
}

TEST_CASE("check_migration: a node cannot move under its own descendant") {
  auto t = TreeTopology::parse("r(a(b(x,y),c(u,v)),a2(b2(x2,y2),c2(u2,v2)))");
  auto eq = topo::ProtocolKind::equivalence();
  const auto verdict = topo::check_migration(t, eq, "a", "b");  // b is internal, inside a
  CHECK_FALSE(verdict.legal);
  CHECK(verdict.reason.find("subtree") != std::string::npos);
  CHECK(topo::check_migration(t, eq, "b", "a2").legal);  // same-tier internal move is fine
}

TEST_CASE("migrate: leaf sets recompute and the move is an involution") {
  auto t = TreeTopology::parse("r(e1(d1,d2),e2(d3,d4))");
  const auto original_e1 = t.leaf_set("e1");
  const auto original_e2 = t.leaf_set("e2");
  const auto root_before = t.leaf_set("r");

  t.migrate("d2", "e2");
  CHECK(t.leaf_set("e1") == std::vector<topo::NodeId>{"d1"});
  CHECK(t.leaf_set("e2") == std::vector<topo::NodeId>{"d2", "d3", "d4"});
  CHECK(t.leaf_set("r") == root_before);  // the root sees all leaves either way

  t.migrate("d2", "e1");
  CHECK(t.leaf_set("e1") == original_e1);
  CHECK(t.leaf_set("e2") == original_e2);
}

TEST_CASE("equivalence protocol is universal over random structurally valid moves") {
  RngStream s(211);
  const auto eq = topo::ProtocolKind::equivalence();
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto t = testsupport::random_tree(s);
    const auto ids = t.node_ids();
    const auto& v1 = ids[s.below(ids.size())];
    const auto& v2 = ids[s.below(ids.size())];
    if (t.is_root(v1) || t.is_root(v2)) continue;
    const auto target = *t.node(v2).parent;

    const auto& old_parent = *t.node(v1).parent;
    const bool structural_ok = !t.is_leaf(target) && !t.in_subtree(v1, target) &&
                               t.node(target).tier == t.node(old_parent).tier &&
                               (target == old_parent || t.node(old_parent).children.size() > 1);
    const auto verdict = topo::check_migration(t, eq, v1, target);
    CHECK(verdict.legal == structural_ok);
    ++checked;
  }
  CHECK(checked > 300);  // the generator produces plenty of usable pairs
}

TEST_CASE("tree invariants hold after sequences of legal migrations") {
  RngStream s(223);
  for (int trial = 0; trial < 50; ++trial) {
    auto t = testsupport::random_tree(s);
    const int before_tiers = t.tiers();
    const std::size_t node_count = t.size();
    for (int move = 0; move < 20; ++move) {
      const auto ids = t.node_ids();
      const auto& v1 = ids[s.below(ids.size())];
      const auto& target = ids[s.below(ids.size())];
      if (t.is_root(v1)) continue;
      if (!topo::check_migration(t, topo::ProtocolKind::equivalence(), v1, target).legal)
        continue;
      t.migrate(v1, target);

      CHECK(t.size() == node_count);
      CHECK(t.tiers() == before_tiers);
      for (const auto& id : t.node_ids()) {
        const auto& node = t.node(id);
        if (node.parent) CHECK(t.node(*node.parent).tier == node.tier - 1);
        if (node.children.empty()) CHECK(node.tier == t.tiers());
      }
      std::set<topo::NodeId> all_leaves(t.leaves().begin(), t.leaves().end());
      CHECK(all_leaves.size() == t.leaves().size());
    }
  }
}

TEST_CASE("describe and parent map are stable strings") {
  auto t = TreeTopology::parse("r(a,b)");
  CHECK(t.parent_map_string() == "a:r,b:r");
  CHECK(t.describe().find("a  tier=2  parent=r") != std::string::npos);
}
