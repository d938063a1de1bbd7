#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedeec/config.hpp"

using namespace fedeec;

namespace {

bool has_diagnostic(const std::vector<config::Diagnostic>& ds, const std::string& locator_part,
                    const std::string& message_part = "") {
  for (const auto& d : ds)
    if (d.locator.find(locator_part) != std::string::npos &&
        d.message.find(message_part) != std::string::npos)
      return true;
  return false;
}

}  // namespace

TEST_CASE("default config parses clean and validates clean") {
  auto cfg = config::parse(config::default_config_text());
  CHECK(config::validate(cfg).empty());
  CHECK(cfg.mode == sim::Mode::fedeec);
  CHECK(cfg.rounds == 30);
  CHECK(cfg.distill.beta == doctest::Approx(1.5));
  CHECK(cfg.distill.gamma == doctest::Approx(1.0));
  CHECK(cfg.distill.temperature == doctest::Approx(0.5));
  CHECK(cfg.distill.batch_size == 8);
  CHECK(cfg.distill.learning_rate == doctest::Approx(0.001));
  CHECK(cfg.queue_capacity == 20);
  CHECK(cfg.alpha == doctest::Approx(2.0));
}

TEST_CASE("parse: unknown keys and malformed lines carry locators") {
  CHECK_THROWS_WITH_AS(config::parse("[data]\nbogus = 1\n"), doctest::Contains("[data] bogus"),
                       Error);
  CHECK_THROWS_WITH_AS(config::parse("[nope]\nx = 1\n"), doctest::Contains("[nope]"), Error);
  CHECK_THROWS_WITH_AS(config::parse("x = 1\n"), doctest::Contains("before any section"), Error);
  CHECK_THROWS_WITH_AS(config::parse("[data]\ntrain_n == 12\n"), doctest::Contains("integer"),
                       Error);
  CHECK_THROWS_WITH_AS(config::parse("[data]\ntrain_n\n"), doctest::Contains("key = value"),
                       Error);
}

TEST_CASE("validate: tier monotonicity diagnostic when the end model outgrows the edge") {
  auto cfg = config::parse(config::default_config_text());
  cfg.tier_model_dims[2] = {16, 6, 4};  // now smaller than tier 3
  const auto ds = config::validate(cfg);
  CHECK(has_diagnostic(ds, "[models] tier2", "non-decreasing"));
}

TEST_CASE("validate: malformed topology reports the parse position") {
  auto cfg = config::parse(config::default_config_text());
  cfg.topology_spec = "r(a,,b)";
  const auto ds = config::validate(cfg);
  CHECK(has_diagnostic(ds, "[topology] tree", "position 4"));
}

TEST_CASE("validate: hyperparameter range checks") {
  auto cfg = config::parse(config::default_config_text());
  cfg.distill.temperature = 0.0;
  cfg.distill.learning_rate = -1.0;
  cfg.queue_capacity = 0;
  cfg.alpha = 0.0;
  const auto ds = config::validate(cfg);
  CHECK(has_diagnostic(ds, "[train] temperature"));
  CHECK(has_diagnostic(ds, "[train] lr"));
  CHECK(has_diagnostic(ds, "[skr] queue_capacity"));
  CHECK(has_diagnostic(ds, "[data] alpha"));
}

TEST_CASE("validate: migration targets and rounds") {
  auto cfg = config::parse(config::default_config_text());
  cfg.migrations.push_back({500, "d2", "e2"});
  cfg.migrations.push_back({3, "ghost", "e2"});
  const auto ds = config::validate(cfg);
  CHECK(has_diagnostic(ds, "migrate#1", "outside"));
  CHECK(has_diagnostic(ds, "migrate#2", "unknown node"));
}

TEST_CASE("validate: missing tier dims reported per tier") {
  auto cfg = config::parse(config::default_config_text());
  cfg.tier_model_dims.erase(2);
  CHECK(has_diagnostic(config::validate(cfg), "[models] tier2", "missing"));
}

TEST_CASE("validate: oversized autoencoder is flagged against the root model") {
  auto cfg = config::parse(config::default_config_text());
  cfg.ae.hidden_dim = 200;
  CHECK(has_diagnostic(config::validate(cfg), "[models] embed_dim", "lightweight"));
}

TEST_CASE("per-node model overrides: parsing and validation") {
  auto cfg = config::parse(config::default_config_text());
  cfg.node_model_dims["d1"] = {16, 40, 4};  // a second end-device architecture
  CHECK(config::validate(cfg).empty());

  SUBCASE("unknown node rejected") {
    cfg.node_model_dims["ghost"] = {16, 8, 4};
    CHECK(has_diagnostic(config::validate(cfg), "node.ghost", "unknown node"));
  }
  SUBCASE("override breaking edge monotonicity rejected") {
    cfg.node_model_dims["d1"] = {16, 200, 4};  // larger than its edge server
    CHECK(has_diagnostic(config::validate(cfg), "node.d1", "grow"));
  }
  SUBCASE("parameter averaging cannot host heterogeneous devices") {
    cfg.mode = sim::Mode::hierfavg;
    CHECK(has_diagnostic(config::validate(cfg), "node.*", "uniform"));
  }
  SUBCASE("config text form") {
    auto parsed = config::parse("[models]\nnode.d7 = 16 12 4\n");
    REQUIRE(parsed.node_model_dims.count("d7") == 1);
    CHECK(parsed.node_model_dims.at("d7") == std::vector<int>{16, 12, 4});
  }
}

TEST_CASE("parse: migration entries") {
  auto cfg = config::parse("[migrations]\nmigrate = 10 d2 e2\nmigrate = 12 d3 e1\n");
  REQUIRE(cfg.migrations.size() == 2);
  CHECK(cfg.migrations[0].round == 10);
  CHECK(cfg.migrations[0].node == "d2");
  CHECK(cfg.migrations[0].new_parent == "e2");
  CHECK_THROWS_AS(config::parse("[migrations]\nmigrate = 10 d2\n"), Error);
}

TEST_CASE("parse: topology accepted in edge form") {
  auto cfg = config::parse(
      "[topology]\nedge = r e1\nedge = r e2\nedge = e1 d1\nedge = e1 d2\nedge = e2 d3\nedge = "
      "e2 d4\n");
  auto t = topo::TreeTopology::parse(cfg.topology_spec);
  CHECK(t.tiers() == 3);
  CHECK(t.leaf_set("e2") == std::vector<topo::NodeId>{"d3", "d4"});

  CHECK_THROWS_WITH_AS(config::parse("[topology]\ntree = r(a,b)\nedge = r c\n"),
                       doctest::Contains("not both"), Error);
}

TEST_CASE("parse: comments, blanks, and whitespace are tolerated") {
  auto cfg = config::parse("# leading comment\n\n[train]\n  rounds = 4   # trailing\n");
  CHECK(cfg.rounds == 4);
}

TEST_CASE("mode strings round trip") {
  CHECK(sim::mode_from_string("fedeec") == sim::Mode::fedeec);
  CHECK(sim::mode_from_string("fedagg") == sim::Mode::fedagg);
  CHECK(sim::mode_from_string("hierfavg") == sim::Mode::hierfavg);
  CHECK_THROWS_AS(sim::mode_from_string("nope"), Error);
  CHECK(std::string(sim::to_string(sim::Mode::fedagg)) == "fedagg");
}
