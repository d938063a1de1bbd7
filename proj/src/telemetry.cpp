#include "fedeec/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fedeec::telemetry {

using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(EdgeClass c) {
  return c == EdgeClass::end_edge ? "end_edge" : "edge_cloud";
}

const char* to_string(Payload p) {
  switch (p) {
    case Payload::embedding: return "embedding";
    case Payload::label: return "label";
    case Payload::knowledge: return "knowledge";
    case Payload::parameters: return "parameters";
  }
  return "?";
}

void TrafficLedger::add(EdgeClass edge, Payload payload, Direction dir, std::uint64_t scalars) {
  counts_[static_cast<int>(edge)][static_cast<int>(payload)][static_cast<int>(dir)] += scalars;
}

std::uint64_t TrafficLedger::count(EdgeClass edge, Payload payload) const {
  const auto& d = counts_[static_cast<int>(edge)][static_cast<int>(payload)];
  return d[0] + d[1];
}

std::uint64_t TrafficLedger::count(EdgeClass edge, Payload payload, Direction dir) const {
  return counts_[static_cast<int>(edge)][static_cast<int>(payload)][static_cast<int>(dir)];
}

std::uint64_t TrafficLedger::edge_total(EdgeClass edge) const {
  std::uint64_t t = 0;
  for (int p = 0; p < 4; ++p) t += count(edge, static_cast<Payload>(p));
  return t;
}

std::uint64_t TrafficLedger::total() const {
  return edge_total(EdgeClass::end_edge) + edge_total(EdgeClass::edge_cloud);
}

void TrafficLedger::merge(const TrafficLedger& other) {
  for (int e = 0; e < 2; ++e)
    for (int p = 0; p < 4; ++p)
      for (int d = 0; d < 2; ++d) counts_[e][p][d] += other.counts_[e][p][d];
}

std::string round_metrics_to_json(const RoundMetrics& m) {
  ordered_json j;
  j["round"] = m.round;
  j["cloud_accuracy"] = m.cloud_accuracy;
  ordered_json tiers = ordered_json::object();
  for (const auto& [tier, loss] : m.tier_losses) {
    ordered_json t;
    t["total"] = loss.total;
    t["ce"] = loss.ce_term;
    t["kl"] = loss.kl_term;
    t["local_ce"] = loss.local_ce_term;
    tiers[std::to_string(tier)] = t;
  }
  j["tier_losses"] = tiers;
  ordered_json skr = ordered_json::object();
  for (const auto& [node, c] : m.skr_counts) {
    ordered_json s;
    s["correct"] = c.correct;
    s["mis_unrectified"] = c.misattributed_unrectified;
    s["mis_rectified"] = c.misattributed_rectified;
    skr[node] = s;
  }
  j["skr"] = skr;
  j["mean_queue_occupancy"] = m.mean_queue_occupancy;
  ordered_json traffic;
  traffic["end_edge"] = m.end_edge_scalars;
  traffic["edge_cloud"] = m.edge_cloud_scalars;
  j["traffic"] = traffic;
  j["topology"] = m.parent_map;
  return j.dump();
}

RoundMetrics round_metrics_from_json(const std::string& line) {
  json j = json::parse(line);
  RoundMetrics m;
  m.round = j.at("round").get<int>();
  m.cloud_accuracy = j.at("cloud_accuracy").get<double>();
  for (const auto& [tier, t] : j.at("tier_losses").items()) {
    nn::LossBreakdown loss;
    loss.total = t.at("total").get<double>();
    loss.ce_term = t.at("ce").get<double>();
    loss.kl_term = t.at("kl").get<double>();
    loss.local_ce_term = t.at("local_ce").get<double>();
    m.tier_losses[std::stoi(tier)] = loss;
  }
  for (const auto& [node, s] : j.at("skr").items()) {
    SkrNodeCounts c;
    c.correct = s.at("correct").get<std::uint64_t>();
    c.misattributed_unrectified = s.at("mis_unrectified").get<std::uint64_t>();
    c.misattributed_rectified = s.at("mis_rectified").get<std::uint64_t>();
    m.skr_counts[node] = c;
  }
  m.mean_queue_occupancy = j.at("mean_queue_occupancy").get<double>();
  m.end_edge_scalars = j.at("traffic").at("end_edge").get<std::uint64_t>();
  m.edge_cloud_scalars = j.at("traffic").at("edge_cloud").get<std::uint64_t>();
  m.parent_map = j.at("topology").get<std::string>();
  return m;
}

std::uint64_t predict_fedeec_traffic(const std::vector<std::uint64_t>& client_sizes,
                                     std::uint64_t embedding_len, std::uint64_t logits_len,
                                     std::uint64_t rounds) {
  const std::uint64_t total =
      std::accumulate(client_sizes.begin(), client_sizes.end(), std::uint64_t{0});
  return total * (embedding_len + 1 + rounds * (logits_len + 1));
}

std::uint64_t predict_hierfavg_traffic(const std::vector<std::uint64_t>& model_sizes,
                                       std::uint64_t rounds) {
  const std::uint64_t total =
      std::accumulate(model_sizes.begin(), model_sizes.end(), std::uint64_t{0});
  return rounds * total;
}

double best_accuracy(const RunArtifact& run) {
  double best = 0.0;
  for (const auto& r : run.rounds) best = std::max(best, r.cloud_accuracy);
  return best;
}

std::vector<SummaryRow> summarize(const std::vector<RunArtifact>& runs) {
  if (runs.empty()) throw Error("telemetry-summarize", "no runs given");
  const std::string& reference = runs.front().data_section;
  for (const auto& run : runs) {
    if (run.data_section != reference)
      throw Error("telemetry-summarize",
                  "runs do not share a test set: [data] sections differ\n--- first:\n" +
                      reference + "--- offending (" + run.mode + " seed " +
                      std::to_string(run.seed) + "):\n" + run.data_section);
  }

  std::map<std::string, std::vector<const RunArtifact*>> by_mode;
  for (const auto& run : runs) by_mode[run.mode].push_back(&run);

  std::vector<SummaryRow> rows;
  for (const auto& [mode, group] : by_mode) {
    SummaryRow row;
    row.method = mode;
    double sum = 0.0;
    double end_edge = 0.0, edge_cloud = 0.0;
    for (const RunArtifact* run : group) {
      row.seeds.push_back(run->seed);
      const double best = best_accuracy(*run);
      sum += best;
      row.max_best_accuracy = std::max(row.max_best_accuracy, best);
      if (!run->rounds.empty()) {
        end_edge += static_cast<double>(run->rounds.back().end_edge_scalars);
        edge_cloud += static_cast<double>(run->rounds.back().edge_cloud_scalars);
      }
    }
    row.mean_best_accuracy = sum / static_cast<double>(group.size());
    row.end_edge_scalars = static_cast<std::uint64_t>(std::llround(end_edge / group.size()));
    row.edge_cloud_scalars = static_cast<std::uint64_t>(std::llround(edge_cloud / group.size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string summary_to_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "method,seeds,mean_best_accuracy,max_best_accuracy,end_edge_scalars,edge_cloud_scalars\n";
  for (const auto& row : rows) {
    os << row.method << ',';
    for (std::size_t i = 0; i < row.seeds.size(); ++i) os << (i ? ";" : "") << row.seeds[i];
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", row.mean_best_accuracy);
    os << ',' << buf;
    std::snprintf(buf, sizeof(buf), "%.6f", row.max_best_accuracy);
    os << ',' << buf << ',' << row.end_edge_scalars << ',' << row.edge_cloud_scalars << '\n';
  }
  return os.str();
}

}  // namespace fedeec::telemetry
