#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fedeec {

/// Deterministic random stream. All randomness in the system flows through
/// named streams derived from (global seed, node id, round, tag) so that,
/// e.g., migrating one node never perturbs another node's draws. Samplers
/// are hand-rolled (Box-Muller, Marsaglia-Tsang) so output does not depend
/// on the standard library's distribution implementations.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double uniform();

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  /// Gamma(shape, 1) via Marsaglia-Tsang (boosted for shape < 1).
  double gamma(double shape);

  /// Dirichlet(alpha, ..., alpha) of dimension k.
  std::vector<double> dirichlet_symmetric(double alpha, int k);

  /// In-place Fisher-Yates shuffle of 0..n-1 index vectors.
  void shuffle(std::vector<int>& v);

private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// 64-bit FNV-1a, the hash used both for stream derivation and for
/// config/weight fingerprints.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t fnv1a_u64(std::uint64_t value, std::uint64_t h);

/// Derive an independent stream from the global seed and a set of labels.
RngStream derive_stream(std::uint64_t global_seed, std::string_view scope,
                        std::uint64_t index = 0, std::string_view tag = "");

/// Derive a child seed (for APIs that take a seed rather than a stream).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace fedeec
