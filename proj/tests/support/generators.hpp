#pragma once

// Shared random-instance generators for property tests.

#include <string>
#include <vector>

#include "fedeec/nn.hpp"
#include "fedeec/rng.hpp"
#include "fedeec/topology.hpp"
#include "fedeec/types.hpp"

namespace testsupport {

using fedeec::IntVector;
using fedeec::Matrix;
using fedeec::RngStream;
using fedeec::Vector;

inline Matrix random_matrix(RngStream& stream, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * stream.normal();
  return m;
}

inline IntVector random_labels(RngStream& stream, int n, int classes) {
  IntVector y(n);
  for (int i = 0; i < n; ++i) y[i] = static_cast<int>(stream.below(classes));
  return y;
}

// Strictly positive point on the simplex (uniform via exponentials).
inline Vector random_prob_vector(RngStream& stream, int classes) {
  Vector v(classes);
  double sum = 0.0;
  for (int i = 0; i < classes; ++i) {
    double u;
    do {
      u = stream.uniform();
    } while (u <= 0.0);
    v[i] = -std::log(u);
    sum += v[i];
  }
  return v / sum;
}

// Uniform-leaf-depth random tree: ids n0, n1, ...; every interior node gets
// 1..3 children until the target depth is reached.
inline fedeec::topo::TreeTopology random_tree(RngStream& stream, int max_depth = 4) {
  const int depth = 2 + static_cast<int>(stream.below(static_cast<std::uint64_t>(max_depth - 1)));
  int counter = 0;
  std::vector<std::pair<std::string, std::string>> edges;
  std::vector<std::string> frontier{"n" + std::to_string(counter++)};
  for (int level = 1; level < depth; ++level) {
    std::vector<std::string> next;
    for (const auto& parent : frontier) {
      const int kids = 1 + static_cast<int>(stream.below(3));
      for (int k = 0; k < kids; ++k) {
        std::string child = "n" + std::to_string(counter++);
        edges.emplace_back(parent, child);
        next.push_back(std::move(child));
      }
    }
    frontier = std::move(next);
  }
  if (edges.empty()) return fedeec::topo::TreeTopology::parse("n0");
  return fedeec::topo::TreeTopology::from_edges(edges);
}

}  // namespace testsupport
