#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <random>
#include <vector>

#include "lapspec/graph.hpp"

namespace lapspec::testing {

// Random spanning tree (each node attaches to an earlier one) plus each
// remaining pair with probability p.
inline Graph random_connected_graph(std::size_t n, double p, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Edge> edges;
  for (std::size_t k = 1; k < n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    edges.emplace_back(order[k], order[pick(rng)]);
  }
  std::bernoulli_distribution extra(p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (extra(rng)) edges.emplace_back(i, j);
  return Graph(n, edges);
}

inline Graph random_graph(std::size_t n, double p, std::mt19937_64& rng) {
  std::vector<Edge> edges;
  std::bernoulli_distribution keep(p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (keep(rng)) edges.emplace_back(i, j);
  return Graph(n, edges);
}

}  // namespace lapspec::testing
