/*
 * Copyright 2026 The ICC Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Exact transport oracles for checking the entropic solver.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "icc/dmcount.hpp"

namespace icc::testing {

// Exact balanced transport by successive shortest paths on integer supplies.
// Supplies are integers, so every augmentation is integral and the result is
// the LP optimum; costs are real.
inline double exact_transport(const std::vector<long>& supply, const std::vector<long>& demand,
                       const std::vector<double>& cost) {
  const std::size_t m = supply.size(), n = demand.size();
  const std::size_t nodes = m + n + 2, s = m + n, t = m + n + 1;
  struct Edge { std::size_t to; long cap; double cost; };
  std::vector<Edge> edges;
  std::vector<std::vector<std::size_t>> adj(nodes);
  auto add = [&](std::size_t a, std::size_t b, long cap, double c) {
    adj[a].push_back(edges.size());
    edges.push_back({b, cap, c});
    adj[b].push_back(edges.size());
    edges.push_back({a, 0, -c});
  };
  for (std::size_t i = 0; i < m; ++i) add(s, i, supply[i], 0.0);
  for (std::size_t j = 0; j < n; ++j) add(m + j, t, demand[j], 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) add(i, m + j, std::numeric_limits<long>::max() / 4, cost[i * n + j]);
  double total = 0.0;
  for (;;) {
    std::vector<double> dist(nodes, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> via(nodes, SIZE_MAX);
    dist[s] = 0.0;
    for (std::size_t round = 0; round < nodes; ++round) {
      bool changed = false;
      for (std::size_t a = 0; a < nodes; ++a) {
        if (!std::isfinite(dist[a])) continue;
        for (std::size_t e : adj[a]) {
          if (edges[e].cap > 0 && dist[a] + edges[e].cost < dist[edges[e].to] - 1e-12) {
            dist[edges[e].to] = dist[a] + edges[e].cost;
            via[edges[e].to] = e;
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    if (!std::isfinite(dist[t])) break;
    long push = std::numeric_limits<long>::max();
    for (std::size_t v = t; v != s; v = edges[via[v] ^ 1].to) push = std::min(push, edges[via[v]].cap);
    for (std::size_t v = t; v != s; v = edges[via[v] ^ 1].to) {
      edges[via[v]].cap -= push;
      edges[via[v] ^ 1].cap += push;
    }
    total += static_cast<double>(push) * dist[t];
  }
  return total;
}

// Uniform n-to-n transport is solved by a permutation (Birkhoff).
inline double best_permutation(std::size_t n, const std::vector<double>& cost) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += cost[i * n + perm[i]];
    best = std::min(best, c / static_cast<double>(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline std::vector<double> squared_distances(const std::vector<std::pair<double, double>>& a,
                                      const std::vector<std::pair<double, double>>& b) {
  std::vector<double> c;
  for (auto [ax, ay] : a)
    for (auto [bx, by] : b) c.push_back((ax - bx) * (ax - bx) + (ay - by) * (ay - by));
  return c;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

// A random balanced problem on points in an 8x8 square with integer masses,
// so the exact optimum is computable by the flow oracle.
struct TransportInstance {
  TransportProblem problem;
  std::vector<long> supply, demand;
  double scale = 1.0;  // problem masses are supply/scale and demand/scale

  double exact_cost() const {
    return exact_transport(supply, demand, problem.cost) / scale;
  }
};

inline TransportInstance random_transport_instance(std::mt19937_64& rng,
                                                   std::size_t max_points = 16) {
  std::uniform_real_distribution<double> coord(0.0, 8.0);
  std::uniform_int_distribution<std::size_t> size(2, max_points);
  std::uniform_int_distribution<long> mass(1, 20);
  const std::size_t m = size(rng), n = size(rng);
  std::vector<std::pair<double, double>> a(m), b(n);
  for (auto& p : a) p = {coord(rng), coord(rng)};
  for (auto& p : b) p = {coord(rng), coord(rng)};
  std::vector<long> sa(m), sb(n);
  for (long& x : sa) x = mass(rng);
  for (long& x : sb) x = mass(rng);
  // Cross-multiplying by the other side's total balances the masses.
  const long ta = std::accumulate(sa.begin(), sa.end(), 0L);
  const long tb = std::accumulate(sb.begin(), sb.end(), 0L);
  TransportInstance t;
  t.scale = static_cast<double>(ta) * static_cast<double>(tb);
  for (long x : sa) t.supply.push_back(x * tb);
  for (long x : sb) t.demand.push_back(x * ta);
  t.problem.cost = squared_distances(a, b);
  for (long x : t.supply) t.problem.p.push_back(static_cast<double>(x) / t.scale);
  for (long x : t.demand) t.problem.q.push_back(static_cast<double>(x) / t.scale);
  t.problem.epsilon = 0.01 * median(t.problem.cost);
  return t;
}

}  // namespace icc::testing
