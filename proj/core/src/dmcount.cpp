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

#include "icc/dmcount.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "icc/error.hpp"

namespace icc {

template <typename T>
T DensityMap<T>::count() const {
  double s = 0.0;
  for (T v : values) s += static_cast<double>(v);
  return static_cast<T>(s);
}

template <typename T>
void DensityMap<T>::validate() const {
  if (values.size() != height * width) {
    throw DataError("density map holds " + std::to_string(values.size()) +
                    " values for a " + std::to_string(height) + "x" +
                    std::to_string(width) + " grid");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(static_cast<double>(values[i])) || values[i] < T(0)) {
      throw DataError("density map value at index " + std::to_string(i) +
                      " is negative or non-finite");
    }
  }
}

template <typename T>
Tensor<T> DensityMap<T>::to_tensor() const {
  return Tensor<T>({1, 1, height, width}, values);
}

template <typename T>
DensityMap<T> DensityMap<T>::from_tensor(const Tensor<T>& t, bool gt) {
  DensityMap m;
  if (t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 1) {
    m.height = t.dim(2);
    m.width = t.dim(3);
  } else if (t.rank() == 2) {
    m.height = t.dim(0);
    m.width = t.dim(1);
  } else {
    throw ShapeError("density map tensor must be [1,1,h,w] or [h,w], got " +
                     shape_to_string(t.shape()));
  }
  m.values.assign(t.data().begin(), t.data().end());
  m.is_ground_truth = gt;
  return m;
}

template struct DensityMap<float>;
template struct DensityMap<double>;

std::vector<double> grid_cost(std::size_t height, std::size_t width) {
  const std::size_t n = height * width;
  std::vector<double> c(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ri = static_cast<double>(i / width);
    const double ci = static_cast<double>(i % width);
    for (std::size_t j = 0; j < n; ++j) {
      const double dr = ri - static_cast<double>(j / width);
      const double dc = ci - static_cast<double>(j % width);
      c[i * n + j] = dr * dr + dc * dc;
    }
  }
  return c;
}

double default_epsilon(const std::vector<double>& cost) {
  if (cost.empty()) return 0.0;
  return 0.01 * std::accumulate(cost.begin(), cost.end(), 0.0) /
         static_cast<double>(cost.size());
}

double default_grid_epsilon(std::size_t height, std::size_t width) {
  // E[(i - j)^2] for independent uniform i, j on {0..k-1} is (k^2 - 1) / 6.
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  return 0.01 * ((h * h - 1.0) / 6.0 + (w * w - 1.0) / 6.0);
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const double* x, std::size_t n, std::size_t stride = 1) {
  double mx = kNegInf;
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[i * stride]);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i * stride] - mx);
  return mx + std::log(s);
}

// The soft-min operators below compute
//   out_i = -eps * log sum_j exp(z_j - C_ij / eps)
// over rows (out indexed by p) or columns (out indexed by q).

class DenseKernel {
 public:
  DenseKernel(const std::vector<double>& cost, std::size_t n, std::size_t m,
              double eps)
      : cost_(cost), n_(n), m_(m), eps_(eps), scratch_(std::max(n, m)) {}

  void rows(const std::vector<double>& z, std::vector<double>& out) {
    for (std::size_t i = 0; i < n_; ++i) {
      const double* c = &cost_[i * m_];
      for (std::size_t j = 0; j < m_; ++j) scratch_[j] = z[j] - c[j] / eps_;
      out[i] = -eps_ * log_sum_exp(scratch_.data(), m_);
    }
  }
  void cols(const std::vector<double>& z, std::vector<double>& out) {
    for (std::size_t j = 0; j < m_; ++j) {
      for (std::size_t i = 0; i < n_; ++i) {
        scratch_[i] = z[i] - cost_[i * m_ + j] / eps_;
      }
      out[j] = -eps_ * log_sum_exp(scratch_.data(), n_);
    }
  }

 private:
  const std::vector<double>& cost_;
  std::size_t n_, m_;
  double eps_;
  std::vector<double> scratch_;
};

// Squared Euclidean cost on a grid separates into a row and a column term,
// so the soft-min runs as two 1-D passes: O(hw(h+w)) instead of O((hw)^2).
class GridKernel {
 public:
  GridKernel(std::size_t h, std::size_t w, double eps)
      : h_(h), w_(w), eps_(eps), partial_(h * w), scratch_(std::max(h, w)) {}

  void rows(const std::vector<double>& z, std::vector<double>& out) {
    apply(z, out);
  }
  void cols(const std::vector<double>& z, std::vector<double>& out) {
    apply(z, out);
  }

 private:
  void apply(const std::vector<double>& z, std::vector<double>& out) {
    for (std::size_t r = 0; r < h_; ++r) {
      for (std::size_t c = 0; c < w_; ++c) {
        for (std::size_t c2 = 0; c2 < w_; ++c2) {
          const double d = static_cast<double>(c) - static_cast<double>(c2);
          scratch_[c2] = z[r * w_ + c2] - d * d / eps_;
        }
        partial_[r * w_ + c] = log_sum_exp(scratch_.data(), w_);
      }
    }
    for (std::size_t c = 0; c < w_; ++c) {
      for (std::size_t r = 0; r < h_; ++r) {
        for (std::size_t r2 = 0; r2 < h_; ++r2) {
          const double d = static_cast<double>(r) - static_cast<double>(r2);
          scratch_[r2] = partial_[r2 * w_ + c] - d * d / eps_;
        }
        out[r * w_ + c] = -eps_ * log_sum_exp(scratch_.data(), h_);
      }
    }
  }

  std::size_t h_, w_;
  double eps_;
  std::vector<double> partial_, scratch_;
};

struct Potentials {
  std::vector<double> f, g;
  std::size_t iterations = 0;
  bool converged = false;
  double error = 0.0;
};

std::vector<double> safe_log(const std::vector<double>& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] > 0 ? std::log(x[i]) : kNegInf;
  }
  return out;
}

// Row-marginal L1 error of the plan built from (f, g) given the next
// f-update fn: row i sums to p_i * exp((f_i - fn_i) / eps).
double row_error(const std::vector<double>& p, const std::vector<double>& f,
                 const std::vector<double>& fn, double eps) {
  double err = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) err += p[i] * std::abs(std::exp((f[i] - fn[i]) / eps) - 1.0);
  }
  return err;
}

template <typename Kernel>
Potentials solve(Kernel& k, const std::vector<double>& p,
                 const std::vector<double>& q, double eps,
                 std::size_t max_iters, double tol) {
  const std::vector<double> lp = safe_log(p), lq = safe_log(q);
  Potentials s;
  s.f.assign(p.size(), 0.0);
  s.g.assign(q.size(), 0.0);
  std::vector<double> z_p(p.size()), z_q(q.size()), fn(p.size());
  s.error = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= max_iters; ++it) {
    for (std::size_t i = 0; i < p.size(); ++i) z_p[i] = lp[i] + s.f[i] / eps;
    k.cols(z_p, s.g);
    for (std::size_t j = 0; j < q.size(); ++j) z_q[j] = lq[j] + s.g[j] / eps;
    k.rows(z_q, fn);
    s.iterations = it;
    s.error = row_error(p, s.f, fn, eps);
    if (s.error <= tol) {
      s.converged = true;
      break;
    }
    s.f.swap(fn);
  }
  return s;
}

// Self-transport OT(q, q): the optimal potentials are symmetric, and the
// averaged fixed-point iteration avoids the oscillation of plain Sinkhorn.
template <typename Kernel>
Potentials solve_symmetric(Kernel& k, const std::vector<double>& q, double eps,
                           std::size_t max_iters, double tol) {
  const std::vector<double> lq = safe_log(q);
  Potentials s;
  s.f.assign(q.size(), 0.0);
  std::vector<double> z(q.size()), fn(q.size());
  s.error = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= max_iters; ++it) {
    for (std::size_t j = 0; j < q.size(); ++j) z[j] = lq[j] + s.f[j] / eps;
    k.rows(z, fn);
    s.iterations = it;
    s.error = row_error(q, s.f, fn, eps);
    if (s.error <= tol) {
      s.converged = true;
      break;
    }
    for (std::size_t j = 0; j < q.size(); ++j) s.f[j] = 0.5 * (s.f[j] + fn[j]);
  }
  s.g = s.f;
  return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i] != 0.0) s += a[i] * b[i];
  }
  return s;
}

void check_distribution(const std::vector<double>& x, const char* name) {
  double s = 0.0;
  for (double v : x) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string("transport marginal ") + name +
                        " has a negative or non-finite entry");
    }
    s += v;
  }
  if (s == 0.0) {
    throw DegenerateMassError(std::string("transport marginal ") + name +
                              " has zero mass");
  }
  if (std::abs(s - 1.0) > 1e-9) {
    throw ConfigError(std::string("transport marginal ") + name +
                      " sums to " + std::to_string(s) + ", expected 1");
  }
}

// Projects a nearly feasible plan onto the exact marginals: scale down
// over-full rows, then over-full columns, then add the rank-one residual.
void project_onto_marginals(std::vector<double>& plan,
                            const std::vector<double>& p,
                            const std::vector<double>& q) {
  const std::size_t n = p.size(), m = q.size();
  std::vector<double> r(n, 0.0), c(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) r[i] += plan[i * m + j];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double x = r[i] > p[i] ? p[i] / r[i] : 1.0;
    for (std::size_t j = 0; j < m; ++j) plan[i * m + j] *= x;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) c[j] += plan[i * m + j];
  }
  std::vector<double> y(m);
  for (std::size_t j = 0; j < m; ++j) y[j] = c[j] > q[j] ? q[j] / c[j] : 1.0;
  std::fill(r.begin(), r.end(), 0.0);
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      plan[i * m + j] *= y[j];
      r[i] += plan[i * m + j];
      c[j] += plan[i * m + j];
    }
  }
  double deficit = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = std::max(0.0, p[i] - r[i]);
    deficit += r[i];
  }
  for (std::size_t j = 0; j < m; ++j) c[j] = std::max(0.0, q[j] - c[j]);
  if (deficit <= 0.0) return;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) plan[i * m + j] += r[i] * c[j] / deficit;
  }
}

}  // namespace

TransportPlan sinkhorn(const TransportProblem& problem) {
  const std::size_t n = problem.p.size(), m = problem.q.size();
  if (!(problem.epsilon > 0.0)) {
    throw ConfigError("sinkhorn regularization must be positive");
  }
  if (problem.cost.size() != n * m) {
    throw ShapeError("cost matrix holds " + std::to_string(problem.cost.size()) +
                     " entries, expected " + std::to_string(n) + "x" +
                     std::to_string(m));
  }
  if (problem.max_iters == 0) throw ConfigError("sinkhorn needs max_iters >= 1");
  check_distribution(problem.p, "p");
  check_distribution(problem.q, "q");

  DenseKernel k(problem.cost, n, m, problem.epsilon);
  Potentials s = solve(k, problem.p, problem.q, problem.epsilon,
                       problem.max_iters, problem.tolerance);
  TransportPlan out;
  out.plan.resize(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double pq = problem.p[i] * problem.q[j];
      out.plan[i * m + j] =
          pq > 0 ? pq * std::exp((s.f[i] + s.g[j] - problem.cost[i * m + j]) /
                                 problem.epsilon)
                 : 0.0;
    }
  }
  project_onto_marginals(out.plan, problem.p, problem.q);
  out.cost = 0.0;
  for (std::size_t i = 0; i < n * m; ++i) out.cost += out.plan[i] * problem.cost[i];
  out.u = std::move(s.f);
  out.v = std::move(s.g);
  out.iterations = s.iterations;
  out.converged = s.converged;
  out.marginal_error = s.error;
  return out;
}

namespace {

template <typename T>
void require_same_grid(const DensityMap<T>& y, const DensityMap<T>& yhat) {
  if (y.height != yhat.height || y.width != yhat.width ||
      y.values.size() != yhat.values.size()) {
    throw ShapeError("density maps differ in size: " + std::to_string(y.height) +
                     "x" + std::to_string(y.width) + " vs " +
                     std::to_string(yhat.height) + "x" +
                     std::to_string(yhat.width));
  }
}

template <typename T>
std::pair<std::vector<double>, double> normalized(const DensityMap<T>& m,
                                                  const char* which) {
  std::vector<double> out(m.values.begin(), m.values.end());
  double mass = 0.0;
  for (double v : out) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DataError(std::string(which) +
                      " density has a negative or non-finite value");
    }
    mass += v;
  }
  if (mass <= 0.0) {
    throw DegenerateMassError(std::string(which) + " density has zero mass");
  }
  for (double& v : out) v /= mass;
  return {out, mass};
}

// Gradient with respect to the unnormalized map of a function of b = x/|x|,
// given its gradient g with respect to b.
template <typename T>
std::vector<T> through_normalization(const std::vector<double>& g,
                                     const std::vector<double>& b,
                                     double mass) {
  const double mean = dot(g, b);
  std::vector<T> out(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    out[k] = static_cast<T>((g[k] - mean) / mass);
  }
  return out;
}

}  // namespace

template <typename T>
LossResult<T> counting_loss(const DensityMap<T>& y, const DensityMap<T>& yhat) {
  require_same_grid(y, yhat);
  double sy = 0.0, sp = 0.0;
  for (T v : y.values) sy += static_cast<double>(v);
  for (T v : yhat.values) sp += static_cast<double>(v);
  LossResult<T> r;
  r.value = static_cast<T>(std::abs(sy - sp));
  const T sign = sp > sy ? T(1) : (sp < sy ? T(-1) : T(0));
  r.grad.assign(yhat.values.size(), sign);
  return r;
}

template <typename T>
LossResult<T> ot_loss(const DensityMap<T>& y, const DensityMap<T>& yhat,
                      const SinkhornOptions& options) {
  require_same_grid(y, yhat);
  auto [a, mass_y] = normalized(y, "ground-truth");
  auto [b, mass_p] = normalized(yhat, "predicted");
  (void)mass_y;
  LossResult<T> r;
  if (a.size() == 1) {
    r.grad.assign(1, T(0));
    return r;
  }
  const double eps = options.epsilon > 0
                         ? options.epsilon
                         : default_grid_epsilon(y.height, y.width);
  GridKernel k(y.height, y.width, eps);
  const Potentials ab = solve(k, a, b, eps, options.max_iters, options.tolerance);
  const Potentials aa =
      solve_symmetric(k, a, eps, options.max_iters, options.tolerance);
  const Potentials bb =
      solve_symmetric(k, b, eps, options.max_iters, options.tolerance);
  const double value = dot(ab.f, a) + dot(ab.g, b) - dot(aa.f, a) - dot(bb.f, b);
  std::vector<double> g(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) g[j] = ab.g[j] - bb.f[j];
  r.value = static_cast<T>(value);
  r.grad = through_normalization<T>(g, b, mass_p);
  return r;
}

template <typename T>
LossResult<T> tv_loss(const DensityMap<T>& y, const DensityMap<T>& yhat) {
  require_same_grid(y, yhat);
  auto [a, mass_y] = normalized(y, "ground-truth");
  auto [b, mass_p] = normalized(yhat, "predicted");
  (void)mass_y;
  double value = 0.0;
  std::vector<double> g(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) {
    const double d = b[k] - a[k];
    value += std::abs(d);
    g[k] = d > 0 ? 0.5 : (d < 0 ? -0.5 : 0.0);
  }
  LossResult<T> r;
  r.value = static_cast<T>(0.5 * value);
  r.grad = through_normalization<T>(g, b, mass_p);
  return r;
}

template <typename T>
DmCountResult<T> dm_count_loss(const DensityMap<T>& y,
                               const DensityMap<T>& yhat,
                               const DmCountWeights& weights,
                               const SinkhornOptions& options) {
  const LossResult<T> c = counting_loss(y, yhat);
  DmCountResult<T> r;
  r.counting = c.value;
  r.grad = c.grad;
  double total = static_cast<double>(c.value);
  if (weights.lambda_ot != 0.0) {
    const LossResult<T> ot = ot_loss(y, yhat, options);
    r.ot = ot.value;
    total += weights.lambda_ot * static_cast<double>(ot.value);
    for (std::size_t k = 0; k < r.grad.size(); ++k) {
      r.grad[k] += static_cast<T>(weights.lambda_ot) * ot.grad[k];
    }
  }
  if (weights.lambda_tv != 0.0) {
    const LossResult<T> tv = tv_loss(y, yhat);
    r.tv = tv.value;
    const double scale = weights.lambda_tv * static_cast<double>(y.count());
    total += scale * static_cast<double>(tv.value);
    for (std::size_t k = 0; k < r.grad.size(); ++k) {
      r.grad[k] += static_cast<T>(scale) * tv.grad[k];
    }
  }
  r.value = static_cast<T>(total);
  return r;
}

#define ICC_INSTANTIATE(T)                                                     \
  template LossResult<T> counting_loss(const DensityMap<T>&,                   \
                                       const DensityMap<T>&);                  \
  template LossResult<T> ot_loss(const DensityMap<T>&, const DensityMap<T>&,   \
                                 const SinkhornOptions&);                      \
  template LossResult<T> tv_loss(const DensityMap<T>&, const DensityMap<T>&);  \
  template DmCountResult<T> dm_count_loss(const DensityMap<T>&,                \
                                          const DensityMap<T>&,                \
                                          const DmCountWeights&,               \
                                          const SinkhornOptions&);
ICC_INSTANTIATE(float)
ICC_INSTANTIATE(double)
#undef ICC_INSTANTIATE

}  // namespace icc
