#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "preg/graph.hpp"
#include "preg/matrix.hpp"
#include "preg/reg.hpp"

namespace preg {

// max over i,k of |Z_ik − Z_jk| = max column range. Zero iff all rows equal.
inline double row_dispersion(const DenseMatrix& Z) {
  require(Z.rows >= 1, "row_dispersion: empty matrix");
  double worst = 0.0;
  for (std::size_t j = 0; j < Z.cols; ++j) {
    double lo = Z(0, j), hi = Z(0, j);
    for (std::size_t i = 1; i < Z.rows; ++i) {
      lo = std::min(lo, Z(i, j));
      hi = std::max(hi, Z(i, j));
    }
    worst = std::max(worst, hi - lo);
  }
  return worst;
}

struct ConvergenceReport {
  std::size_t iterations = 0;
  double dispersion = 0.0;
  bool converged = false;
  DenseMatrix limit;
  bool self_loop_warning = false;  // set when some node lacks a self-loop
};

// Repeated propagation Z ← ÂZ until the rows agree — the infinite-depth GCN.
// Requires a connected graph; callers should add self-loops (without them
// bipartite structures oscillate with period 2, which is reported, not fixed).
inline ConvergenceReport infinite_gcn(const Graph& g, DenseMatrix Z, double tol,
                                      std::size_t max_iter) {
  require(g.num_nodes == Z.rows, "infinite_gcn: graph/matrix size mismatch");
  if (!is_connected(g)) throw std::invalid_argument("infinite_gcn: graph is not connected");
  ConvergenceReport rep;
  for (std::size_t i = 0; i < g.num_nodes && !rep.self_loop_warning; ++i)
    if (!g.has_edge(i, i)) rep.self_loop_warning = true;
  const SparseOperator op = normalize_adjacency(g, NormMode::row);
  for (std::size_t it = 0; it <= max_iter; ++it) {
    rep.dispersion = row_dispersion(Z);
    rep.iterations = it;
    if (rep.dispersion < tol) {
      rep.converged = true;
      break;
    }
    if (it == max_iter) break;
    Z = spmm(op, Z);
  }
  rep.limit = std::move(Z);
  return rep;
}

// |φ_SE(Z, ÂZ) − ½⟨Z, Δ̃ᵀΔ̃Z⟩|, which is zero in exact arithmetic.
inline double theorem1_residual(const Graph& g, const DenseMatrix& Z) {
  require(g.num_nodes == Z.rows, "theorem1_residual: graph/matrix size mismatch");
  const SparseOperator ahat = normalize_adjacency(g, NormMode::row);
  const PhiResult se = phi(PhiVariant::squared_error, Z, spmm(ahat, Z));
  const SparseOperator lap = normalized_laplacian(g);
  const DenseMatrix lz = spmm(lap, Z);
  const DenseMatrix ltlz = spmm(transpose(lap), lz);
  const double quadratic = 0.5 * frobenius_dot(Z, ltlz);
  return std::abs(se.value - quadratic);
}

struct DescentReport {
  DenseMatrix Z;
  std::vector<double> value_trace;       // φ before each step, plus the final point
  std::vector<double> dispersion_trace;  // row_dispersion on the same schedule
};

// Plain fixed-step gradient descent on raw φ(Z, ÂZ) over Z, through both
// arguments. For CE/KL the iterate is row-centered: those φ see Z only through
// row softmaxes, and their gradients have exactly zero row sums, so each row's
// mean is a conserved quantity; centering picks the canonical representative
// of that gauge orbit (it does not alter the dynamics).
inline DescentReport minimize_preg_descent(const Graph& g, DenseMatrix Z0, PhiVariant variant,
                                           double lr, std::size_t steps) {
  require(g.num_nodes == Z0.rows, "minimize_preg_descent: graph/matrix size mismatch");
  require(lr > 0.0, "minimize_preg_descent: lr must be positive");
  if (!is_connected(g))
    throw std::invalid_argument("minimize_preg_descent: graph is not connected");
  const SparseOperator op = normalize_adjacency(g, NormMode::row);
  const SparseOperator op_t = transpose(op);
  const bool center = variant != PhiVariant::squared_error;

  DescentReport rep;
  rep.Z = std::move(Z0);
  auto recenter = [&] {
    if (!center) return;
    for (std::size_t i = 0; i < rep.Z.rows; ++i) {
      double mean = 0.0;
      for (std::size_t j = 0; j < rep.Z.cols; ++j) mean += rep.Z(i, j);
      mean /= static_cast<double>(rep.Z.cols);
      for (std::size_t j = 0; j < rep.Z.cols; ++j) rep.Z(i, j) -= mean;
    }
  };
  recenter();
  for (std::size_t step = 0; step <= steps; ++step) {
    const DenseMatrix zprop = spmm(op, rep.Z);
    const PhiResult res = phi(variant, rep.Z, zprop);
    rep.value_trace.push_back(res.value);
    rep.dispersion_trace.push_back(row_dispersion(rep.Z));
    if (step == steps) break;
    DenseMatrix grad = spmm(op_t, res.dZprop);
    add_scaled(grad, res.dZ, 1.0);
    add_scaled(rep.Z, grad, -lr);
    if (!rep.Z.all_finite())
      throw std::runtime_error("minimize_preg_descent: diverged; reduce lr");
  }
  return rep;
}

// ω = (1/N) Σ_k Σ_{i: y_i = k} ‖Z_i − c_k‖₂ with c_k the class centroid.
// Measured on raw logits. Empty classes contribute nothing.
inline double intra_class_distance(const DenseMatrix& Z, const std::vector<std::size_t>& labels) {
  require(labels.size() == Z.rows, "intra_class_distance: label count mismatch");
  require(Z.rows > 0, "intra_class_distance: empty matrix");
  const std::size_t num_classes =
      1 + *std::max_element(labels.begin(), labels.end());
  DenseMatrix centroids(num_classes, Z.cols);
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < Z.rows; ++i) {
    ++counts[labels[i]];
    for (std::size_t j = 0; j < Z.cols; ++j) centroids(labels[i], j) += Z(i, j);
  }
  for (std::size_t k = 0; k < num_classes; ++k)
    if (counts[k] > 0)
      for (std::size_t j = 0; j < Z.cols; ++j)
        centroids(k, j) /= static_cast<double>(counts[k]);
  double total = 0.0;
  for (std::size_t i = 0; i < Z.rows; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < Z.cols; ++j) {
      const double d = Z(i, j) - centroids(labels[i], j);
      sq += d * d;
    }
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(Z.rows);
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "spearman: need two same-length series");
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, "spearman: a series is constant");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace preg
