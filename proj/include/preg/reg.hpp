#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "preg/graph.hpp"
#include "preg/matrix.hpp"
#include "preg/nn.hpp"

namespace preg {

enum class PhiVariant { squared_error, cross_entropy, kl_divergence };
enum class RegKind { none, preg, laplacian, label_smoothing, confidence_penalty };

struct RegSpec {
  RegKind kind = RegKind::none;
  PhiVariant phi = PhiVariant::cross_entropy;
  double mu = 0.0;
  double unmask_ratio = 1.0;
  bool anneal = false;
  std::optional<double> threshold;
  double ls_alpha = 0.1;
  double cp_beta = 0.1;
};

inline double clamped_log(double x) { return std::log(std::max(x, 1e-12)); }

struct PhiResult {
  double value = 0.0;
  DenseMatrix dZ;
  DenseMatrix dZprop;
};

namespace detail {

// All three φ are separable over rows; per_row receives each row's value so
// masked P-reg can keep only the unmasked subset.
template <typename RowSink>
PhiResult phi_rows(PhiVariant variant, const DenseMatrix& Z, const DenseMatrix& Zprop,
                   RowSink&& per_row) {
  require(Z.same_shape(Zprop), "phi: Z and Zprop shapes differ");
  require(Z.rows > 0 && Z.cols > 0, "phi: empty matrix");
  PhiResult res;
  res.dZ = DenseMatrix(Z.rows, Z.cols);
  res.dZprop = DenseMatrix(Z.rows, Z.cols);
  const std::size_t C = Z.cols;

  if (variant == PhiVariant::squared_error) {
    for (std::size_t i = 0; i < Z.rows; ++i) {
      double v = 0.0;
      for (std::size_t j = 0; j < C; ++j) {
        const double d = Zprop(i, j) - Z(i, j);
        v += 0.5 * d * d;
        res.dZ(i, j) = -d;
        res.dZprop(i, j) = d;
      }
      per_row(i, v);
    }
    return res;
  }

  const DenseMatrix P = softmax_rows(Z);
  const DenseMatrix Q = softmax_rows(Zprop);
  for (std::size_t i = 0; i < Z.rows; ++i) {
    const double* p = P.row(i);
    const double* q = Q.row(i);
    // s_j: per-class sensitivity of the row value to P (the +1 terms of the
    // exact ∂v/∂P are additive constants the softmax Jacobian annihilates).
    // The row value Σ p·s and the inner product ⟨p,s⟩ coincide for CE and KL.
    double v = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      const double s = variant == PhiVariant::cross_entropy
                           ? -clamped_log(q[j])
                           : clamped_log(p[j]) - clamped_log(q[j]);
      v += p[j] * s;
      res.dZ(i, j) = s;  // staged; finished below once ⟨p,s⟩ is known
      res.dZprop(i, j) = q[j] - p[j];
    }
    for (std::size_t j = 0; j < C; ++j) res.dZ(i, j) = p[j] * (res.dZ(i, j) - v);
    per_row(i, v);
  }
  return res;
}

}  // namespace detail

// SE = ½Σᵢ‖Zprop_i − Z_i‖², CE = −ΣΣ P log Q, KL = ΣΣ P log(P/Q) with
// P = softmax(Z), Q = softmax(Zprop). Raw sums (the caller normalizes).
// Gradients are returned for BOTH arguments; Zprop is not a detached target.
inline PhiResult phi(PhiVariant variant, const DenseMatrix& Z, const DenseMatrix& Zprop) {
  double total = 0.0;
  PhiResult res =
      detail::phi_rows(variant, Z, Zprop, [&](std::size_t, double v) { total += v; });
  res.value = total;
  return res;
}

struct RegResult {
  double value = 0.0;
  DenseMatrix dZ;
};

// Masked P-reg: value = (1/|S|) Σ_{i∈S} φ(Z_i, (op·Z)_i) over the unmask set S,
// with the chain through both φ arguments: dZ = (dZ_direct + opᵀ·dZprop)/|S|.
// The unmask set must contain only degree>0 nodes; empty set → (0, zero).
inline RegResult preg_loss(const Graph& g, const SparseOperator& op,
                           const SparseOperator& op_t, const DenseMatrix& Z,
                           PhiVariant variant, const std::vector<std::size_t>& unmask_set) {
  RegResult res;
  res.dZ = DenseMatrix(Z.rows, Z.cols);
  if (unmask_set.empty()) return res;
  for (std::size_t i : unmask_set)
    require(i < g.num_nodes && g.degrees[i] > 0, "preg_loss: unmask node isolated or out of range");

  const DenseMatrix Zprop = spmm(op, Z);
  std::vector<char> keep(Z.rows, 0);
  for (std::size_t i : unmask_set) keep[i] = 1;
  double total = 0.0;
  PhiResult parts = detail::phi_rows(variant, Z, Zprop, [&](std::size_t i, double v) {
    if (keep[i]) total += v;
  });
  for (std::size_t i = 0; i < Z.rows; ++i) {
    if (keep[i]) continue;
    for (std::size_t j = 0; j < Z.cols; ++j) {
      parts.dZ(i, j) = 0.0;
      parts.dZprop(i, j) = 0.0;
    }
  }
  const double inv = 1.0 / static_cast<double>(unmask_set.size());
  res.value = total * inv;
  res.dZ = spmm(op_t, parts.dZprop);
  add_scaled(res.dZ, parts.dZ, 1.0);
  for (double& v : res.dZ.data) v *= inv;
  return res;
}

inline RegResult preg_loss(const Graph& g, const SparseOperator& op, const DenseMatrix& Z,
                           PhiVariant variant, const std::vector<std::size_t>& unmask_set) {
  return preg_loss(g, op, transpose(op), Z, variant, unmask_set);
}

inline std::vector<std::size_t> eligible_nodes(const Graph& g) {  // degree > 0
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.num_nodes; ++i)
    if (g.degrees[i] > 0) out.push_back(i);
  return out;
}

// Σ over each undirected edge once of ‖Z_i − Z_j‖² = tr(Zᵀ(D−A)Z).
inline RegResult laplacian_reg(const Graph& g, const DenseMatrix& Z) {
  require(g.num_nodes == Z.rows, "laplacian_reg: graph/matrix size mismatch");
  RegResult res;
  res.dZ = DenseMatrix(Z.rows, Z.cols);
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    for (std::size_t k = g.row_offsets[i]; k < g.row_offsets[i + 1]; ++k) {
      const std::size_t j = g.col_indices[k];
      if (j <= i) continue;  // each pair once; self-loops contribute nothing
      for (std::size_t c = 0; c < Z.cols; ++c) {
        const double d = Z(i, c) - Z(j, c);
        res.value += d * d;
        res.dZ(i, c) += 2.0 * d;
        res.dZ(j, c) -= 2.0 * d;
      }
    }
  }
  return res;
}

// y^LS = (1−α)·y + α/C
inline DenseMatrix smooth_labels(const DenseMatrix& onehot, double ls_alpha) {
  require(ls_alpha >= 0.0 && ls_alpha < 1.0, "smooth_labels: alpha must be in [0,1)");
  DenseMatrix out = onehot;
  const double off = ls_alpha / static_cast<double>(onehot.cols);
  for (double& v : out.data) {
    require(v == 0.0 || v == 1.0, "smooth_labels: targets must be one-hot");
    v = (1.0 - ls_alpha) * v + off;
  }
  return out;
}

// Negative entropy Σ_{i∈mask} Σ_j P_ij log P_ij (≤ 0), with the gradient
// already pushed through the softmax that produced P from Z.
inline RegResult confidence_penalty(const DenseMatrix& P, const std::vector<std::size_t>& mask) {
  RegResult res;
  res.dZ = DenseMatrix(P.rows, P.cols);
  for (std::size_t i : mask) {
    require(i < P.rows, "confidence_penalty: mask index out of range");
    const double* p = P.row(i);
    double ps = 0.0;
    for (std::size_t j = 0; j < P.cols; ++j) {
      const double s = clamped_log(p[j]);
      res.value += p[j] * s;
      res.dZ(i, j) = s;
      ps += p[j] * s;
    }
    for (std::size_t j = 0; j < P.cols; ++j) res.dZ(i, j) = p[j] * (res.dZ(i, j) - ps);
  }
  return res;
}

// μ^(1/epoch): ramps the effective regularization factor toward 1.
inline double anneal_mu(double mu, std::size_t epoch) {
  require(mu > 0.0 && mu < 1.0, "anneal_mu: mu must be in (0,1)");
  require(epoch >= 1, "anneal_mu: epoch must be >= 1");
  return std::pow(mu, 1.0 / static_cast<double>(epoch));
}

struct HingeResult {
  double value = 0.0;
  double grad_factor = 0.0;  // 0 below the threshold (and at the kink), else 1
};

inline HingeResult threshold_hinge(double preg_value, double tau) {
  require(tau >= 0.0, "threshold_hinge: tau must be nonnegative");
  if (preg_value > tau) return {preg_value - tau, 1.0};
  return {0.0, 0.0};
}

}  // namespace preg
