#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>

#include "preg/graph.hpp"
#include "preg/matrix.hpp"
#include "preg/rng.hpp"

namespace preg {

enum class ModelKind { gcn, mlp };

constexpr std::size_t default_hidden(ModelKind kind) {
  return kind == ModelKind::gcn ? 64 : 16;
}

struct ModelParams {
  ModelKind kind = ModelKind::gcn;
  DenseMatrix W0;  // F×H
  DenseMatrix W1;  // H×C
};

inline DenseMatrix glorot_init(std::size_t rows, std::size_t cols, Rng& rng) {
  require(rows > 0 && cols > 0, "glorot_init: dimensions must be positive");
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  DenseMatrix w(rows, cols);
  for (double& v : w.data) v = rng.uniform(-s, s);
  return w;
}

inline ModelParams init_params(ModelKind kind, std::size_t in_dim, std::size_t hidden,
                               std::size_t out_dim, Rng& rng) {
  return {kind, glorot_init(in_dim, hidden, rng), glorot_init(hidden, out_dim, rng)};
}

inline DenseMatrix softmax_rows(const DenseMatrix& z) {
  DenseMatrix p(z.rows, z.cols);
  for (std::size_t i = 0; i < z.rows; ++i) {
    const double* zr = z.row(i);
    double* pr = p.row(i);
    double m = zr[0];
    for (std::size_t j = 1; j < z.cols; ++j) m = std::max(m, zr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < z.cols; ++j) {
      pr[j] = std::exp(zr[j] - m);
      sum += pr[j];
    }
    for (std::size_t j = 0; j < z.cols; ++j) pr[j] /= sum;
  }
  return p;
}

// Everything backward needs from the forward pass.
struct ForwardCache {
  DenseMatrix pre_hidden;  // first-layer pre-activation (op·X·W0, or X·W0 for mlp)
  DenseMatrix hidden;      // dropout(ReLU(pre_hidden)) — input to the second layer
  DenseMatrix mask;        // entries {0, 1/(1−p)}; empty when dropout inactive
};

// gcn: Z = op · ReLU(op·X·W0) · W1      mlp: Z = ReLU(X·W0) · W1
// Inverted dropout after ReLU while training; eval mode needs no rescaling.
inline std::pair<DenseMatrix, ForwardCache> model_forward(const ModelParams& params,
                                                          const DenseMatrix& X,
                                                          const SparseOperator& op,
                                                          double dropout_p, bool training,
                                                          Rng& rng) {
  require(X.cols == params.W0.rows, "model_forward: feature/W0 shape mismatch");
  require(params.W0.cols == params.W1.rows, "model_forward: W0/W1 shape mismatch");
  const bool gcn = params.kind == ModelKind::gcn;
  ForwardCache cache;
  const DenseMatrix a1 = matmul(X, params.W0);
  cache.pre_hidden = gcn ? spmm(op, a1) : a1;
  cache.hidden = cache.pre_hidden;
  for (double& v : cache.hidden.data) v = v > 0.0 ? v : 0.0;
  if (training && dropout_p > 0.0) {
    require(dropout_p < 1.0, "model_forward: dropout probability must be < 1");
    const double keep_scale = 1.0 / (1.0 - dropout_p);
    cache.mask = DenseMatrix(cache.hidden.rows, cache.hidden.cols);
    for (double& v : cache.mask.data) v = rng.uniform() >= dropout_p ? keep_scale : 0.0;
    for (std::size_t i = 0; i < cache.hidden.data.size(); ++i)
      cache.hidden.data[i] *= cache.mask.data[i];
  }
  const DenseMatrix a2 = matmul(cache.hidden, params.W1);
  DenseMatrix z = gcn ? spmm(op, a2) : a2;
  return {std::move(z), std::move(cache)};
}

struct ParamGrads {
  DenseMatrix dW0;
  DenseMatrix dW1;
};

// Reverse-mode pass matching model_forward. op_t is the transpose of the
// operator used forward (they coincide numerically for the symmetric mode,
// but the transpose is required in general).
inline ParamGrads model_backward(const ModelParams& params, const ForwardCache& cache,
                                 const DenseMatrix& X, const SparseOperator& op_t,
                                 const DenseMatrix& dZ) {
  require(cache.hidden.rows == dZ.rows, "model_backward: stale cache");
  require(dZ.cols == params.W1.cols, "model_backward: dZ shape mismatch");
  const bool gcn = params.kind == ModelKind::gcn;
  const DenseMatrix da2 = gcn ? spmm(op_t, dZ) : dZ;
  ParamGrads grads;
  grads.dW1 = matmul_at_b(cache.hidden, da2);
  DenseMatrix dhidden = matmul_a_bt(da2, params.W1);
  if (cache.mask.data.size() == dhidden.data.size())
    for (std::size_t i = 0; i < dhidden.data.size(); ++i)
      dhidden.data[i] *= cache.mask.data[i];
  for (std::size_t i = 0; i < dhidden.data.size(); ++i)
    if (!(cache.pre_hidden.data[i] > 0.0)) dhidden.data[i] = 0.0;
  const DenseMatrix da1 = gcn ? spmm(op_t, dhidden) : dhidden;
  grads.dW0 = matmul_at_b(X, da1);
  return grads;
}

// Central finite differences over the model parameters against a supplied
// analytic gradient. Relative error denominator is max(|a|, |fd|, 1e-8).
// Checks every coordinate unless there are more than max_coords, in which
// case a random subsample of max_coords coordinates is used.
inline double finite_diff_gradcheck(const std::function<double()>& loss, ModelParams& params,
                                    const ParamGrads& analytic, double eps,
                                    std::size_t max_coords, Rng& rng) {
  require(eps > 0.0, "finite_diff_gradcheck: eps must be positive");
  const std::size_t n0 = params.W0.data.size();
  const std::size_t total = n0 + params.W1.data.size();
  std::vector<std::size_t> coords(total);
  for (std::size_t i = 0; i < total; ++i) coords[i] = i;
  if (total > max_coords) coords = rng.sample_without_replacement(coords, max_coords);

  double worst = 0.0;
  for (std::size_t c : coords) {
    double& theta = c < n0 ? params.W0.data[c] : params.W1.data[c - n0];
    const double saved = theta;
    theta = saved + eps;
    const double fp = loss();
    theta = saved - eps;
    const double fm = loss();
    theta = saved;
    require(std::isfinite(fp) && std::isfinite(fm), "finite_diff_gradcheck: non-finite loss");
    const double fd = (fp - fm) / (2.0 * eps);
    const double an = c < n0 ? analytic.dW0.data[c] : analytic.dW1.data[c - n0];
    const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
    worst = std::max(worst, std::abs(an - fd) / denom);
  }
  return worst;
}

}  // namespace preg
