#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include "preg/matrix.hpp"

namespace preg {

// Undirected graph in compressed sparse row form. Neighbor lists are sorted,
// deduplicated and symmetric by construction.
struct Graph {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> row_offsets;  // length N+1
  std::vector<std::size_t> col_indices;
  std::vector<std::size_t> degrees;      // row_offsets[i+1] - row_offsets[i]

  bool has_edge(std::size_t i, std::size_t j) const {
    const auto* b = col_indices.data() + row_offsets[i];
    const auto* e = col_indices.data() + row_offsets[i + 1];
    return std::binary_search(b, e, j);
  }

  std::size_t num_edges() const {  // undirected pairs; self-loops count once
    std::size_t loops = 0;
    for (std::size_t i = 0; i < num_nodes; ++i)
      if (has_edge(i, i)) ++loops;
    return (col_indices.size() - loops) / 2 + loops;
  }
};

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

inline Graph build_graph(const EdgeList& edges, std::size_t num_nodes,
                         bool add_self_loops = false) {
  require(num_nodes > 0, "build_graph: num_nodes must be positive");
  std::vector<std::vector<std::size_t>> adj(num_nodes);
  for (const auto& [s, d] : edges) {
    require(s < num_nodes && d < num_nodes, "build_graph: edge index out of range");
    adj[s].push_back(d);
    if (s != d) adj[d].push_back(s);
  }
  if (add_self_loops)
    for (std::size_t i = 0; i < num_nodes; ++i) adj[i].push_back(i);

  Graph g;
  g.num_nodes = num_nodes;
  g.row_offsets.assign(num_nodes + 1, 0);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    auto& row = adj[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    g.row_offsets[i + 1] = g.row_offsets[i] + row.size();
    g.col_indices.insert(g.col_indices.end(), row.begin(), row.end());
    g.degrees.push_back(row.size());
  }
  return g;
}

inline EdgeList edge_list(const Graph& g) {  // each undirected pair once, src <= dst
  EdgeList out;
  for (std::size_t i = 0; i < g.num_nodes; ++i)
    for (std::size_t k = g.row_offsets[i]; k < g.row_offsets[i + 1]; ++k)
      if (g.col_indices[k] >= i) out.emplace_back(i, g.col_indices[k]);
  return out;
}

// Real-valued operator with the same sparsity discipline as Graph. Represents
// Â (row normalized), the symmetric renormalized adjacency, or Δ̃.
struct SparseOperator {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> row_offsets;
  std::vector<std::size_t> col_indices;
  std::vector<double> values;
};

enum class NormMode { row, symmetric };

// row:       Â = D⁻¹A (zero-degree rows stay empty, i.e. all-zero).
// symmetric: D̃^(−1/2) Ã D̃^(−1/2) with Ã = A + I (self-loops added if absent).
inline SparseOperator normalize_adjacency(const Graph& g, NormMode mode) {
  SparseOperator op;
  op.num_nodes = g.num_nodes;
  op.row_offsets.assign(g.num_nodes + 1, 0);
  if (mode == NormMode::row) {
    op.col_indices = g.col_indices;
    op.row_offsets = g.row_offsets;
    op.values.resize(g.col_indices.size());
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      const double inv = g.degrees[i] > 0 ? 1.0 / static_cast<double>(g.degrees[i]) : 0.0;
      for (std::size_t k = g.row_offsets[i]; k < g.row_offsets[i + 1]; ++k)
        op.values[k] = inv;
    }
    return op;
  }
  // Merge the diagonal into each row, then scale by 1/sqrt(d̃_i d̃_j).
  std::vector<double> dt(g.num_nodes);
  for (std::size_t i = 0; i < g.num_nodes; ++i)
    dt[i] = static_cast<double>(g.degrees[i] + (g.has_edge(i, i) ? 0 : 1));
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    std::vector<std::size_t> cols(g.col_indices.begin() + g.row_offsets[i],
                                  g.col_indices.begin() + g.row_offsets[i + 1]);
    if (!std::binary_search(cols.begin(), cols.end(), i))
      cols.insert(std::lower_bound(cols.begin(), cols.end(), i), i);
    for (std::size_t j : cols) {
      op.col_indices.push_back(j);
      op.values.push_back(1.0 / std::sqrt(dt[i] * dt[j]));
    }
    op.row_offsets[i + 1] = op.col_indices.size();
  }
  return op;
}

// Δ̃ = I − D⁻¹A. Unit diagonal everywhere (including isolated nodes, which
// keeps φ_SE(Z, ÂZ) = ½⟨Z, Δ̃ᵀΔ̃Z⟩ exact on graphs with zero-degree nodes).
inline SparseOperator normalized_laplacian(const Graph& g) {
  SparseOperator op;
  op.num_nodes = g.num_nodes;
  op.row_offsets.assign(g.num_nodes + 1, 0);
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    const double inv = g.degrees[i] > 0 ? 1.0 / static_cast<double>(g.degrees[i]) : 0.0;
    bool wrote_diag = false;
    for (std::size_t k = g.row_offsets[i]; k < g.row_offsets[i + 1]; ++k) {
      const std::size_t j = g.col_indices[k];
      if (!wrote_diag && j > i) {
        op.col_indices.push_back(i);
        op.values.push_back(1.0);
        wrote_diag = true;
      }
      if (j == i) {
        op.col_indices.push_back(i);
        op.values.push_back(1.0 - inv);
        wrote_diag = true;
      } else {
        op.col_indices.push_back(j);
        op.values.push_back(-inv);
      }
    }
    if (!wrote_diag) {
      op.col_indices.push_back(i);
      op.values.push_back(1.0);
    }
    op.row_offsets[i + 1] = op.col_indices.size();
  }
  return op;
}

inline DenseMatrix spmm(const SparseOperator& op, const DenseMatrix& m) {
  require(op.num_nodes == m.rows, "spmm: operator and matrix row counts differ");
  DenseMatrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < op.num_nodes; ++i) {
    double* orow = out.row(i);
    for (std::size_t k = op.row_offsets[i]; k < op.row_offsets[i + 1]; ++k) {
      const double v = op.values[k];
      const double* mrow = m.row(op.col_indices[k]);
      for (std::size_t j = 0; j < m.cols; ++j) orow[j] += v * mrow[j];
    }
  }
  return out;
}

// CSR transpose (counting sort by column); rows of the result stay sorted.
inline SparseOperator transpose(const SparseOperator& op) {
  SparseOperator t;
  t.num_nodes = op.num_nodes;
  t.row_offsets.assign(op.num_nodes + 1, 0);
  t.col_indices.resize(op.col_indices.size());
  t.values.resize(op.values.size());
  for (std::size_t j : op.col_indices) ++t.row_offsets[j + 1];
  for (std::size_t i = 0; i < op.num_nodes; ++i) t.row_offsets[i + 1] += t.row_offsets[i];
  std::vector<std::size_t> fill(t.row_offsets.begin(), t.row_offsets.end() - 1);
  for (std::size_t i = 0; i < op.num_nodes; ++i) {
    for (std::size_t k = op.row_offsets[i]; k < op.row_offsets[i + 1]; ++k) {
      const std::size_t j = op.col_indices[k];
      t.col_indices[fill[j]] = i;
      t.values[fill[j]] = op.values[k];
      ++fill[j];
    }
  }
  return t;
}

inline bool is_connected(const Graph& g) {
  if (g.num_nodes == 0) return true;
  std::vector<char> seen(g.num_nodes, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t k = g.row_offsets[i]; k < g.row_offsets[i + 1]; ++k) {
      const std::size_t j = g.col_indices[k];
      if (!seen[j]) {
        seen[j] = 1;
        ++count;
        stack.push_back(j);
      }
    }
  }
  return count == g.num_nodes;
}

}  // namespace preg
