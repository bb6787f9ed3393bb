#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <preg/reg.hpp>

using namespace preg;

namespace {

Graph path3() { return build_graph({{0, 1}, {1, 2}}, 3); }

DenseMatrix path_z() {
  DenseMatrix z(3, 2);
  z(0, 0) = 1;
  z(1, 1) = 1;
  z(2, 0) = 1;
  return z;
}

DenseMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  DenseMatrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

Graph random_connected(std::size_t n, double p, Rng& rng) {
  for (;;) {
    EdgeList edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.uniform() < p) edges.emplace_back(i, j);
    Graph g = build_graph(edges, n);
    if (is_connected(g)) return g;
  }
}

// Central finite differences of a scalar functional of Z against an analytic dZ.
double fd_check_z(const std::function<double(const DenseMatrix&)>& f, const DenseMatrix& z0,
                  const DenseMatrix& analytic, double eps = 1e-6) {
  double worst = 0.0;
  DenseMatrix z = z0;
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    const double saved = z.data[i];
    z.data[i] = saved + eps;
    const double fp = f(z);
    z.data[i] = saved - eps;
    const double fm = f(z);
    z.data[i] = saved;
    const double fd = (fp - fm) / (2 * eps);
    const double an = analytic.data[i];
    worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}));
  }
  return worst;
}

}  // namespace

TEST_CASE("phi squared error on the path-graph example") {
  const DenseMatrix z = path_z();
  const SparseOperator ahat = normalize_adjacency(path3(), NormMode::row);
  const DenseMatrix zprop = spmm(ahat, z);
  const PhiResult r = phi(PhiVariant::squared_error, z, zprop);
  CHECK(r.value == 3.0);
}

TEST_CASE("phi cross entropy of uniform rows is the summed entropy") {
  const DenseMatrix z(3, 2);
  const PhiResult r = phi(PhiVariant::cross_entropy, z, z);
  CHECK(r.value == Catch::Approx(3.0 * std::log(2.0)).margin(1e-14));
}

TEST_CASE("phi KL of identical arguments is exactly zero") {
  Rng rng(1);
  const DenseMatrix z = random_matrix(6, 4, rng);
  CHECK(phi(PhiVariant::kl_divergence, z, z).value == 0.0);
  CHECK(phi(PhiVariant::squared_error, z, z).value == 0.0);
}

TEST_CASE("phi rejects shape mismatches") {
  CHECK_THROWS_AS(phi(PhiVariant::squared_error, DenseMatrix(2, 2), DenseMatrix(3, 2)),
                  std::invalid_argument);
  CHECK_THROWS_AS(phi(PhiVariant::cross_entropy, DenseMatrix(0, 0), DenseMatrix(0, 0)),
                  std::invalid_argument);
}

TEST_CASE("cross entropy decomposes into KL plus entropy") {
  Rng rng(2);
  const DenseMatrix z = random_matrix(10, 5, rng);
  const DenseMatrix zp = random_matrix(10, 5, rng);
  const double ce = phi(PhiVariant::cross_entropy, z, zp).value;
  const double kl = phi(PhiVariant::kl_divergence, z, zp).value;
  const DenseMatrix p = softmax_rows(z);
  double entropy = 0.0;
  for (double v : p.data) entropy -= v * clamped_log(v);
  CHECK(ce == Catch::Approx(kl + entropy).margin(1e-10));
}

TEST_CASE("phi gradients match finite differences in both arguments") {
  Rng rng(3);
  const DenseMatrix z0 = random_matrix(5, 3, rng);
  const DenseMatrix zp0 = random_matrix(5, 3, rng);
  for (PhiVariant v :
       {PhiVariant::squared_error, PhiVariant::cross_entropy, PhiVariant::kl_divergence}) {
    const PhiResult r = phi(v, z0, zp0);
    const double e1 =
        fd_check_z([&](const DenseMatrix& z) { return phi(v, z, zp0).value; }, z0, r.dZ);
    const double e2 =
        fd_check_z([&](const DenseMatrix& zp) { return phi(v, z0, zp).value; }, zp0, r.dZprop);
    INFO("variant " << static_cast<int>(v));
    CHECK(e1 < 1e-6);
    CHECK(e2 < 1e-6);
  }
}

TEST_CASE("preg_loss on the path graph") {
  const Graph g = path3();
  const SparseOperator op = normalize_adjacency(g, NormMode::row);
  const DenseMatrix z = path_z();

  SECTION("full unmask set divides by the eligible count") {
    const RegResult r = preg_loss(g, op, z, PhiVariant::squared_error, eligible_nodes(g));
    CHECK(r.value == 1.0);
  }
  SECTION("single-node unmask set") {
    const RegResult r = preg_loss(g, op, z, PhiVariant::squared_error, {1});
    CHECK(r.value == 1.0);  // ½‖[1,0]−[0,1]‖²
  }
  SECTION("empty unmask set gives zero value and gradient") {
    const RegResult r = preg_loss(g, op, z, PhiVariant::cross_entropy, {});
    CHECK(r.value == 0.0);
    for (double v : r.dZ.data) CHECK(v == 0.0);
  }
  SECTION("isolated or out-of-range unmask nodes are rejected") {
    const Graph h = build_graph({{0, 1}}, 3);  // node 2 isolated
    const SparseOperator oph = normalize_adjacency(h, NormMode::row);
    CHECK_THROWS_AS(preg_loss(h, oph, z, PhiVariant::squared_error, {2}),
                    std::invalid_argument);
    CHECK_THROWS_AS(preg_loss(h, oph, z, PhiVariant::squared_error, {7}),
                    std::invalid_argument);
  }
}

TEST_CASE("preg_loss gradient matches finite differences") {
  Rng rng(5);
  const Graph g = random_connected(8, 0.4, rng);
  const SparseOperator op = normalize_adjacency(g, NormMode::row);
  const DenseMatrix z0 = random_matrix(8, 3, rng);
  const std::vector<std::size_t> full = eligible_nodes(g);
  const std::vector<std::size_t> partial{0, 2, 5};
  for (PhiVariant v :
       {PhiVariant::squared_error, PhiVariant::cross_entropy, PhiVariant::kl_divergence}) {
    for (const auto& unmask : {full, partial}) {
      const RegResult r = preg_loss(g, op, z0, v, unmask);
      const double err = fd_check_z(
          [&](const DenseMatrix& z) { return preg_loss(g, op, z, v, unmask).value; }, z0, r.dZ);
      INFO("variant " << static_cast<int>(v) << " unmask size " << unmask.size());
      CHECK(err < 1e-6);
    }
  }
}

TEST_CASE("constant matrices are stationary for P-reg") {
  // All-entries-equal Z: propagated rows equal original rows up to rounding,
  // softmaxes are exactly uniform, so SE/KL vanish and the CE gradient dies.
  Rng rng(6);
  const Graph g = random_connected(9, 0.4, rng);
  const SparseOperator op = normalize_adjacency(g, NormMode::row);
  const auto unmask = eligible_nodes(g);
  for (double c : {0.0, 1.7, -3.0}) {
    DenseMatrix z(9, 3, c);
    CHECK(preg_loss(g, op, z, PhiVariant::squared_error, unmask).value < 1e-20);
    CHECK(preg_loss(g, op, z, PhiVariant::kl_divergence, unmask).value < 1e-20);
    const RegResult ce = preg_loss(g, op, z, PhiVariant::cross_entropy, unmask);
    CHECK(max_abs(ce.dZ) < 1e-10);
  }
}

TEST_CASE("laplacian regularizer on the path graph") {
  const RegResult r = laplacian_reg(path3(), path_z());
  CHECK(r.value == 4.0);
}

TEST_CASE("laplacian regularizer vanishes on constant rows") {
  Rng rng(7);
  const Graph g = random_connected(7, 0.5, rng);
  DenseMatrix z(7, 3);
  for (std::size_t i = 0; i < 7; ++i) {
    z(i, 0) = 0.3;
    z(i, 1) = -2.0;
    z(i, 2) = 5.5;
  }
  const RegResult r = laplacian_reg(g, z);
  CHECK(r.value == 0.0);
  for (double v : r.dZ.data) CHECK(v == 0.0);
}

TEST_CASE("laplacian regularizer equals the unnormalized quadratic form") {
  Rng rng(8);
  const Graph g = random_connected(10, 0.35, rng);
  const DenseMatrix z = random_matrix(10, 4, rng);
  const RegResult r = laplacian_reg(g, z);
  CHECK(r.value >= 0.0);
  // Dense oracle: tr(Zᵀ(D−A)Z).
  double trace = 0.0;
  for (std::size_t c = 0; c < z.cols; ++c)
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      double lz = static_cast<double>(g.degrees[i]) * z(i, c);
      for (std::size_t k = g.row_offsets[i]; k < g.row_offsets[i + 1]; ++k)
        lz -= z(g.col_indices[k], c);
      trace += z(i, c) * lz;
    }
  CHECK(r.value == Catch::Approx(trace).epsilon(1e-10));

  const double err = fd_check_z(
      [&](const DenseMatrix& zz) { return laplacian_reg(g, zz).value; }, z, r.dZ);
  CHECK(err < 1e-6);
}

TEST_CASE("smooth_labels") {
  DenseMatrix y(2, 4);
  y(0, 0) = 1.0;
  y(1, 2) = 1.0;
  const DenseMatrix s = smooth_labels(y, 0.1);
  CHECK(s(0, 0) == Catch::Approx(0.925).margin(1e-15));
  CHECK(s(0, 1) == Catch::Approx(0.025).margin(1e-15));
  CHECK(s(0, 2) == Catch::Approx(0.025).margin(1e-15));
  CHECK(s(0, 3) == Catch::Approx(0.025).margin(1e-15));
  for (std::size_t i = 0; i < 2; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 4; ++j) sum += s(i, j);
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
  }
  CHECK(smooth_labels(y, 0.0).data == y.data);
  CHECK_THROWS_AS(smooth_labels(y, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(smooth_labels(y, -0.1), std::invalid_argument);
  DenseMatrix bad(1, 2);
  bad(0, 0) = 0.5;
  CHECK_THROWS_AS(smooth_labels(bad, 0.1), std::invalid_argument);
}

TEST_CASE("confidence_penalty values") {
  SECTION("fifty-fifty single node") {
    DenseMatrix p(1, 2, 0.5);
    const RegResult r = confidence_penalty(p, {0});
    CHECK(r.value == Catch::Approx(-std::log(2.0)).margin(1e-14));
  }
  SECTION("uniform rows give -n log C") {
    const std::size_t n = 4, C = 5;
    DenseMatrix p(n, C, 1.0 / C);
    std::vector<std::size_t> mask;
    for (std::size_t i = 0; i < n; ++i) mask.push_back(i);
    const RegResult r = confidence_penalty(p, mask);
    CHECK(r.value == Catch::Approx(-static_cast<double>(n) * std::log(5.0)).margin(1e-12));
  }
  SECTION("near one-hot rows give near-zero entropy") {
    DenseMatrix p(1, 3);
    p(0, 0) = 1.0 - 2e-12;
    p(0, 1) = 1e-12;
    p(0, 2) = 1e-12;
    const RegResult r = confidence_penalty(p, {0});
    CHECK(std::abs(r.value) < 1e-9);
  }
  SECTION("gradient chains through the softmax") {
    Rng rng(9);
    const DenseMatrix z0 = random_matrix(6, 4, rng);
    const std::vector<std::size_t> mask{0, 3, 5};
    const RegResult r = confidence_penalty(softmax_rows(z0), mask);
    const double err = fd_check_z(
        [&](const DenseMatrix& z) { return confidence_penalty(softmax_rows(z), mask).value; },
        z0, r.dZ);
    CHECK(err < 1e-6);
  }
  SECTION("mask out of range") {
    DenseMatrix p(2, 2, 0.5);
    CHECK_THROWS_AS(confidence_penalty(p, {5}), std::invalid_argument);
  }
}

TEST_CASE("anneal_mu closed form") {
  CHECK(anneal_mu(0.25, 1) == 0.25);
  CHECK(anneal_mu(0.25, 2) == Catch::Approx(0.5).margin(1e-15));
  CHECK(anneal_mu(0.5, 1000000) == Catch::Approx(1.0).margin(1e-5));
  CHECK_THROWS_AS(anneal_mu(0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(anneal_mu(1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(anneal_mu(0.5, 0), std::invalid_argument);
}

TEST_CASE("anneal_mu is nondecreasing in the epoch") {
  double prev = 0.0;
  for (std::size_t e = 1; e <= 50; ++e) {
    const double v = anneal_mu(0.3, e);
    CHECK(v >= prev);
    CHECK(v < 1.0);
    prev = v;
  }
}

TEST_CASE("threshold_hinge") {
  const HingeResult below = threshold_hinge(0.3, 0.5);
  CHECK(below.value == 0.0);
  CHECK(below.grad_factor == 0.0);
  const HingeResult above = threshold_hinge(0.8, 0.5);
  CHECK(above.value == Catch::Approx(0.3).margin(1e-15));
  CHECK(above.grad_factor == 1.0);
  const HingeResult at = threshold_hinge(0.5, 0.5);
  CHECK(at.value == 0.0);
  CHECK(at.grad_factor == 0.0);  // subgradient 0 at the kink
  CHECK(threshold_hinge(0.7, 0.0).value == 0.7);
  CHECK_THROWS_AS(threshold_hinge(0.5, -1.0), std::invalid_argument);
}

TEST_CASE("eligible_nodes lists degree-positive nodes") {
  const Graph g = build_graph({{0, 1}, {3, 4}}, 5);
  CHECK(eligible_nodes(g) == std::vector<std::size_t>{0, 1, 3, 4});
}
