#include "bjmd/rng.hpp"
#include "bjmd/simplex_qp.hpp"

#include <catch2/catch.hpp>

#include <cmath>
#include <vector>

using namespace bjmd;

namespace {

ColumnProblem random_problem(int k, std::uint64_t seed, double alpha0 = 1.1,
                             double sigma2 = 1.0) {
  Rng rng(seed);
  Matrix w(2 * k + 1, k);
  for (int i = 0; i < w.rows(); ++i)
    for (int j = 0; j < k; ++j) w(i, j) = rng.normal();
  Vector x(w.rows());
  for (int i = 0; i < x.size(); ++i) x[i] = rng.normal();

  ColumnProblem p;
  p.Q = w.transpose() * w;
  p.Q = 0.5 * (p.Q + p.Q.transpose());
  p.b = w.transpose() * x;
  p.alpha = Vector::Constant(k, sigma2 * (alpha0 - 1.0));
  p.scale = sigma2;
  return p;
}

// Exhaustive search over the interior grid of the simplex with per-coordinate
// resolution `step`; recursion carries the partial coordinate prefix.
void grid_recurse(const ColumnProblem& p, Vector& h, int depth, int remaining_ticks,
                  double step, double& best) {
  const int k = p.K();
  if (depth == k - 1) {
    if (remaining_ticks < 1) return;
    h[depth] = remaining_ticks * step;
    const double obj = column_objective(p, h);
    if (obj < best) best = obj;
    return;
  }
  for (int t = 1; t <= remaining_ticks - (k - 1 - depth); ++t) {
    h[depth] = t * step;
    grid_recurse(p, h, depth + 1, remaining_ticks - t, step, best);
  }
}

double grid_search_minimum(const ColumnProblem& p, double step) {
  Vector h(p.K());
  double best = std::numeric_limits<double>::infinity();
  grid_recurse(p, h, 0, static_cast<int>(std::lround(1.0 / step)), step, best);
  return best;
}

}  // namespace

TEST_CASE("kkt_residual is zero at the trivial K=1 point") {
  ColumnProblem p;
  p.Q = Matrix::Ones(1, 1);
  p.b = Vector::Ones(1);
  p.alpha = Vector::Zero(1);
  IpIterate it{Vector::Ones(1), 0.0, Vector::Zero(1)};
  REQUIRE(kkt_residual(p, it).norm() == Approx(0.0).margin(1e-15));
}

TEST_CASE("kkt_residual is zero at the hand-solved symmetric K=2 point") {
  // Q = I, b = (1,1), alpha = 0: h = (1/2, 1/2), s = 0, mu = -1/2 satisfies
  // Qh - mu 1 - b - s = (1/2 + 1/2 - 1, 1/2 + 1/2 - 1) = 0.
  ColumnProblem p;
  p.Q = Matrix::Identity(2, 2);
  p.b = Vector::Ones(2);
  p.alpha = Vector::Zero(2);
  IpIterate it{Vector::Constant(2, 0.5), -0.5, Vector::Zero(2)};
  REQUIRE(kkt_residual(p, it).norm() == Approx(0.0).margin(1e-15));
}

TEST_CASE("kkt_residual matches an independent term-by-term recomputation") {
  Rng rng(7);
  const ColumnProblem p = random_problem(3, 77);
  IpIterate it;
  it.h = rng.dirichlet(Vector::Constant(3, 2.0));
  it.mu = rng.normal();
  it.s = Vector::Constant(3, 0.0);
  for (int i = 0; i < 3; ++i) it.s[i] = rng.uniform(0.1, 1.0);

  const Vector r = kkt_residual(p, it);
  for (int i = 0; i < 3; ++i) {
    double row = -it.mu - p.b[i] - it.s[i];
    for (int j = 0; j < 3; ++j) row += p.Q(i, j) * it.h[j];
    REQUIRE(r[i] == Approx(row).margin(1e-14));
    REQUIRE(r[4 + i] == Approx(it.h[i] * it.s[i] - p.alpha[i]).margin(1e-14));
  }
  REQUIRE(r[3] == Approx(it.h.sum() - 1.0).margin(1e-14));
}

TEST_CASE("newton_direction vanishes at an exact KKT point") {
  ColumnProblem p;
  p.Q = Matrix::Identity(2, 2);
  p.b = Vector::Ones(2);
  p.alpha = Vector::Constant(2, 0.25);
  // Symmetric problem: h = (1/2, 1/2); s_k = alpha/h = 1/2; first KKT row
  // gives mu = 1/2 - 1 - 1/2 = -1.
  IpIterate it{Vector::Constant(2, 0.5), -1.0, Vector::Constant(2, 0.5)};
  REQUIRE(kkt_residual(p, it).norm() == Approx(0.0).margin(1e-14));
  REQUIRE(newton_direction(p, it).norm() == Approx(0.0).margin(1e-12));
}

TEST_CASE("newton_direction restores the linear constraint in one step") {
  ColumnProblem p;
  p.Q = Matrix::Ones(1, 1);
  p.b = Vector::Ones(1);
  p.alpha = Vector::Zero(1);
  IpIterate it{Vector::Constant(1, 0.5), 0.0, Vector::Constant(1, 1e-3)};
  const Vector d = newton_direction(p, it);
  REQUIRE(it.h[0] + d[0] == Approx(1.0).margin(1e-14));
}

TEST_CASE("newton_direction solves the KKT system to 1e-10") {
  Rng rng(99);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const int k = 2 + static_cast<int>(seed % 3);
    const ColumnProblem p = random_problem(k, seed * 13);
    IpIterate it = init_interior(k, p.alpha);
    for (int i = 0; i < k; ++i) it.h[i] += 0.1 * rng.uniform();
    it.h /= it.h.sum();

    const Vector d = newton_direction(p, it);
    // Rebuild the Jacobian independently and check J d = -F.
    const int n = 2 * k + 1;
    Matrix jac = Matrix::Zero(n, n);
    jac.topLeftCorner(k, k) = p.Q;
    for (int i = 0; i < k; ++i) {
      jac(i, k) = -1.0;
      jac(i, k + 1 + i) = -1.0;
      jac(k, i) = 1.0;
      jac(k + 1 + i, i) = it.s[i];
      jac(k + 1 + i, k + 1 + i) = it.h[i];
    }
    REQUIRE((jac * d + kkt_residual(p, it)).norm() < 1e-10);
  }
}

TEST_CASE("init_interior is uniform with floored duals") {
  const Vector alpha = Vector::Zero(4);
  const IpIterate it = init_interior(4, alpha);
  for (int i = 0; i < 4; ++i) {
    REQUIRE(it.h[i] == Approx(0.25));
    REQUIRE(it.s[i] == Approx(1e-3));
  }
  REQUIRE(it.mu == 0.0);

  const Vector alpha2 = Vector::Constant(4, 0.5);
  const IpIterate it2 = init_interior(4, alpha2);
  for (int i = 0; i < 4; ++i) {
    REQUIRE(it2.h[i] > 0.0);
    REQUIRE(it2.s[i] == Approx(2.0));  // alpha * K
  }
}

TEST_CASE("solve_column returns the unique point for K=1") {
  SolverConfig cfg;
  const Matrix w = Matrix::Ones(3, 1);
  const Vector x = Vector::Ones(3);
  const ColumnResult r = solve_column(w, x, 1.0, Vector::Ones(1), nullptr, cfg);
  REQUIRE(r.h.size() == 1);
  REQUIRE(r.h[0] == Approx(1.0));
  REQUIRE(r.converged);
}

TEST_CASE("solve_problem resolves the symmetric problem to the midpoint") {
  SolverConfig cfg;
  ColumnProblem p;
  p.Q = Matrix::Identity(2, 2);
  p.b = Vector::Ones(2);
  p.alpha = Vector::Constant(2, 0.1);
  const ColumnResult r = solve_problem(p, nullptr, cfg);
  REQUIRE(r.h[0] == Approx(0.5).margin(1e-9));
  REQUIRE(r.h[1] == Approx(0.5).margin(1e-9));
  REQUIRE(r.converged);
}

TEST_CASE("solve_problem matches dense grid search on random K=3 problems") {
  SolverConfig cfg;
  for (std::uint64_t seed = 201; seed < 226; ++seed) {
    const ColumnProblem p = random_problem(3, seed);
    const ColumnResult r = solve_problem(p, nullptr, cfg);
    const double grid_min = grid_search_minimum(p, 0.005);
    REQUIRE(r.objective <= grid_min + 1e-4);
    REQUIRE(r.kkt_norm < 1e-6);
    REQUIRE(r.h.sum() == Approx(1.0).margin(1e-8));
  }
}

TEST_CASE("accepted iterates keep a monotone subproblem objective") {
  SolverConfig cfg;
  for (std::uint64_t seed = 301; seed < 311; ++seed) {
    const int k = 2 + static_cast<int>(seed % 4);
    const ColumnProblem p = random_problem(k, seed);
    const ColumnResult r = solve_problem(p, nullptr, cfg);
    // The solver guarantees non-increase step by step; the returned point
    // must therefore not be worse than the uniform start.
    const IpIterate start = init_interior(k, p.alpha);
    REQUIRE(r.objective <= column_objective(p, start.h) + 1e-9);
    REQUIRE((r.h.array() > 0.0).all());
  }
}

TEST_CASE("solution is invariant under coordinate permutation") {
  SolverConfig cfg;
  const ColumnProblem p = random_problem(4, 555);
  const ColumnResult r = solve_problem(p, nullptr, cfg);

  const std::vector<int> perm = {2, 3, 1, 0};
  ColumnProblem q;
  q.Q.resize(4, 4);
  q.b.resize(4);
  q.alpha.resize(4);
  for (int i = 0; i < 4; ++i) {
    q.b[i] = p.b[perm[i]];
    q.alpha[i] = p.alpha[perm[i]];
    for (int j = 0; j < 4; ++j) q.Q(i, j) = p.Q(perm[i], perm[j]);
  }
  const ColumnResult rp = solve_problem(q, nullptr, cfg);
  for (int i = 0; i < 4; ++i) REQUIRE(rp.h[i] == Approx(r.h[perm[i]]).margin(1e-8));
}

TEST_CASE("folding sigma2 into alpha matches dividing the quadratic term") {
  SolverConfig cfg;
  const double sigma2 = 3.7;
  const double alpha0 = 1.3;
  const ColumnProblem p = random_problem(3, 808, alpha0, sigma2);

  ColumnProblem scaled;
  scaled.Q = p.Q / sigma2;
  scaled.b = p.b / sigma2;
  scaled.alpha = Vector::Constant(3, alpha0 - 1.0);  // recomputed at sigma2 = 1
  scaled.scale = 1.0;

  const ColumnResult a = solve_problem(p, nullptr, cfg);
  const ColumnResult b = solve_problem(scaled, nullptr, cfg);
  REQUIRE((a.h - b.h).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("hitting the iteration cap returns the best iterate unconverged") {
  SolverConfig cfg;
  cfg.ip_max_iters = 1;
  const ColumnProblem p = random_problem(4, 909);
  const ColumnResult r = solve_problem(p, nullptr, cfg);
  REQUIRE_FALSE(r.converged);
  REQUIRE(r.h.sum() == Approx(1.0).margin(1e-8));
  REQUIRE((r.h.array() > 0.0).all());
}

TEST_CASE("check_column_problem rejects an asymmetric Q") {
  ColumnProblem p = random_problem(3, 1001);
  p.Q(0, 1) += 1e-6;
  REQUIRE_THROWS_AS(check_column_problem(p), InvariantViolationError);
}
