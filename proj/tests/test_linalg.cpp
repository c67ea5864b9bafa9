#include <random>

#include "doctest.h"
#include "pflow/generate.hpp"
#include "pflow/linalg.hpp"

using namespace pflow;

namespace {

SparseMat from_dense(const MatrixXd& A) {
  SparseMat S(A.rows(), A.cols());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j)
      if (A(i, j) != 0.0) S.insert(i, j) = A(i, j);
  S.makeCompressed();
  return S;
}

template <int D>
SaddleSystem<D> mcf_saddle(const SurfaceMesh<D>& m, double dt) {
  SaddleSystem<D> S;
  S.B = dt * lumped_vertex_measures(m);
  S.N = normal_coupling(m);
  S.Ablk = vector_stiffness(m);
  S.rhs1 = VectorXd::Zero(m.num_vertices());
  S.rhs2 = -(S.Ablk * flatten<D>(m.X));
  return S;
}

}  // namespace

TEST_CASE("sparse lu solves and honors the backward-error contract") {
  MatrixXd A(3, 3);
  A << 4, 1, 0, 1, 3, 1, 0, 1, 2;
  const VectorXd b = VectorXd::LinSpaced(3, 1.0, 3.0);
  const VectorXd x = lu_solve(from_dense(A), b);
  CHECK((A * x - b).cwiseAbs().maxCoeff() < 1e-14);

  MatrixXd R1(2, 2);
  R1 << 1, 2, 2, 4;  // rank one
  CHECK_THROWS_AS(lu_solve(from_dense(R1), VectorXd::Ones(2)), SingularMatrixError);
  try {
    lu_solve(from_dense(R1), VectorXd::Ones(2));
  } catch (const SingularMatrixError& e) {
    CHECK(std::string(e.what()).find("singular_within_tolerance") != std::string::npos);
  }
  CHECK_THROWS_AS(lu_solve(from_dense(A), VectorXd::Ones(2)), std::invalid_argument);
}

TEST_CASE("preconditioned cg on an spd operator") {
  const PolyCurve m = generate_circle(48, 1.0, 0.2);
  const SparseMat A = SparseMat(stiffness(m)) + diagonal_matrix(lumped_vertex_measures(m));
  std::mt19937 rng(1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorXd b(m.num_vertices());
  for (Index k = 0; k < b.size(); ++k) b[k] = gauss(rng);

  const CgResult r = cg_solve(A, b, 1e-12);
  CHECK(r.converged);
  CHECK(r.residual_history.size() == size_t(r.iters) + 1);
  CHECK(r.residual_history.front() == doctest::Approx(b.norm()).epsilon(1e-14));
  CHECK(r.residual_history.back() <= 1e-12 * b.norm());
  CHECK((r.x - lu_solve(A, b)).cwiseAbs().maxCoeff() < 1e-9);

  const CgResult z = cg_solve(A, VectorXd::Zero(b.size()));
  CHECK(z.converged);
  CHECK(z.iters == 0);

  const CgResult capped = cg_solve(A, b, 1e-15, 2);
  CHECK(!capped.converged);
  CHECK(capped.iters == 2);

  MatrixXd indef(2, 2);
  indef << 1, 0, 0, -1;
  CHECK_THROWS_AS(cg_solve(from_dense(indef), VectorXd::Ones(2)), NotSpdError);
}

TEST_CASE("system builder assembles block layouts") {
  SystemBuilder sys(3);
  sys.add(0, 0, 2.0);
  sys.add(0, 1, 1.0);
  sys.add(1, 0, 1.0);
  sys.add(1, 1, 3.0);
  sys.add(2, 2, 1.0);
  sys.add(2, 2, 1.0);  // triplets accumulate
  sys.rhs << 3.0, 4.0, 2.0;
  const VectorXd x = sys.solve();
  CHECK(std::abs(x[0] - 1.0) < 1e-14);
  CHECK(std::abs(x[1] - 1.0) < 1e-14);
  CHECK(std::abs(x[2] - 1.0) < 1e-14);

  // interleaved coupling blocks against a dense mock
  Eigen::Matrix<double, Eigen::Dynamic, 2> N(2, 2);
  N << 1, 2, 3, 4;
  SystemBuilder s2(6);
  s2.add_normal<2>(2, 0, N);      // rows (2 + 2k + c, k)
  s2.add_normal_T<2>(0, 2, N, -1.0);  // rows (k, 2 + 2k + c)
  const MatrixXd M(s2.matrix());
  CHECK(M(2, 0) == 1.0);
  CHECK(M(3, 0) == 2.0);
  CHECK(M(4, 1) == 3.0);
  CHECK(M(5, 1) == 4.0);
  CHECK(M(0, 2) == -1.0);
  CHECK(M(0, 3) == -2.0);
  CHECK(M(1, 4) == -3.0);
  CHECK(M(1, 5) == -4.0);

  SystemBuilder s3(4);
  VectorXd d(2);
  d << 5.0, 7.0;
  s3.add_diag(1, 1, d, 2.0);
  const MatrixXd M3(s3.matrix());
  CHECK(M3(1, 1) == 10.0);
  CHECK(M3(2, 2) == 14.0);
}

TEST_CASE("saddle solver: direct and schur complement agree") {
  auto compare = [](const auto& m, double dt) {
    constexpr int D = std::decay_t<decltype(m)>::dim;
    const SaddleSystem<D> S = mcf_saddle(m, dt);
    const auto direct = saddle_solve<D>(S, SaddleMethod::direct);
    const auto schur = saddle_solve<D>(S, SaddleMethod::schur_cg, 1e-14);
    CHECK(schur.cg_iters > 0);
    const double xs = 1.0 + direct.dX.cwiseAbs().maxCoeff();
    const double ks = 1.0 + direct.kappa.cwiseAbs().maxCoeff();
    CHECK((direct.dX - schur.dX).cwiseAbs().maxCoeff() < 1e-8 * xs);
    CHECK((direct.kappa - schur.kappa).cwiseAbs().maxCoeff() < 1e-8 * ks);
  };
  compare(generate_circle(24, 1.0, 0.1), 1e-3);
  compare(generate_icosphere(1, 1.0), 1e-3);
}

TEST_CASE("saddle solver with vanishing (1,1) block") {
  const PolyCurve m = generate_circle(16, 1.0, 0.0);
  SaddleSystem<2> S = mcf_saddle(m, 1.0);
  S.B.setZero();  // pure constraint system: the curvature problem
  const auto sol = saddle_solve<2>(S, SaddleMethod::direct);
  // dX = 0 and kappa plays the curvature multiplier on a stationary polygon
  CHECK(sol.dX.cwiseAbs().maxCoeff() < 1e-10);
  const double R = std::cos(std::numbers::pi / 16.0);
  for (Index k = 0; k < m.num_vertices(); ++k)
    CHECK(std::abs(sol.kappa[k] - 1.0 / R) < 1e-10);
  CHECK_THROWS_AS(saddle_solve<2>(S, SaddleMethod::schur_cg), NotSpdError);
}

TEST_CASE("saddle solver rejects inconsistent shapes") {
  const PolyCurve m = generate_circle(8, 1.0, 0.0);
  SaddleSystem<2> S = mcf_saddle(m, 1e-2);
  S.rhs1 = VectorXd::Zero(3);
  CHECK_THROWS_AS(saddle_solve<2>(S, SaddleMethod::direct), std::invalid_argument);
}
