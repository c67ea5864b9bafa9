#pragma once

#include <Eigen/SparseLU>

#include <stdexcept>
#include <string>
#include <vector>

#include "pflow/assembly.hpp"

namespace pflow {

struct LinalgError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularMatrixError : LinalgError {
  using LinalgError::LinalgError;
};
struct NotSpdError : LinalgError {
  using LinalgError::LinalgError;
};

inline double inf_norm_rows(const SparseMat& A) {
  VectorXd s = VectorXd::Zero(A.rows());
  for (int o = 0; o < A.outerSize(); ++o)
    for (SparseMat::InnerIterator it(A, o); it; ++it) s[it.row()] += std::abs(it.value());
  return A.rows() ? s.maxCoeff() : 0.0;
}

// sparse LU with a backward-error acceptance test; near-singular systems are
// rejected rather than returning garbage
inline VectorXd lu_solve(const SparseMat& A, const VectorXd& b) {
  if (A.rows() != A.cols() || A.rows() != b.size())
    throw std::invalid_argument("lu_solve: shape mismatch");
  Eigen::SparseLU<SparseMat> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success)
    throw SingularMatrixError("lu_solve: singular_within_tolerance (factorization failed)");
  VectorXd x = lu.solve(b);
  const double resid = (b - A * x).cwiseAbs().maxCoeff();
  const double scale = inf_norm_rows(A) * x.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff();
  if (!(resid <= 1e-10 * scale))
    throw SingularMatrixError("lu_solve: singular_within_tolerance (residual " +
                              std::to_string(resid) + " vs scale " + std::to_string(scale) + ")");
  return x;
}

struct CgResult {
  VectorXd x;
  Index iters = 0;
  bool converged = false;
  std::vector<double> residual_history;
};

// Jacobi-preconditioned CG; throws NotSpdError on nonpositive curvature
inline CgResult cg_solve(const SparseMat& A, const VectorXd& b, double tol_rel = 1e-12,
                         Index maxit = 0) {
  if (A.rows() != A.cols() || A.rows() != b.size())
    throw std::invalid_argument("cg_solve: shape mismatch");
  const Index n = A.rows();
  if (maxit <= 0) maxit = 4 * n + 100;
  VectorXd dinv(n);
  {
    VectorXd d = A.diagonal();
    for (Index i = 0; i < n; ++i) dinv[i] = d[i] > 0 ? 1.0 / d[i] : 1.0;
  }
  CgResult out;
  out.x = VectorXd::Zero(n);
  VectorXd r = b;
  const double bnorm = b.norm();
  const double stop = tol_rel * (bnorm > 0 ? bnorm : 1.0);
  out.residual_history.push_back(r.norm());
  if (out.residual_history.back() <= stop) {
    out.converged = true;
    return out;
  }
  VectorXd z = dinv.asDiagonal() * r;
  VectorXd p = z;
  double rz = r.dot(z);
  for (Index it = 0; it < maxit; ++it) {
    const VectorXd Ap = A * p;
    const double pAp = p.dot(Ap);
    if (!(pAp > 0)) throw NotSpdError("cg_solve: nonpositive curvature, matrix not SPD");
    const double alpha = rz / pAp;
    out.x += alpha * p;
    r -= alpha * Ap;
    out.iters = it + 1;
    out.residual_history.push_back(r.norm());
    if (r.norm() <= stop) {
      out.converged = true;
      return out;
    }
    z = dinv.asDiagonal() * r;
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  return out;
}

// triplet-based builder for block-structured sparse systems
struct SystemBuilder {
  Index n;
  std::vector<Triplet> trip;
  VectorXd rhs;

  explicit SystemBuilder(Index size) : n(size), rhs(VectorXd::Zero(size)) {}

  void add(Index r, Index c, double v) { trip.emplace_back(int(r), int(c), v); }

  void add_block(Index r0, Index c0, const SparseMat& A, double scale = 1.0) {
    for (int o = 0; o < A.outerSize(); ++o)
      for (SparseMat::InnerIterator it(A, o); it; ++it)
        trip.emplace_back(int(r0 + it.row()), int(c0 + it.col()), scale * it.value());
  }

  void add_diag(Index r0, Index c0, const VectorXd& d, double scale = 1.0) {
    for (Index i = 0; i < d.size(); ++i) trip.emplace_back(int(r0 + i), int(c0 + i), scale * d[i]);
  }

  // scalar-to-vector coupling rows (D*k+c, k) with value N(k,c)
  template <int D>
  void add_normal(Index r0, Index c0, const Eigen::Matrix<double, Eigen::Dynamic, D>& N,
                  double scale = 1.0) {
    for (Index k = 0; k < N.rows(); ++k)
      for (int c = 0; c < D; ++c) trip.emplace_back(int(r0 + D * k + c), int(c0 + k), scale * N(k, c));
  }

  // vector-to-scalar rows (k, D*k+c) with value N(k,c)
  template <int D>
  void add_normal_T(Index r0, Index c0, const Eigen::Matrix<double, Eigen::Dynamic, D>& N,
                    double scale = 1.0) {
    for (Index k = 0; k < N.rows(); ++k)
      for (int c = 0; c < D; ++c) trip.emplace_back(int(r0 + k), int(c0 + D * k + c), scale * N(k, c));
  }

  SparseMat matrix() const {
    SparseMat A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    return A;
  }

  VectorXd solve() const { return lu_solve(matrix(), rhs); }
};

enum class SaddleMethod { direct, schur_cg };

inline SaddleMethod parse_saddle_method(const std::string& s) {
  if (s == "direct") return SaddleMethod::direct;
  if (s == "schur_cg") return SaddleMethod::schur_cg;
  throw std::invalid_argument("unknown solver method '" + s + "'");
}

// saddle point system
//   [ B   -N^T ] [kappa]   [rhs1]
//   [ N   Ablk ] [dX   ] = [rhs2]
// with B a diagonal K x K block, N the normal coupling, Ablk a DK x DK block
template <int D>
struct SaddleSystem {
  VectorXd B;                                       // diagonal entries
  Eigen::Matrix<double, Eigen::Dynamic, D> N;       // K x D
  SparseMat Ablk;                                   // DK x DK
  VectorXd rhs1, rhs2;
};

template <int D>
struct SaddleSolution {
  VectorXd kappa, dX;
  Index cg_iters = 0;
};

template <int D>
SaddleSolution<D> saddle_solve(const SaddleSystem<D>& S, SaddleMethod method,
                               double cg_tol = 1e-12) {
  const Index K = S.B.size();
  const Index nV = D * K;
  if (S.N.rows() != K || S.Ablk.rows() != nV || S.rhs1.size() != K || S.rhs2.size() != nV)
    throw std::invalid_argument("saddle_solve: shape mismatch");
  SaddleSolution<D> sol;
  if (method == SaddleMethod::direct) {
    SystemBuilder sys(K + nV);
    sys.add_diag(0, 0, S.B);
    sys.template add_normal_T<D>(0, K, S.N, -1.0);
    sys.template add_normal<D>(K, 0, S.N);
    sys.add_block(K, K, S.Ablk);
    sys.rhs.head(K) = S.rhs1;
    sys.rhs.tail(nV) = S.rhs2;
    const VectorXd x = sys.solve();
    sol.kappa = x.head(K);
    sol.dX = x.tail(nV);
    return sol;
  }
  // Schur complement in dX: (Ablk + N B^{-1} N^T) dX = rhs2 - N B^{-1} rhs1,
  // then kappa = B^{-1}(rhs1 + N^T dX); requires B > 0
  for (Index k = 0; k < K; ++k)
    if (!(S.B[k] > 0))
      throw NotSpdError("saddle_solve: schur_cg needs positive diagonal (1,1) block");
  SparseMat Schur = S.Ablk;
  {
    std::vector<Triplet> t;
    t.reserve(size_t(K) * D * D);
    for (Index k = 0; k < K; ++k)
      for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b)
          t.emplace_back(int(D * k + a), int(D * k + b), S.N(k, a) * S.N(k, b) / S.B[k]);
    SparseMat NBN(nV, nV);
    NBN.setFromTriplets(t.begin(), t.end());
    Schur += NBN;
  }
  VectorXd rhs = S.rhs2 - apply_normal_coupling<D>(S.N, VectorXd(S.rhs1.cwiseQuotient(S.B)));
  CgResult cg = cg_solve(Schur, rhs, cg_tol);
  if (!cg.converged) throw LinalgError("saddle_solve: schur_cg did not converge");
  sol.dX = cg.x;
  sol.cg_iters = cg.iters;
  sol.kappa = (S.rhs1 + apply_normal_coupling_T<D>(S.N, sol.dX)).cwiseQuotient(S.B);
  return sol;
}

}  // namespace pflow
