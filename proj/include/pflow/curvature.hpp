#pragma once

#include <Eigen/SparseCholesky>

#include "pflow/linalg.hpp"

namespace pflow {

// nodal curvature vector from the lumped Laplace identity:
// kappa_k = -(A X)_k / M_kk
template <int D>
Eigen::Matrix<double, Eigen::Dynamic, D> lb_curvature_vector(const SurfaceMesh<D>& m) {
  const VectorXd mk = lumped_vertex_measures(m);
  Eigen::Matrix<double, Eigen::Dynamic, D> kv = -stiffness_times_positions(m);
  kv.array().colwise() /= mk.array();
  return kv;
}

template <int D>
struct BgnCurvature {
  VectorXd kappa;                                   // scalar curvature
  Eigen::Matrix<double, Eigen::Dynamic, D> correction;  // tangential position correction
};

// scalar curvature defined through the variational identity
// <kappa nu, eta>^h + <grad X, grad eta> = 0 together with a position
// correction orthogonal to the weighted normals; unique under the
// vertex-normal spanning assumption
template <int D>
BgnCurvature<D> bgn_curvature(const SurfaceMesh<D>& m) {
  const Index K = m.num_vertices();
  SaddleSystem<D> S;
  S.B = VectorXd::Zero(K);
  S.N = normal_coupling(m);
  S.Ablk = vector_stiffness(m);
  S.rhs1 = VectorXd::Zero(K);
  S.rhs2 = -flatten<D>(stiffness_times_positions(m));
  const SaddleSolution<D> sol = saddle_solve<D>(S, SaddleMethod::direct);
  return {sol.kappa, unflatten<D>(sol.dX)};
}

enum class WeingartenVariant { wh, whsym, heine04, nabsomega };

inline WeingartenVariant parse_weingarten(const std::string& s) {
  if (s == "wh") return WeingartenVariant::wh;
  if (s == "whsym") return WeingartenVariant::whsym;
  if (s == "heine04") return WeingartenVariant::heine04;
  if (s == "nabsomega") return WeingartenVariant::nabsomega;
  throw std::invalid_argument("unknown weingarten variant '" + s + "'");
}

template <int D>
using BlockField = std::vector<Eigen::Matrix<double, D, D>>;

// lumped variant with exact divergence pairing (diagonal solve):
// M_kk W_k = -kappa_k sum (|sigma|/D) nu nu^T - sum |sigma| nu g_k^T
template <int D>
BlockField<D> weingarten_wh(const SurfaceMesh<D>& m, const VectorXd& kappa) {
  const Index K = m.num_vertices();
  const FaceData<D> f = face_data(m);
  const VectorXd mk = lumped_vertex_measures(m);
  BlockField<D> W(K, Eigen::Matrix<double, D, D>::Zero());
  for (Index j = 0; j < m.num_elements(); ++j) {
    const auto g = elem_p1_gradients(m, j);
    const Eigen::Matrix<double, D, 1> nu = f.normals.row(j).transpose();
    for (int v = 0; v < D; ++v) {
      const Index k = m.elems(j, v);
      W[k] -= f.measures[j] / D * kappa[k] * nu * nu.transpose();
      W[k] -= f.measures[j] * nu * g.col(v).transpose();
    }
  }
  for (Index k = 0; k < K; ++k) W[k] /= mk[k];
  return W;
}

// symmetrized lumped variant taking the curvature vector:
// M_kk W_k[a,b] = -(1/2) sum { (|sigma|/D)(nu_a kv_b + nu_b kv_a)
//                              + |sigma|(nu_a (g_k)_b + nu_b (g_k)_a) }
template <int D>
BlockField<D> weingarten_whsym(const SurfaceMesh<D>& m,
                               const Eigen::Matrix<double, Eigen::Dynamic, D>& kv) {
  const Index K = m.num_vertices();
  const FaceData<D> f = face_data(m);
  const VectorXd mk = lumped_vertex_measures(m);
  BlockField<D> W(K, Eigen::Matrix<double, D, D>::Zero());
  for (Index j = 0; j < m.num_elements(); ++j) {
    const auto g = elem_p1_gradients(m, j);
    const Eigen::Matrix<double, D, 1> nu = f.normals.row(j).transpose();
    for (int v = 0; v < D; ++v) {
      const Index k = m.elems(j, v);
      const Eigen::Matrix<double, D, 1> kk = kv.row(k).transpose();
      const Eigen::Matrix<double, D, D> S =
          f.measures[j] / D * nu * kk.transpose() + f.measures[j] * nu * g.col(v).transpose();
      W[k] -= 0.5 * (S + S.transpose());
    }
  }
  for (Index k = 0; k < K; ++k) W[k] /= mk[k];
  return W;
}

// exact-pairing variant: for each matrix entry solve the consistent mass
// system M w_ab = rhs_ab
template <int D>
BlockField<D> weingarten_heine04(const SurfaceMesh<D>& m,
                                 const Eigen::Matrix<double, Eigen::Dynamic, D>& kv) {
  const Index K = m.num_vertices();
  const FaceData<D> f = face_data(m);
  const double diag = D == 2 ? 1.0 / 3.0 : 1.0 / 6.0;
  const double off = D == 2 ? 1.0 / 6.0 : 1.0 / 12.0;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(K, D * D);
  for (Index j = 0; j < m.num_elements(); ++j) {
    const auto g = elem_p1_gradients(m, j);
    const Eigen::Matrix<double, D, 1> nu = f.normals.row(j).transpose();
    for (int v = 0; v < D; ++v) {
      const Index k = m.elems(j, v);
      Eigen::Matrix<double, D, 1> kmom = Eigen::Matrix<double, D, 1>::Zero();
      for (int w = 0; w < D; ++w)
        kmom += f.measures[j] * (w == v ? diag : off) * kv.row(m.elems(j, w)).transpose();
      for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b)
          rhs(k, D * a + b) -= kmom[a] * nu[b] + f.measures[j] * nu[a] * g(b, v);
    }
  }
  Eigen::SimplicialLDLT<SparseMat> chol(full_mass(m));
  if (chol.info() != Eigen::Success)
    throw SingularMatrixError("weingarten_heine04: mass factorization failed");
  const Eigen::MatrixXd sol = chol.solve(rhs);
  BlockField<D> W(K);
  for (Index k = 0; k < K; ++k)
    for (int a = 0; a < D; ++a)
      for (int b = 0; b < D; ++b) W[k](a, b) = sol(k, D * a + b);
  return W;
}

// piecewise constant surface gradient of the interpolated unit vertex normal
template <int D>
BlockField<D> weingarten_nabsomega_elems(const SurfaceMesh<D>& m) {
  const auto omega = vertex_normals(m);
  for (Index k = 0; k < omega.rows(); ++k)
    if (omega.row(k).norm() < 1e-12)
      throw MeshError("weingarten_nabsomega: vanishing vertex normal at vertex " +
                      std::to_string(k));
  BlockField<D> W(m.num_elements());
  for (Index j = 0; j < m.num_elements(); ++j) {
    const auto g = elem_p1_gradients(m, j);
    W[j].setZero();
    for (int v = 0; v < D; ++v) {
      const Eigen::Matrix<double, D, 1> what =
          omega.row(m.elems(j, v)).transpose().normalized();
      W[j] += what * g.col(v).transpose();
    }
  }
  return W;
}

// vertex field of squared Frobenius norms of the Weingarten approximation
template <int D>
VectorXd weingarten_sq_norm(const SurfaceMesh<D>& m, WeingartenVariant variant,
                            const VectorXd& kappa,
                            const Eigen::Matrix<double, Eigen::Dynamic, D>& kv) {
  const Index K = m.num_vertices();
  VectorXd w2(K);
  switch (variant) {
    case WeingartenVariant::wh: {
      const BlockField<D> W = weingarten_wh(m, kappa);
      for (Index k = 0; k < K; ++k) w2[k] = W[k].squaredNorm();
      return w2;
    }
    case WeingartenVariant::whsym: {
      const BlockField<D> W = weingarten_whsym(m, kv);
      for (Index k = 0; k < K; ++k) w2[k] = W[k].squaredNorm();
      return w2;
    }
    case WeingartenVariant::heine04: {
      const BlockField<D> W = weingarten_heine04(m, kv);
      for (Index k = 0; k < K; ++k) w2[k] = W[k].squaredNorm();
      return w2;
    }
    case WeingartenVariant::nabsomega: {
      const BlockField<D> W = weingarten_nabsomega_elems(m);
      const FaceData<D> f = face_data(m);
      const VectorXd mk = lumped_vertex_measures(m);
      w2.setZero();
      for (Index j = 0; j < m.num_elements(); ++j)
        for (int v = 0; v < D; ++v)
          w2[m.elems(j, v)] += f.measures[j] / D * W[j].squaredNorm();
      w2.array() /= mk.array();
      return w2;
    }
  }
  throw std::logic_error("weingarten_sq_norm: unreachable");
}

// mean of a vertex field with respect to the lumped inner product
template <int D>
double lumped_mean(const SurfaceMesh<D>& m, const VectorXd& u) {
  return lumped_ip(m, u, VectorXd::Ones(m.num_vertices())) / surface_measure(m);
}

}  // namespace pflow
