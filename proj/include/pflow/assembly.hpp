#pragma once

#include <Eigen/Sparse>

#include <ostream>

#include "pflow/anisotropy.hpp"
#include "pflow/io.hpp"
#include "pflow/mesh.hpp"

namespace pflow {

using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// diagonal of the mass-lumped inner product, optionally face-weighted
template <int D>
VectorXd lumped_mass(const SurfaceMesh<D>& m, const VectorXd* face_weight = nullptr) {
  const FaceData<D> f = face_data(m);
  VectorXd mk = VectorXd::Zero(m.num_vertices());
  for (Index j = 0; j < m.num_elements(); ++j) {
    const double w = face_weight ? (*face_weight)[j] : 1.0;
    for (int v = 0; v < D; ++v) mk[m.elems(j, v)] += w * f.measures[j] / D;
  }
  return mk;
}

inline SparseMat diagonal_matrix(const VectorXd& d) {
  SparseMat M(d.size(), d.size());
  M.reserve(Eigen::VectorXi::Constant(int(d.size()), 1));
  for (Index k = 0; k < d.size(); ++k) M.insert(k, k) = d[k];
  M.makeCompressed();
  return M;
}

template <int D>
SparseMat stiffness(const SurfaceMesh<D>& m, const VectorXd* face_weight = nullptr) {
  const FaceData<D> f = face_data(m);
  std::vector<Triplet> t;
  t.reserve(size_t(m.num_elements()) * D * D);
  for (Index j = 0; j < m.num_elements(); ++j) {
    const auto g = elem_p1_gradients(m, j);
    const double w = (face_weight ? (*face_weight)[j] : 1.0) * f.measures[j];
    for (int a = 0; a < D; ++a)
      for (int b = 0; b < D; ++b)
        t.emplace_back(int(m.elems(j, a)), int(m.elems(j, b)), w * g.col(a).dot(g.col(b)));
  }
  SparseMat A(m.num_vertices(), m.num_vertices());
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

// K x D rows M_kk omega_k = (1/D) sum_{sigma ni k} |sigma| nu_sigma: the
// normal-velocity coupling; as an operator kappa -> (N kappa)_{Dk+c} = N(k,c) kappa_k
template <int D>
Eigen::Matrix<double, Eigen::Dynamic, D> normal_coupling(const SurfaceMesh<D>& m) {
  const FaceData<D> f = face_data(m);
  Eigen::Matrix<double, Eigen::Dynamic, D> N =
      Eigen::Matrix<double, Eigen::Dynamic, D>::Zero(m.num_vertices(), D);
  for (Index j = 0; j < m.num_elements(); ++j)
    for (int v = 0; v < D; ++v)
      N.row(m.elems(j, v)) += f.measures[j] / D * f.normals.row(j);
  return N;
}

template <int D>
VectorXd apply_normal_coupling(const Eigen::Matrix<double, Eigen::Dynamic, D>& N,
                               const VectorXd& kappa) {
  VectorXd r(N.rows() * D);
  for (Index k = 0; k < N.rows(); ++k)
    for (int c = 0; c < D; ++c) r[D * k + c] = N(k, c) * kappa[k];
  return r;
}

template <int D>
VectorXd apply_normal_coupling_T(const Eigen::Matrix<double, Eigen::Dynamic, D>& N,
                                 const VectorXd& x) {
  VectorXd r = VectorXd::Zero(N.rows());
  for (Index k = 0; k < N.rows(); ++k)
    for (int c = 0; c < D; ++c) r[k] += N(k, c) * x[D * k + c];
  return r;
}

// S otimes Id on interleaved vector unknowns (index D*k + c)
template <int D>
SparseMat kron_identity(const SparseMat& S) {
  std::vector<Triplet> t;
  t.reserve(size_t(S.nonZeros()) * D);
  for (int o = 0; o < S.outerSize(); ++o)
    for (SparseMat::InnerIterator it(S, o); it; ++it)
      for (int c = 0; c < D; ++c)
        t.emplace_back(int(D * it.row() + c), int(D * it.col() + c), it.value());
  SparseMat Ak(S.rows() * D, S.cols() * D);
  Ak.setFromTriplets(t.begin(), t.end());
  Ak.makeCompressed();
  return Ak;
}

template <int D>
SparseMat vector_stiffness(const SurfaceMesh<D>& m, const VectorXd* face_weight = nullptr) {
  return kron_identity<D>(stiffness(m, face_weight));
}

// consistent P1 mass matrix, optionally face-weighted
template <int D>
SparseMat full_mass(const SurfaceMesh<D>& m, const VectorXd* face_weight = nullptr) {
  const FaceData<D> f = face_data(m);
  std::vector<Triplet> t;
  t.reserve(size_t(m.num_elements()) * D * D);
  const double diag = D == 2 ? 1.0 / 3.0 : 1.0 / 6.0;
  const double off = D == 2 ? 1.0 / 6.0 : 1.0 / 12.0;
  for (Index j = 0; j < m.num_elements(); ++j) {
    const double w = (face_weight ? (*face_weight)[j] : 1.0) * f.measures[j];
    for (int a = 0; a < D; ++a)
      for (int b = 0; b < D; ++b)
        t.emplace_back(int(m.elems(j, a)), int(m.elems(j, b)), w * (a == b ? diag : off));
  }
  SparseMat M(m.num_vertices(), m.num_vertices());
  M.setFromTriplets(t.begin(), t.end());
  M.makeCompressed();
  return M;
}

// vertex-block-diagonal DK x DK matrix with blocks M_kk * B_k for a per-vertex
// field of D x D blocks
template <int D, class BlockFn>
SparseMat vertex_block_diagonal(const SurfaceMesh<D>& m, BlockFn&& block) {
  const Index K = m.num_vertices();
  std::vector<Triplet> t;
  t.reserve(size_t(K) * D * D);
  for (Index k = 0; k < K; ++k) {
    const Eigen::Matrix<double, D, D> B = block(k);
    for (int a = 0; a < D; ++a)
      for (int b = 0; b < D; ++b)
        if (B(a, b) != 0.0) t.emplace_back(int(D * k + a), int(D * k + b), B(a, b));
  }
  SparseMat M(D * K, D * K);
  M.setFromTriplets(t.begin(), t.end());
  M.makeCompressed();
  return M;
}

// blocks M_kk (theta Id + (1-theta) what_k what_k^T); needs nonvanishing
// vertex normals
template <int D>
SparseMat qtheta_mass(const SurfaceMesh<D>& m, double theta) {
  const VectorXd mk = lumped_vertex_measures(m);
  const auto omega = vertex_normals(m);
  for (Index k = 0; k < omega.rows(); ++k)
    if (omega.row(k).norm() < 1e-12)
      throw MeshError("qtheta_mass: vanishing vertex normal at vertex " + std::to_string(k));
  return vertex_block_diagonal<D>(m, [&](Index k) {
    const Eigen::Matrix<double, D, 1> w = omega.row(k).transpose().normalized();
    return Eigen::Matrix<double, D, D>(
        mk[k] * (theta * Eigen::Matrix<double, D, D>::Identity() + (1.0 - theta) * w * w.transpose()));
  });
}

// blocks M_kk omega_k omega_k^T (unnormalized weighted vertex normals)
template <int D>
SparseMat omega_outer_mass(const SurfaceMesh<D>& m) {
  const VectorXd mk = lumped_vertex_measures(m);
  const auto omega = vertex_normals(m);
  return vertex_block_diagonal<D>(m, [&](Index k) {
    const Eigen::Matrix<double, D, 1> w = omega.row(k).transpose();
    return Eigen::Matrix<double, D, D>(mk[k] * w * w.transpose());
  });
}

// <div_s of trial, div_s of test> on vector fields: blocks |sigma| g_k g_l^T
template <int D>
SparseMat divdiv(const SurfaceMesh<D>& m) {
  const FaceData<D> f = face_data(m);
  std::vector<Triplet> t;
  t.reserve(size_t(m.num_elements()) * D * D * D * D);
  for (Index j = 0; j < m.num_elements(); ++j) {
    const auto g = elem_p1_gradients(m, j);
    for (int k = 0; k < D; ++k)
      for (int l = 0; l < D; ++l)
        for (int a = 0; a < D; ++a)
          for (int b = 0; b < D; ++b)
            t.emplace_back(int(D * m.elems(j, k) + a), int(D * m.elems(j, l) + b),
                           f.measures[j] * g(a, k) * g(b, l));
  }
  SparseMat A(D * m.num_vertices(), D * m.num_vertices());
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

// <grad_s of trial, D_s(test)> with D_s(chi) = (1/2) P (grad chi + grad chi^T) P,
// P = Id - nu nu^T: entries (1/2)|sigma| [P_ab (g_k . g_l) + (g_k)_b (g_l)_a]
template <int D>
SparseMat deformation_pairing(const SurfaceMesh<D>& m) {
  const FaceData<D> f = face_data(m);
  std::vector<Triplet> t;
  t.reserve(size_t(m.num_elements()) * D * D * D * D);
  for (Index j = 0; j < m.num_elements(); ++j) {
    const auto g = elem_p1_gradients(m, j);
    const Eigen::Matrix<double, D, 1> nu = f.normals.row(j).transpose();
    const Eigen::Matrix<double, D, D> P =
        Eigen::Matrix<double, D, D>::Identity() - nu * nu.transpose();
    for (int k = 0; k < D; ++k)
      for (int l = 0; l < D; ++l) {
        const double gkl = g.col(k).dot(g.col(l));
        for (int a = 0; a < D; ++a)
          for (int b = 0; b < D; ++b)
            t.emplace_back(int(D * m.elems(j, k) + a), int(D * m.elems(j, l) + b),
                           0.5 * f.measures[j] * (P(a, b) * gkl + g(b, k) * g(a, l)));
      }
  }
  SparseMat A(D * m.num_vertices(), D * m.num_vertices());
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

// anisotropic vector stiffness: per element and matrix G_l the tangential
// Dirichlet form in the Gtilde_l metric, weighted by
// [gamma_l(v)/gamma(v)]^(r-1) gamma_l(nu), block structure s_kl Gtilde_l.
// v holds per-face directions (unit; renormalized with a warning count).
template <int D>
SparseMat aniso_stiffness(const SurfaceMesh<D>& m, const Anisotropy<D>& a,
                          const Eigen::Matrix<double, Eigen::Dynamic, D>& v,
                          Index* renormalized = nullptr) {
  const FaceData<D> f = face_data(m);
  if (v.rows() != m.num_elements()) throw std::invalid_argument("aniso_stiffness: v must be J x D");
  if (renormalized) *renormalized = 0;
  std::vector<Triplet> t;
  t.reserve(size_t(m.num_elements()) * a.G.size() * D * D * D * D);
  for (Index j = 0; j < m.num_elements(); ++j) {
    Eigen::Matrix<double, D, 1> vj = v.row(j).transpose();
    const double n = vj.norm();
    if (std::abs(n - 1.0) > 1e-12) {
      if (!(n > 0)) throw std::invalid_argument("aniso_stiffness: zero direction in v");
      vj /= n;
      if (renormalized) ++*renormalized;
    }
    const Eigen::Matrix<double, D, 1> nu = f.normals.row(j).transpose();
    const auto g = elem_p1_gradients(m, j);
    Eigen::Matrix<double, D, D - 1> B;  // tangent basis: element edge vectors
    for (int e = 0; e < D - 1; ++e)
      B.col(e) = m.vertex(m.elems(j, e + 1)) - m.vertex(m.elems(j, 0));
    const double gam_v = gamma_eval(a, vj);
    for (size_t l = 0; l < a.G.size(); ++l) {
      const double ratio = a.r == 1.0 ? 1.0 : std::pow(gamma_l(a, l, vj) / gam_v, a.r - 1.0);
      const double w = ratio * gamma_l(a, l, nu) * f.measures[j];
      const Eigen::Matrix<double, D - 1, D - 1> H = B.transpose() * a.Gtilde[l] * B;
      const Eigen::Matrix<double, D, D> Q = B * H.inverse() * B.transpose();
      for (int k = 0; k < D; ++k)
        for (int q = 0; q < D; ++q) {
          const double skl = g.col(k).dot(Q * g.col(q));
          for (int aa = 0; aa < D; ++aa)
            for (int bb = 0; bb < D; ++bb)
              t.emplace_back(int(D * m.elems(j, k) + aa), int(D * m.elems(j, q) + bb),
                             w * skl * a.Gtilde[l](aa, bb));
        }
    }
  }
  SparseMat A(D * m.num_vertices(), D * m.num_vertices());
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

// r_{(k,a)} = <w, div_s of test>^h, w a vertex field (optionally scaled by a
// per-face factor)
template <int D>
VectorXd lumped_pair_with_divergence(const SurfaceMesh<D>& m, const VectorXd& w,
                                     const VectorXd* face_factor = nullptr) {
  const FaceData<D> f = face_data(m);
  VectorXd r = VectorXd::Zero(D * m.num_vertices());
  for (Index j = 0; j < m.num_elements(); ++j) {
    const auto g = elem_p1_gradients(m, j);
    double wsum = 0;
    for (int q = 0; q < D; ++q) wsum += w[m.elems(j, q)];
    const double c = f.measures[j] / D * wsum * (face_factor ? (*face_factor)[j] : 1.0);
    for (int k = 0; k < D; ++k)
      for (int a = 0; a < D; ++a) r[D * m.elems(j, k) + a] += c * g(a, k);
  }
  return r;
}

// r_{(k,a)} = <z, (grad_s of test)^T nu>^h with z a vector vertex field:
// per element (|sigma|/D) (sum_q z(q)) . g_k nu_a
template <int D>
VectorXd lumped_pair_with_gradT_nu(const SurfaceMesh<D>& m,
                                   const Eigen::Matrix<double, Eigen::Dynamic, D>& z) {
  const FaceData<D> f = face_data(m);
  VectorXd r = VectorXd::Zero(D * m.num_vertices());
  for (Index j = 0; j < m.num_elements(); ++j) {
    const auto g = elem_p1_gradients(m, j);
    Eigen::Matrix<double, D, 1> zsum = Eigen::Matrix<double, D, 1>::Zero();
    for (int q = 0; q < D; ++q) zsum += z.row(m.elems(j, q)).transpose();
    const Eigen::Matrix<double, D, 1> nu = f.normals.row(j).transpose();
    for (int k = 0; k < D; ++k) {
      const double c = f.measures[j] / D * zsum.dot(g.col(k));
      for (int a = 0; a < D; ++a) r[D * m.elems(j, k) + a] += c * nu(a);
    }
  }
  return r;
}

inline void dump_matrix(const SparseMat& A, std::ostream& os) {
  for (int o = 0; o < A.outerSize(); ++o)
    for (SparseMat::InnerIterator it(A, o); it; ++it)
      os << it.row() << ' ' << it.col() << ' ' << format_g17(it.value()) << '\n';
}

}  // namespace pflow
