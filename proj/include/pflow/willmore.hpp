#pragma once

#include "pflow/flows.hpp"

namespace pflow {

struct WillmoreParams {
  double kappa_bar = 0.0;  // spontaneous curvature
  double beta_ade = 0.0;   // area-difference coupling
  double M0 = 0.0;         // reference integral curvature
  bool constrain_area = false;
  bool constrain_volume = false;
  WeingartenVariant weingarten = WeingartenVariant::wh;
};

template <int D>
double willmore_energy(const SurfaceMesh<D>& m, const VectorXd& kappa) {
  const VectorXd mk = lumped_vertex_measures(m);
  return 0.5 * kappa.dot(mk.cwiseProduct(kappa));
}

template <int D>
double ade_energy(const SurfaceMesh<D>& m, const Eigen::Matrix<double, Eigen::Dynamic, D>& kv,
                  double kappa_bar, double beta_ade, double M0) {
  const FaceData<D> f = face_data(m);
  double e = 0, a = 0;
  for (Index j = 0; j < m.num_elements(); ++j) {
    const Eigen::Matrix<double, D, 1> nu = f.normals.row(j).transpose();
    for (int v = 0; v < D; ++v) {
      const Eigen::Matrix<double, D, 1> k = kv.row(m.elems(j, v)).transpose();
      e += 0.5 * f.measures[j] / D * (k - kappa_bar * nu).squaredNorm();
      a += f.measures[j] / D * k.dot(nu);
    }
  }
  return e + 0.5 * beta_ade * (a - M0) * (a - M0);
}

template <int D>
struct WillmoreState {
  SurfaceMesh<D> mesh;
  VectorXd kappa;
};

template <int D>
WillmoreState<D> init_willmore(const SurfaceMesh<D>& m) {
  return {m, bgn_curvature(m).kappa};
}

// squared Weingarten norm driving the Willmore forcing; curves use kappa^2
template <int D>
VectorXd willmore_w2(const SurfaceMesh<D>& m, WeingartenVariant variant, const VectorXd& kappa) {
  if constexpr (D == 2) {
    return kappa.cwiseProduct(kappa);
  } else {
    return weingarten_sq_norm<D>(m, variant, kappa, lb_curvature_vector(m));
  }
}

// semi-implicit Willmore / Helfrich step with optional area and volume
// multipliers; the nonnegative part of lambda_A acts implicitly, the rest is
// lagged to the right-hand side
template <int D>
WillmoreState<D> step_willmore(const WillmoreState<D>& st, double dt, const WillmoreParams& p) {
  if (!(dt > 0)) throw std::invalid_argument("step_willmore: dt must be positive");
  const SurfaceMesh<D>& m = st.mesh;
  const SchemeOperators<D> ops = scheme_operators(m);
  const Index K = m.num_vertices();
  const VectorXd& kap = st.kappa;

  const VectorXd w2 = willmore_w2<D>(m, p.weingarten, kap);
  const double Am = p.beta_ade != 0.0
                        ? lumped_ip(m, kap, VectorXd::Ones(K)) - p.M0
                        : 0.0;
  VectorXd g(K);
  for (Index k = 0; k < K; ++k)
    g[k] = -(kap[k] - p.kappa_bar) * w2[k] - p.beta_ade * Am * (w2[k] - kap[k] * kap[k]);
  const VectorXd sq = (kap.array() - p.kappa_bar).square().matrix();

  double lamA = 0.0, lamV = 0.0;
  if (p.constrain_area || p.constrain_volume) {
    const VectorXd gfull = g + VectorXd(0.5 * sq.cwiseProduct(kap));
    const double kk = kap.dot(ops.mk.cwiseProduct(kap));
    const double k1 = ops.mk.dot(kap);
    const double one1 = ops.area;
    const double bA = -(lumped_ip(m, gfull, kap) + kap.dot(ops.A * kap));
    const double bV = -lumped_ip(m, gfull, VectorXd::Ones(K));
    if (p.constrain_area && p.constrain_volume) {
      const double det = kk * one1 - k1 * k1;
      if (!(det > 1e-12 * kk * one1))
        throw SingularMatrixError(
            "step_willmore: singular multiplier system (constant curvature with both area and "
            "volume constraints)");
      lamA = (one1 * bA - k1 * bV) / det;
      lamV = (kk * bV - k1 * bA) / det;
    } else if (p.constrain_area) {
      if (!(kk > 0)) throw SingularMatrixError("step_willmore: vanishing curvature norm");
      lamA = bA / kk;
    } else {
      lamV = bV / one1;
    }
  }
  const double lamAp = std::max(lamA, 0.0), lamAm = std::min(lamA, 0.0);

  SystemBuilder sys(K + D * K);
  sys.add_block(0, 0, ops.A, dt);
  sys.add_diag(0, 0, VectorXd(ops.mk.cwiseProduct(VectorXd(0.5 * sq.array() + lamAp))), dt);
  sys.add_normal_T<D>(0, K, ops.N, -1.0);
  sys.rhs.head(K) =
      -dt * ops.mk.cwiseProduct(VectorXd(g.array() + lamAm * kap.array() + lamV));
  sys.add_normal<D>(K, 0, ops.N);
  sys.add_block(K, K, ops.Ablk);
  sys.rhs.tail(D * K) = -ops.AX;
  const VectorXd x = sys.solve();
  WillmoreState<D> out;
  out.kappa = x.head(K);
  out.mesh =
      with_positions(m, typename SurfaceMesh<D>::VertexArray(m.X + unflatten<D>(x.tail(D * K))));
  return out;
}

template <int D>
struct StableWillmoreState {
  SurfaceMesh<D> mesh;
  VectorXd kappa;
  Eigen::Matrix<double, Eigen::Dynamic, D> Y;
};

template <int D>
StableWillmoreState<D> init_willmore_stable(const SurfaceMesh<D>& m) {
  const auto omega = vertex_normals(m);
  for (Index k = 0; k < omega.rows(); ++k)
    if (omega.row(k).norm() < 1e-12)
      throw MeshError("init_willmore_stable: vanishing vertex normal at vertex " +
                      std::to_string(k));
  const VectorXd kappa = bgn_curvature(m).kappa;
  Eigen::Matrix<double, Eigen::Dynamic, D> Y(m.num_vertices(), D);
  for (Index k = 0; k < Y.rows(); ++k) Y.row(k) = kappa[k] / omega.row(k).norm() * omega.row(k);
  return {m, kappa, Y};
}

// forcing functional of the three-field Willmore scheme, tested against
// vector fields chi: lumped pairings against div chi and (grad chi)^T nu plus
// exact div-div and symmetrized-gradient pairings with Y^m
template <int D>
VectorXd stable_willmore_forcing(const SurfaceMesh<D>& m, const VectorXd& kappa,
                                 const Eigen::Matrix<double, Eigen::Dynamic, D>& Y) {
  const FaceData<D> f = face_data(m);
  const VectorXd yflat = flatten<D>(Y);
  VectorXd g = -(divdiv(m) * yflat) + 2.0 * (deformation_pairing(m) * yflat);
  for (Index j = 0; j < m.num_elements(); ++j) {
    const auto gr = elem_p1_gradients(m, j);
    const Eigen::Matrix<double, D, 1> nu = f.normals.row(j).transpose();
    double s1 = 0;
    Eigen::Matrix<double, D, 1> ky = Eigen::Matrix<double, D, 1>::Zero();
    for (int q = 0; q < D; ++q) {
      const Index kq = m.elems(j, q);
      s1 += kappa[kq] * (0.5 * kappa[kq] - Y.row(kq).dot(nu.transpose()));
      ky += kappa[kq] * Y.row(kq).transpose();
    }
    for (int v = 0; v < D; ++v) {
      const Index k = m.elems(j, v);
      const double c2 = f.measures[j] / D * ky.dot(gr.col(v));
      for (int a = 0; a < D; ++a) {
        g[D * k + a] += f.measures[j] / D * s1 * gr(a, v);
        g[D * k + a] += c2 * nu[a];
      }
    }
  }
  return g;
}

// stable three-field Willmore scheme: unknowns (Y, kappa, dX) with
// kappa_k = omega_k . Y_k enforced by the middle block
template <int D>
StableWillmoreState<D> step_willmore_stable(const StableWillmoreState<D>& st, double dt) {
  if (!(dt > 0)) throw std::invalid_argument("step_willmore_stable: dt must be positive");
  const SurfaceMesh<D>& m = st.mesh;
  const SchemeOperators<D> ops = scheme_operators(m);
  const Index K = m.num_vertices();
  const Index nV = D * K;
  const Index oK = nV, oX = nV + K;
  SystemBuilder sys(2 * nV + K);
  sys.add_block(0, 0, ops.Ablk);
  sys.add_block(0, oX, omega_outer_mass(m), -1.0 / dt);
  sys.rhs.head(nV) = stable_willmore_forcing<D>(m, st.kappa, st.Y);
  sys.add_normal_T<D>(oK, 0, ops.N, -1.0);
  sys.add_diag(oK, oK, ops.mk);
  sys.add_normal<D>(oX, oK, ops.N);
  sys.add_block(oX, oX, ops.Ablk);
  sys.rhs.tail(nV) = -ops.AX;
  const VectorXd x = sys.solve();
  StableWillmoreState<D> out;
  out.Y = unflatten<D>(VectorXd(x.head(nV)));
  out.kappa = x.segment(oK, K);
  out.mesh =
      with_positions(m, typename SurfaceMesh<D>::VertexArray(m.X + unflatten<D>(x.tail(nV))));
  return out;
}

template <int D>
struct AdeState {
  SurfaceMesh<D> mesh;
  Eigen::Matrix<double, Eigen::Dynamic, D> kappa_vec;
  Eigen::Matrix<double, Eigen::Dynamic, D> Y;
  double A = 0.0;  // integral-curvature excess over M0
};

template <int D>
double ade_area_difference(const SurfaceMesh<D>& m,
                           const Eigen::Matrix<double, Eigen::Dynamic, D>& kv, double M0) {
  const auto N = normal_coupling(m);
  double a = 0;
  for (Index k = 0; k < N.rows(); ++k) a += kv.row(k).dot(N.row(k));
  return a - M0;
}

template <int D>
AdeState<D> init_willmore_ade(const SurfaceMesh<D>& m, double kappa_bar, double beta_ade,
                              double M0) {
  AdeState<D> st;
  st.mesh = m;
  st.kappa_vec = lb_curvature_vector(m);
  st.A = ade_area_difference<D>(m, st.kappa_vec, M0);
  st.Y = st.kappa_vec + (beta_ade * st.A - kappa_bar) * vertex_normals(m);
  return st;
}

// Dziuk-type spontaneous-curvature/ADE Willmore scheme: two-field system in
// (Y, dX) after substituting kappa_vec = Y - (beta A - kbar) omega
template <int D>
AdeState<D> step_willmore_ade(const AdeState<D>& st, double dt, double kappa_bar, double beta_ade,
                              double M0) {
  if (!(dt > 0)) throw std::invalid_argument("step_willmore_ade: dt must be positive");
  const SurfaceMesh<D>& m = st.mesh;
  const Index K = m.num_vertices();
  const Index nV = D * K;
  const FaceData<D> f = face_data(m);
  const VectorXd mk = lumped_vertex_measures(m);
  const auto N = normal_coupling(m);
  const auto omega = vertex_normals(m);
  const SparseMat Ablk = vector_stiffness(m);
  const SparseMat Mblk = kron_identity<D>(diagonal_matrix(mk));
  const double coef = beta_ade * st.A - kappa_bar;

  VectorXd gg = -(divdiv(m) * flatten<D>(st.Y)) +
                2.0 * (deformation_pairing(m) * flatten<D>(st.Y)) -
                coef * lumped_pair_with_gradT_nu<D>(m, st.kappa_vec);
  for (Index j = 0; j < m.num_elements(); ++j) {
    const auto gr = elem_p1_gradients(m, j);
    const Eigen::Matrix<double, D, 1> nu = f.normals.row(j).transpose();
    double s = 0;
    for (int q = 0; q < D; ++q) {
      const Index kq = m.elems(j, q);
      const Eigen::Matrix<double, D, 1> kv = st.kappa_vec.row(kq).transpose();
      s += 0.5 * (kv - kappa_bar * nu).squaredNorm() -
           kv.dot(st.Y.row(kq).transpose() - beta_ade * st.A * nu);
    }
    for (int v = 0; v < D; ++v)
      for (int a = 0; a < D; ++a)
        gg[D * m.elems(j, v) + a] += f.measures[j] / D * s * gr(a, v);
  }

  SystemBuilder sys(2 * nV);
  sys.add_block(0, 0, Ablk);
  sys.add_block(0, nV, Mblk, -1.0 / dt);
  sys.rhs.head(nV) = gg;
  sys.add_block(nV, 0, Mblk);
  sys.add_block(nV, nV, Ablk);
  sys.rhs.tail(nV) = -(Ablk * flatten<D>(m.X)) + coef * flatten<D>(N);
  const VectorXd x = sys.solve();

  AdeState<D> out;
  out.Y = unflatten<D>(VectorXd(x.head(nV)));
  out.kappa_vec = out.Y - coef * omega;
  out.A = ade_area_difference<D>(m, out.kappa_vec, M0);
  out.mesh =
      with_positions(m, typename SurfaceMesh<D>::VertexArray(m.X + unflatten<D>(x.tail(nV))));
  return out;
}

}  // namespace pflow
