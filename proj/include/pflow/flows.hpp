#pragma once

#include <array>

#include "pflow/curvature.hpp"

namespace pflow {

template <int D>
struct StepResult {
  SurfaceMesh<D> mesh;
  VectorXd kappa;  // scalar curvature unknown where the scheme has one
  double stab_slack = std::numeric_limits<double>::quiet_NaN();
  double dissipation = std::numeric_limits<double>::quiet_NaN();
  Index picard_iters = 0;
  Index cg_iters = 0;
  bool nonlinear_converged = true;
};

enum class FKind { mcf, sd, conserved, power, salk };

struct FChoice {
  FKind kind = FKind::mcf;
  double beta_exp = 1.0;  // power-law exponent
  double alpha_s = 1.0;   // interpolation parameters
  double xi = 1.0;
};

inline Index f_extra_unknowns(const FChoice& f, Index K) {
  if (f.kind == FKind::conserved) return 1;
  if (f.kind == FKind::salk) return K;
  return 0;
}

template <int D>
struct SchemeOperators {
  VectorXd mk;
  Eigen::Matrix<double, Eigen::Dynamic, D> N;
  SparseMat A;
  SparseMat Ablk;
  VectorXd AX;
  double area = 0;
};

template <int D>
SchemeOperators<D> scheme_operators(const SurfaceMesh<D>& m) {
  SchemeOperators<D> ops;
  ops.mk = lumped_vertex_measures(m);
  ops.N = normal_coupling(m);
  ops.A = stiffness(m);
  ops.Ablk = kron_identity<D>(ops.A);
  ops.AX = flatten<D>(stiffness_times_positions(m));
  ops.area = surface_measure(m);
  return ops;
}

inline VectorXd power_weights(const VectorXd& kappa, double beta_exp) {
  VectorXd w(kappa.size());
  for (Index k = 0; k < kappa.size(); ++k)
    w[k] = std::pow(std::max(std::abs(kappa[k]), 1e-14), beta_exp - 1.0);
  return w;
}

// rows [0,K): lumped normal-velocity identity against F(kappa); extra
// unknown block (mean value / auxiliary field) at column/row offset oE
template <int D>
void append_f_rows(SystemBuilder& sys, const FChoice& f, const SchemeOperators<D>& ops,
                   double dt, Index oE, Index oX, const VectorXd* w) {
  const Index K = ops.mk.size();
  switch (f.kind) {
    case FKind::mcf:
      sys.add_diag(0, 0, ops.mk, dt);
      sys.add_normal_T<D>(0, oX, ops.N, -1.0);
      break;
    case FKind::power:
      sys.add_diag(0, 0, VectorXd(ops.mk.cwiseProduct(*w)), dt);
      sys.add_normal_T<D>(0, oX, ops.N, -1.0);
      break;
    case FKind::sd:
      sys.add_block(0, 0, ops.A, dt);
      sys.add_normal_T<D>(0, oX, ops.N, -1.0);
      break;
    case FKind::conserved:
      sys.add_diag(0, 0, ops.mk, dt);
      for (Index k = 0; k < K; ++k) sys.add(k, oE, -dt * ops.mk[k]);
      sys.add(oE, oE, ops.area);
      for (Index k = 0; k < K; ++k) sys.add(oE, k, -ops.mk[k]);
      sys.add_normal_T<D>(0, oX, ops.N, -1.0);
      break;
    case FKind::salk:
      // <dX/dt, chi nu>^h = <grad Y, grad chi> with
      // (1/xi) <grad Y, grad eta> + (1/alpha) <Y, eta>^h = <kappa, eta>^h
      sys.add_normal_T<D>(0, oX, ops.N, 1.0);
      sys.add_block(0, oE, ops.A, -dt);
      sys.add_diag(oE, 0, ops.mk, -1.0);
      sys.add_block(oE, oE, ops.A, 1.0 / f.xi);
      sys.add_diag(oE, oE, ops.mk, 1.0 / f.alpha_s);
      break;
  }
}

template <int D>
double f_dissipation(const FChoice& f, const SchemeOperators<D>& ops, const VectorXd& kappa,
                     const VectorXd& extras, const VectorXd* w) {
  switch (f.kind) {
    case FKind::mcf:
      return kappa.dot(ops.mk.cwiseProduct(kappa));
    case FKind::power:
      return kappa.dot(ops.mk.cwiseProduct(w->cwiseProduct(kappa)));
    case FKind::sd:
      return kappa.dot(ops.A * kappa);
    case FKind::conserved: {
      const VectorXd kc = kappa.array() - extras[0];
      return kc.dot(ops.mk.cwiseProduct(kc));
    }
    case FKind::salk:
      return kappa.dot(ops.A * extras);
  }
  return 0;
}

// one step of the lumped saddle-point scheme for normal velocity = F(kappa);
// F = identity gives mean curvature flow
template <int D>
StepResult<D> step_generic(const SurfaceMesh<D>& m, double dt, const FChoice& f,
                           SaddleMethod method = SaddleMethod::direct, double cg_tol = 1e-12,
                           double picard_tol = 1e-10, Index picard_maxit = 100) {
  if (!(dt > 0)) throw std::invalid_argument("step_generic: dt must be positive");
  const SchemeOperators<D> ops = scheme_operators(m);
  const Index K = m.num_vertices();
  const Index E = f_extra_unknowns(f, K);
  const Index oX = K + E;
  const bool diag_first_block = f.kind == FKind::mcf || f.kind == FKind::power;
  if (method == SaddleMethod::schur_cg && !diag_first_block)
    throw std::invalid_argument("schur_cg applies only to schemes with a diagonal first block");

  const bool picard = f.kind == FKind::power && f.beta_exp != 1.0;
  VectorXd w;
  if (f.kind == FKind::power) w = power_weights(bgn_curvature(m).kappa, f.beta_exp);

  StepResult<D> out{m};
  VectorXd kappa, extras = VectorXd::Zero(E), dX;
  VectorXd Xprev = flatten<D>(m.X);
  Index iters = 0;
  for (;;) {
    if (method == SaddleMethod::schur_cg) {
      SaddleSystem<D> S;
      S.B = f.kind == FKind::power ? VectorXd(dt * ops.mk.cwiseProduct(w)) : VectorXd(dt * ops.mk);
      S.N = ops.N;
      S.Ablk = ops.Ablk;
      S.rhs1 = VectorXd::Zero(K);
      S.rhs2 = -ops.AX;
      const SaddleSolution<D> sol = saddle_solve<D>(S, method, cg_tol);
      kappa = sol.kappa;
      dX = sol.dX;
      out.cg_iters += sol.cg_iters;
    } else {
      SystemBuilder sys(oX + D * K);
      append_f_rows(sys, f, ops, dt, K, oX, &w);
      sys.add_normal<D>(oX, 0, ops.N);
      sys.add_block(oX, oX, ops.Ablk);
      sys.rhs.tail(D * K) = -ops.AX;
      const VectorXd x = sys.solve();
      kappa = x.head(K);
      extras = x.segment(K, E);
      dX = x.tail(D * K);
    }
    ++iters;
    if (!picard) break;
    const VectorXd Xnew = flatten<D>(m.X) + dX;
    const bool converged =
        (Xnew - Xprev).cwiseAbs().maxCoeff() < picard_tol * (1.0 + Xprev.cwiseAbs().maxCoeff());
    Xprev = Xnew;
    w = power_weights(kappa, f.beta_exp);
    if (converged) break;
    if (iters >= picard_maxit) {
      out.nonlinear_converged = false;
      break;
    }
  }
  out.mesh = with_positions(m, typename SurfaceMesh<D>::VertexArray(m.X + unflatten<D>(dX)));
  out.kappa = kappa;
  out.picard_iters = iters;
  out.dissipation = f_dissipation(f, ops, kappa, extras, &w);
  out.stab_slack = ops.area - surface_measure(out.mesh) - dt * out.dissipation;
  return out;
}

template <int D>
StepResult<D> step_mcf(const SurfaceMesh<D>& m, double dt,
                       SaddleMethod method = SaddleMethod::direct, double cg_tol = 1e-12) {
  return step_generic(m, dt, FChoice{}, method, cg_tol);
}

enum class TangentialStrategy { s1, s2, s3 };

inline TangentialStrategy parse_tangential_strategy(const std::string& s) {
  if (s == "s1" || s == "S1") return TangentialStrategy::s1;
  if (s == "s2" || s == "S2") return TangentialStrategy::s2;
  if (s == "s3" || s == "S3") return TangentialStrategy::s3;
  throw std::invalid_argument("unknown tangential strategy '" + s + "'");
}

// per-vertex orthonormal tangent frames completing the unit vertex normal
template <int D>
std::array<Eigen::Matrix<double, Eigen::Dynamic, D>, D - 1> tangent_frames(
    const Eigen::Matrix<double, Eigen::Dynamic, D>& omega) {
  std::array<Eigen::Matrix<double, Eigen::Dynamic, D>, D - 1> tau;
  const Index K = omega.rows();
  for (auto& t : tau) t.resize(K, D);
  for (Index k = 0; k < K; ++k) {
    const double n = omega.row(k).norm();
    if (n < 1e-12)
      throw MeshError("tangent_frames: vanishing vertex normal at vertex " + std::to_string(k));
    const Eigen::Matrix<double, D, 1> w = omega.row(k).transpose() / n;
    if constexpr (D == 2) {
      tau[0](k, 0) = -w[1];
      tau[0](k, 1) = w[0];
    } else {
      int ax = 0;
      for (int c = 1; c < 3; ++c)
        if (std::abs(w[c]) < std::abs(w[ax])) ax = c;
      Eigen::Vector3d e = Eigen::Vector3d::Zero();
      e[ax] = 1.0;
      const Eigen::Vector3d t1 = (e - e.dot(w) * w).normalized();
      tau[0].row(k) = t1.transpose();
      tau[1].row(k) = w.cross(t1).transpose();
    }
  }
  return tau;
}

// averages of the distinct neighbours of each vertex
template <int D>
Eigen::Matrix<double, Eigen::Dynamic, D> neighbour_averages(const SurfaceMesh<D>& m) {
  const Index K = m.num_vertices();
  std::vector<std::vector<Index>> nb(K);
  for (Index j = 0; j < m.num_elements(); ++j)
    for (int a = 0; a < D; ++a)
      for (int b = 0; b < D; ++b)
        if (a != b) nb[m.elems(j, a)].push_back(m.elems(j, b));
  Eigen::Matrix<double, Eigen::Dynamic, D> z(K, D);
  for (Index k = 0; k < K; ++k) {
    auto& v = nb[k];
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    Eigen::Matrix<double, D, 1> s = Eigen::Matrix<double, D, 1>::Zero();
    for (Index i : v) s += m.vertex(i);
    z.row(k) = (s / double(v.size())).transpose();
  }
  return z;
}

template <int D>
struct TangentialResult {
  StepResult<D> step;
  Eigen::Matrix<double, Eigen::Dynamic, D - 1> beta;
};

// scheme with explicit control of the tangential velocity components
// beta_i = alpha^{-1} tangential speeds; strategies: s1 damps tangential
// motion (c = 0), s2/s3 steer vertices towards neighbour averages
template <int D>
TangentialResult<D> step_tangential(const SurfaceMesh<D>& m, double dt, const FChoice& f,
                                    TangentialStrategy strat, double alpha, double delta,
                                    double picard_tol = 1e-10, Index picard_maxit = 100) {
  if (!(dt > 0)) throw std::invalid_argument("step_tangential: dt must be positive");
  if (alpha < 0 || delta < 0)
    throw std::invalid_argument("step_tangential: alpha and delta must be nonnegative");
  if (strat == TangentialStrategy::s3) delta = 0.0;
  const SchemeOperators<D> ops = scheme_operators(m);
  const Index K = m.num_vertices();
  const Index E = f_extra_unknowns(f, K);
  const Index oB = K + E;
  const Index oX = oB + (D - 1) * K;
  const auto tau = tangent_frames<D>(vertex_normals(m));

  // target offsets (z_k - q_k) . tau_i / dt
  Eigen::Matrix<double, Eigen::Dynamic, D - 1> c =
      Eigen::Matrix<double, Eigen::Dynamic, D - 1>::Zero(K, D - 1);
  if (strat != TangentialStrategy::s1) {
    const auto z = neighbour_averages(m);
    for (Index k = 0; k < K; ++k)
      for (int i = 0; i < D - 1; ++i)
        c(k, i) = (z.row(k) - m.X.row(k)).dot(tau[i].row(k)) / dt;
  }

  const bool picard = f.kind == FKind::power && f.beta_exp != 1.0;
  VectorXd w;
  if (f.kind == FKind::power) w = power_weights(bgn_curvature(m).kappa, f.beta_exp);

  TangentialResult<D> out{{m}, {}};
  VectorXd kappa, extras = VectorXd::Zero(E), dX, beta_flat;
  VectorXd Xprev = flatten<D>(m.X);
  Index iters = 0;
  for (;;) {
    SystemBuilder sys(oX + D * K);
    append_f_rows(sys, f, ops, dt, K, oX, &w);
    for (int i = 0; i < D - 1; ++i)
      for (Index k = 0; k < K; ++k) {
        const Index row = oB + i * K + k;
        if (alpha == 0.0) {
          sys.add(row, row, 1.0);
          continue;
        }
        for (int cc = 0; cc < D; ++cc) sys.add(row, oX + D * k + cc, ops.mk[k] * tau[i](k, cc));
        sys.add(row, row, -dt * delta * ops.mk[k]);
        sys.rhs[row] = dt * ops.mk[k] * c(k, i);
      }
    sys.add_normal<D>(oX, 0, ops.N);
    if (alpha != 0.0)
      for (int i = 0; i < D - 1; ++i)
        for (Index k = 0; k < K; ++k)
          for (int cc = 0; cc < D; ++cc)
            sys.add(oX + D * k + cc, oB + i * K + k, alpha * ops.mk[k] * tau[i](k, cc));
    sys.add_block(oX, oX, ops.Ablk);
    sys.rhs.tail(D * K) = -ops.AX;
    const VectorXd x = sys.solve();
    kappa = x.head(K);
    extras = x.segment(K, E);
    beta_flat = x.segment(oB, (D - 1) * K);
    dX = x.tail(D * K);
    ++iters;
    if (!picard) break;
    const VectorXd Xnew = flatten<D>(m.X) + dX;
    const bool converged =
        (Xnew - Xprev).cwiseAbs().maxCoeff() < picard_tol * (1.0 + Xprev.cwiseAbs().maxCoeff());
    Xprev = Xnew;
    w = power_weights(kappa, f.beta_exp);
    if (converged) break;
    if (iters >= picard_maxit) {
      out.step.nonlinear_converged = false;
      break;
    }
  }
  out.step.mesh = with_positions(m, typename SurfaceMesh<D>::VertexArray(m.X + unflatten<D>(dX)));
  out.step.kappa = kappa;
  out.step.picard_iters = iters;
  out.beta.resize(K, D - 1);
  for (int i = 0; i < D - 1; ++i) out.beta.col(i) = beta_flat.segment(i * K, K);
  double qt = f_dissipation(f, ops, kappa, extras, &w);
  for (int i = 0; i < D - 1; ++i)
    for (Index k = 0; k < K; ++k)
      qt += alpha * ops.mk[k] * (delta * out.beta(k, i) + c(k, i)) * out.beta(k, i);
  out.step.dissipation = qt;
  out.step.stab_slack = ops.area - surface_measure(out.step.mesh) - dt * qt;
  return out;
}

enum class McfVariant { dziuk, dziuk_lumped, theta, dd95, elimkappa, elimkappa_raw };

inline McfVariant parse_mcf_variant(const std::string& s) {
  if (s == "dziuk") return McfVariant::dziuk;
  if (s == "dziuk_lumped") return McfVariant::dziuk_lumped;
  if (s == "theta") return McfVariant::theta;
  if (s == "dd95") return McfVariant::dd95;
  if (s == "elimkappa") return McfVariant::elimkappa;
  if (s == "elimkappa_raw") return McfVariant::elimkappa_raw;
  throw std::invalid_argument("unknown mcf variant '" + s + "'");
}

// single-solve mean curvature flow variants (dt^{-1} C + A) dX = -A X with a
// variant-specific generalized mass C; dd95 instead uses the parametric
// Laplacian over a uniform parameter grid (curves only)
template <int D>
StepResult<D> step_mcf_variant(const SurfaceMesh<D>& m, double dt, McfVariant var,
                               double theta = 0.0) {
  if (!(dt > 0)) throw std::invalid_argument("step_mcf_variant: dt must be positive");
  const Index K = m.num_vertices();
  SparseMat C, Ablk;
  if (var == McfVariant::dd95) {
    if constexpr (D != 2) {
      throw std::invalid_argument("dd95 variant is defined for curves only");
    } else {
      const Index J = m.num_elements();
      const double hrho = 1.0 / double(J);
      std::vector<Triplet> tm, ta;
      for (Index j = 0; j < J; ++j) {
        const Index a = m.elems(j, 0), b = m.elems(j, 1);
        const double len = (m.vertex(b) - m.vertex(a)).norm();
        const double w = double(J) * len * double(J) * len;
        tm.emplace_back(int(a), int(a), w * hrho / 3.0);
        tm.emplace_back(int(b), int(b), w * hrho / 3.0);
        tm.emplace_back(int(a), int(b), w * hrho / 6.0);
        tm.emplace_back(int(b), int(a), w * hrho / 6.0);
        ta.emplace_back(int(a), int(a), 1.0 / hrho);
        ta.emplace_back(int(b), int(b), 1.0 / hrho);
        ta.emplace_back(int(a), int(b), -1.0 / hrho);
        ta.emplace_back(int(b), int(a), -1.0 / hrho);
      }
      SparseMat Mw(K, K), Arho(K, K);
      Mw.setFromTriplets(tm.begin(), tm.end());
      Arho.setFromTriplets(ta.begin(), ta.end());
      C = kron_identity<D>(Mw);
      Ablk = kron_identity<D>(Arho);
    }
  } else {
    Ablk = vector_stiffness(m);
    switch (var) {
      case McfVariant::dziuk:
        C = kron_identity<D>(full_mass(m));
        break;
      case McfVariant::dziuk_lumped:
        C = kron_identity<D>(diagonal_matrix(lumped_vertex_measures(m)));
        break;
      case McfVariant::theta:
        if (!(theta >= 0.0 && theta <= 1.0))
          throw std::invalid_argument("step_mcf_variant: theta must lie in [0,1]");
        C = qtheta_mass(m, theta);
        break;
      case McfVariant::elimkappa: {
        const auto omega = vertex_normals(m);
        const VectorXd mk = lumped_vertex_measures(m);
        for (Index k = 0; k < K; ++k)
          if (omega.row(k).norm() < 1e-12)
            throw MeshError("elimkappa: vanishing vertex normal at vertex " + std::to_string(k));
        C = vertex_block_diagonal<D>(m, [&](Index k) {
          const Eigen::Matrix<double, D, 1> w = omega.row(k).transpose().normalized();
          return Eigen::Matrix<double, D, D>(mk[k] * w * w.transpose());
        });
        break;
      }
      case McfVariant::elimkappa_raw:
        C = omega_outer_mass(m);
        break;
      default:
        throw std::logic_error("step_mcf_variant: unreachable");
    }
  }
  SparseMat sys = C / dt + Ablk;
  const VectorXd dX = lu_solve(sys, VectorXd(-(Ablk * flatten<D>(m.X))));
  StepResult<D> out{m};
  out.mesh = with_positions(m, typename SurfaceMesh<D>::VertexArray(m.X + unflatten<D>(dX)));
  out.picard_iters = 1;
  return out;
}

enum class MobilityKind { one, gamma, weighted };

struct Mobility {
  MobilityKind kind = MobilityKind::one;
  VectorXd weights;  // diagonal for the weighted kind
};

inline Mobility parse_mobility(const std::string& s) {
  if (s == "one") return {};
  if (s == "gamma") return {MobilityKind::gamma, {}};
  throw std::invalid_argument("unknown mobility '" + s + "'");
}

template <int D>
VectorXd face_mobility(const FaceData<D>& f, const Mobility& mob, const Anisotropy<D>& a) {
  VectorXd b = VectorXd::Ones(f.measures.size());
  if (mob.kind == MobilityKind::gamma) {
    for (Index j = 0; j < b.size(); ++j)
      b[j] = gamma_eval(a, Eigen::Matrix<double, D, 1>(f.normals.row(j).transpose()));
  } else if (mob.kind == MobilityKind::weighted) {
    if (mob.weights.size() != D)
      throw std::invalid_argument("weighted mobility needs one weight per coordinate");
    for (Index j = 0; j < b.size(); ++j) {
      double s = 0;
      for (int c = 0; c < D; ++c) s += mob.weights[c] * f.normals(j, c) * f.normals(j, c);
      b[j] = std::sqrt(s);
    }
  }
  return b;
}

template <int D>
double anisotropic_measure(const SurfaceMesh<D>& m, const Anisotropy<D>& a) {
  const FaceData<D> f = face_data(m);
  double s = 0;
  for (Index j = 0; j < m.num_elements(); ++j)
    s += f.measures[j] * gamma_eval(a, Eigen::Matrix<double, D, 1>(f.normals.row(j).transpose()));
  return s;
}

enum class AnisoOrder { second, fourth };

// anisotropic analogue of the mcf/sd saddle systems; r > 1 families are
// solved by lagging the anisotropy directions to the previous iterate's
// image-mesh face normals
template <int D>
StepResult<D> step_aniso(const SurfaceMesh<D>& m, double dt, const Anisotropy<D>& a,
                         const Mobility& mob, AnisoOrder order,
                         SaddleMethod method = SaddleMethod::direct, double cg_tol = 1e-12,
                         double picard_tol = 1e-10, Index picard_maxit = 100) {
  if (!(dt > 0)) throw std::invalid_argument("step_aniso: dt must be positive");
  if (method == SaddleMethod::schur_cg && order == AnisoOrder::fourth)
    throw std::invalid_argument("schur_cg applies only to the second-order anisotropic scheme");
  const FaceData<D> f = face_data(m);
  const VectorXd beta = face_mobility<D>(f, mob, a);
  const auto N = normal_coupling(m);
  const Index K = m.num_vertices();
  const VectorXd mk_beta = lumped_mass(m, &beta);
  SparseMat A_beta;
  if (order == AnisoOrder::fourth) A_beta = stiffness(m, &beta);
  const double lyap0 = anisotropic_measure(m, a);
  const VectorXd x0 = flatten<D>(m.X);

  const bool picard = a.r != 1.0;
  Eigen::Matrix<double, Eigen::Dynamic, D> v = f.normals;
  StepResult<D> out{m};
  VectorXd kappa, dX;
  VectorXd Xprev = x0, dlast;
  double theta = 1.0;  // relaxation of the direction update
  Index iters = 0;
  for (;;) {
    const SparseMat Ag = aniso_stiffness(m, a, v);
    const VectorXd rhs2 = -(Ag * x0);
    if (method == SaddleMethod::schur_cg) {
      SaddleSystem<D> S{VectorXd(dt * mk_beta), N, Ag, VectorXd::Zero(K), rhs2};
      const SaddleSolution<D> sol = saddle_solve<D>(S, method, cg_tol);
      kappa = sol.kappa;
      dX = sol.dX;
      out.cg_iters += sol.cg_iters;
    } else {
      SystemBuilder sys(K + D * K);
      if (order == AnisoOrder::second)
        sys.add_diag(0, 0, mk_beta, dt);
      else
        sys.add_block(0, 0, A_beta, dt);
      sys.add_normal_T<D>(0, K, N, -1.0);
      sys.add_normal<D>(K, 0, N);
      sys.add_block(K, K, Ag);
      sys.rhs.tail(D * K) = rhs2;
      const VectorXd x = sys.solve();
      kappa = x.head(K);
      dX = x.tail(D * K);
    }
    ++iters;
    if (!picard) break;
    // near-crystalline densities excite an oscillatory mode of the plain
    // lagged map; halving the relaxation flips its multiplier into (-1, 1)
    VectorXd d = x0 + dX - Xprev;
    if (dlast.size() > 0 && d.dot(dlast) < -0.5 * d.norm() * dlast.norm() &&
        d.norm() >= dlast.norm() && theta > 0.0625)
      theta *= 0.5;
    d *= theta;
    const VectorXd Xnew = Xprev + d;
    const bool converged =
        d.cwiseAbs().maxCoeff() < picard_tol * (1.0 + Xprev.cwiseAbs().maxCoeff());
    dlast = d;
    Xprev = Xnew;
    v = face_data(with_positions(m, unflatten<D>(Xnew))).normals;
    if (converged) break;
    if (iters >= picard_maxit) {
      out.nonlinear_converged = false;
      break;
    }
  }
  out.mesh = with_positions(m, typename SurfaceMesh<D>::VertexArray(m.X + unflatten<D>(dX)));
  out.kappa = kappa;
  out.picard_iters = iters;
  out.dissipation = order == AnisoOrder::second ? kappa.dot(mk_beta.cwiseProduct(kappa))
                                                : kappa.dot(A_beta * kappa);
  out.stab_slack = lyap0 - anisotropic_measure(out.mesh, a) - dt * out.dissipation;
  return out;
}

namespace detail {

inline double polygon_length(const MatrixXd& X) {
  const Index J = X.rows();
  double L = 0;
  for (Index j = 0; j < J; ++j) L += (X.row((j + 1) % J) - X.row(j)).norm();
  return L;
}

// closed polygon resampled to equal arclength spacing, vertex 0 kept in place
inline MatrixXd fdfi_resample(const MatrixXd& X) {
  const Index J = X.rows();
  VectorXd cum(J + 1);
  cum[0] = 0;
  for (Index j = 0; j < J; ++j) cum[j + 1] = cum[j] + (X.row((j + 1) % J) - X.row(j)).norm();
  MatrixXd Y(J, 2);
  Index seg = 0;
  for (Index i = 0; i < J; ++i) {
    const double s = double(i) * cum[J] / double(J);
    while (cum[seg + 1] < s) ++seg;
    const double t = (s - cum[seg]) / (cum[seg + 1] - cum[seg]);
    Y.row(i) = (1.0 - t) * X.row(seg) + t * X.row((seg + 1) % J);
  }
  return Y;
}

// residual of the coupled velocity/curvature system; velocity rows
// premultiplied by 2 dt
inline VectorXd fdfi_residual(const MatrixXd& Xm, const VectorXd& kappa, const MatrixXd& X,
                              double dt) {
  const Index J = Xm.rows();
  const double hrho = 1.0 / double(J);
  const double L = polygon_length(X);
  VectorXd F(3 * J);
  for (Index j = 0; j < J; ++j) {
    const Index jm = (j + J - 1) % J, jp = (j + 1) % J;
    const Eigen::Vector2d v = perp(Eigen::Vector2d((X.row(jp) - X.row(jm)).transpose()));
    const Eigen::Vector2d w = (X.row(j) - Xm.row(j)).transpose();
    F[j] = v.dot(w) + 2.0 * dt * L * hrho * kappa[j];
    const Eigen::Vector2d d2 = (2.0 * X.row(j) - X.row(jm) - X.row(jp)).transpose();
    F.segment<2>(J + 2 * j) = 0.5 * kappa[j] * v - d2 / (L * hrho);
  }
  return F;
}

// one solve of the coupled system with vertex normals and length lagged at Xg
inline void fdfi_lagged_solve(const MatrixXd& Xm, const MatrixXd& Xg, double dt, VectorXd& kappa,
                              MatrixXd& X) {
  const Index J = Xm.rows();
  const double hrho = 1.0 / double(J);
  const double L = polygon_length(Xg);
  SystemBuilder sys(3 * J);
  for (Index j = 0; j < J; ++j) {
    const Index jm = (j + J - 1) % J, jp = (j + 1) % J;
    const Eigen::Vector2d v = perp(Eigen::Vector2d((Xg.row(jp) - Xg.row(jm)).transpose()));
    // velocity row: (1/(2 dt)) v . X_j^{new} + L hrho kappa_j = (1/(2 dt)) v . X_j^m
    for (int c = 0; c < 2; ++c) sys.add(j, J + 2 * j + c, v[c] / (2.0 * dt));
    sys.add(j, j, L * hrho);
    sys.rhs[j] = v.dot(Xm.row(j).transpose()) / (2.0 * dt);
    // curvature rows: (1/2) kappa_j v = (1/(L hrho)) (2 X_j - X_{j-1} - X_{j+1})
    for (int c = 0; c < 2; ++c) {
      const Index row = J + 2 * j + c;
      sys.add(row, j, 0.5 * v[c]);
      sys.add(row, J + 2 * j + c, -2.0 / (L * hrho));
      sys.add(row, J + 2 * jm + c, 1.0 / (L * hrho));
      sys.add(row, J + 2 * jp + c, 1.0 / (L * hrho));
    }
  }
  const VectorXd x = sys.solve();
  kappa = x.head(J);
  X = unflatten<2>(x.tail(2 * J));
}

// damped Newton on the coupled system at fixed dt; the Jacobian is a sparse
// part plus a rank-one length coupling, solved as a bordered system with the
// length variation as an extra unknown
inline bool fdfi_newton(const MatrixXd& Xm, VectorXd& kappa, MatrixXd& X, double dt, double tol,
                        Index maxit, Index& used) {
  const Index J = Xm.rows();
  const double hrho = 1.0 / double(J);
  used = 0;
  while (used < maxit) {
    const double L = polygon_length(X);
    SystemBuilder sys(3 * J + 1);
    VectorXd c = VectorXd::Zero(3 * J), g = VectorXd::Zero(3 * J);
    for (Index j = 0; j < J; ++j) {
      const Index jm = (j + J - 1) % J, jp = (j + 1) % J;
      const Eigen::Vector2d v = perp(Eigen::Vector2d((X.row(jp) - X.row(jm)).transpose()));
      const Eigen::Vector2d w = (X.row(j) - Xm.row(j)).transpose();
      const Eigen::Vector2d wP(-w[1], w[0]);
      sys.add(j, j, 2.0 * dt * L * hrho);
      for (int cc = 0; cc < 2; ++cc) {
        sys.add(j, J + 2 * j + cc, v[cc]);
        sys.add(j, J + 2 * jp + cc, wP[cc]);
        sys.add(j, J + 2 * jm + cc, -wP[cc]);
      }
      c[j] = 2.0 * dt * hrho * kappa[j];
      const Eigen::Vector2d d2 = (2.0 * X.row(j) - X.row(jm) - X.row(jp)).transpose();
      for (int a = 0; a < 2; ++a) {
        const Index row = J + 2 * j + a;
        sys.add(row, j, 0.5 * v[a]);
        sys.add(row, J + 2 * j + a, -2.0 / (L * hrho));
        sys.add(row, J + 2 * jm + a, 1.0 / (L * hrho));
        sys.add(row, J + 2 * jp + a, 1.0 / (L * hrho));
        c[row] = d2[a] / (L * L * hrho);
      }
      sys.add(J + 2 * j + 0, J + 2 * jp + 1, 0.5 * kappa[j]);
      sys.add(J + 2 * j + 1, J + 2 * jp + 0, -0.5 * kappa[j]);
      sys.add(J + 2 * j + 0, J + 2 * jm + 1, -0.5 * kappa[j]);
      sys.add(J + 2 * j + 1, J + 2 * jm + 0, 0.5 * kappa[j]);
      // gradient of the total length
      const Eigen::Vector2d tp = (X.row(j) - X.row(jm)).normalized().transpose();
      const Eigen::Vector2d tn = (X.row(jp) - X.row(j)).normalized().transpose();
      g.segment<2>(J + 2 * j) = tp - tn;
    }
    for (Index i = 0; i < 3 * J; ++i)
      if (c[i] != 0) sys.add(i, 3 * J, c[i]);
    for (Index i = J; i < 3 * J; ++i)
      if (g[i] != 0) sys.add(3 * J, i, g[i]);
    sys.add(3 * J, 3 * J, -1.0);
    const VectorXd F = fdfi_residual(Xm, kappa, X, dt);
    sys.rhs.head(3 * J) = -F;
    VectorXd delta;
    try {
      delta = sys.solve().head(3 * J);
    } catch (const SingularMatrixError&) {
      return false;
    }
    if (!delta.allFinite()) return false;
    // backtracking line search on the residual norm, skipping non-finite
    // trial states
    const double f0 = F.norm();
    double theta = 1.0, best_f = std::numeric_limits<double>::infinity(), best_theta = -1.0;
    for (; theta > 1e-8; theta *= 0.5) {
      const VectorXd kn = kappa + theta * delta.head(J);
      const MatrixXd Xn = X + theta * unflatten<2>(VectorXd(delta.tail(2 * J)));
      const double f = fdfi_residual(Xm, kn, Xn, dt).norm();
      if (std::isfinite(f) && f < best_f) {
        best_f = f;
        best_theta = theta;
      }
      if (std::isfinite(f) && f < (1.0 - 1e-4 * theta) * f0) break;
    }
    if (theta <= 1e-8) {
      if (best_theta < 0) return false;
      theta = best_theta;
    }
    const VectorXd kn = kappa + theta * delta.head(J);
    const MatrixXd Xn = X + theta * unflatten<2>(VectorXd(delta.tail(2 * J)));
    const double disp = (Xn - X).cwiseAbs().maxCoeff();
    kappa = kn;
    X = Xn;
    ++used;
    if (disp < tol * (1.0 + X.cwiseAbs().maxCoeff()) ||
        fdfi_residual(Xm, kappa, X, dt).norm() < 1e-11 * (1.0 + polygon_length(X)))
      return true;
  }
  return false;
}

}  // namespace detail

// fully implicit curve scheme whose solutions equidistribute the vertices;
// lagged fixed-point sweeps with a damped-Newton continuation fallback
inline StepResult<2> step_fdfi_equi(const PolyCurve& m, double dt, double picard_tol = 1e-10,
                                    Index picard_maxit = 100) {
  if (!(dt > 0)) throw std::invalid_argument("step_fdfi_equi: dt must be positive");
  const double hrho = 1.0 / double(m.num_vertices());
  const double area0 = surface_measure(m);
  MatrixXd X = m.X;  // iterate positions
  VectorXd kappa;
  Index iters = 0;
  bool converged = false;
  // lagged iteration from the current positions; nearly equidistributed
  // data converges here in a few sweeps, anything else stops contracting
  // quickly and falls through to Newton
  double prev_disp = std::numeric_limits<double>::infinity();
  while (iters < picard_maxit) {
    MatrixXd Xnew;
    detail::fdfi_lagged_solve(m.X, X, dt, kappa, Xnew);
    ++iters;
    const double disp = (Xnew - X).cwiseAbs().maxCoeff();
    const double scale = 1.0 + X.cwiseAbs().maxCoeff();
    X = Xnew;
    if (disp < picard_tol * scale) {
      converged = true;
      break;
    }
    if (disp > 0.25 * prev_disp) break;
    prev_disp = disp;
  }
  if (!converged) {
    // Newton with step-size continuation: solve at an anchor step size of
    // max(dt, mean edge squared) from an equidistributed start, then walk
    // the step size down to dt, warm-starting each stage; a failed anchor
    // solve retries at a smaller anchor
    const double hbar = area0 * hrho;
    double anchor = std::max(dt, hbar * hbar);
    Index used = 0;
    for (int attempt = 0; attempt < 4; ++attempt) {
      detail::fdfi_lagged_solve(m.X, detail::fdfi_resample(m.X), anchor, kappa, X);
      ++iters;
      converged = detail::fdfi_newton(m.X, kappa, X, anchor, picard_tol, picard_maxit, used);
      iters += used;
      if (converged || anchor <= dt * (1.0 + 1e-12)) break;
      anchor = std::max(dt, 0.25 * anchor);
    }
    double dt_cur = anchor, factor = 10.0;
    for (int guard = 0; converged && dt_cur > dt * (1.0 + 1e-12); ++guard) {
      if (guard >= 60) {
        converged = false;
        break;
      }
      const double dt_try = std::max(dt, dt_cur / factor);
      const VectorXd k_save = kappa;
      const MatrixXd X_save = X;
      const bool ok = detail::fdfi_newton(m.X, kappa, X, dt_try, picard_tol, picard_maxit, used);
      iters += used;
      if (ok) {
        dt_cur = dt_try;
        factor = std::min(10.0, factor * 2.0);
      } else {
        kappa = k_save;
        X = X_save;
        factor = std::sqrt(factor);
        if (factor < 1.02) {
          converged = false;
          break;
        }
      }
    }
  }
  StepResult<2> out{m};
  out.mesh = with_positions(m, X);
  out.kappa = kappa;
  out.picard_iters = iters;
  out.nonlinear_converged = converged;
  const double area1 = surface_measure(out.mesh);
  out.dissipation = area1 * hrho * kappa.squaredNorm();
  out.stab_slack = area0 - area1 - dt * out.dissipation;
  return out;
}

}  // namespace pflow
