#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "pflow/mesh.hpp"

namespace pflow {

// gamma(p) = (sum_l (p . G_l p)^(r/2))^(1/r) with SPD G_l and r >= 1.
// Gtilde_l = det(G_l)^(1/(D-1)) G_l^{-1} enters the anisotropic stiffness.
template <int D>
struct Anisotropy {
  using Mat = Eigen::Matrix<double, D, D>;
  double r = 1.0;
  std::vector<Mat> G;
  std::vector<Mat> Gtilde;
  std::vector<double> detG;

  bool isotropic() const {
    return G.size() == 1 && r == 1.0 && (G[0] - Mat::Identity()).norm() == 0.0;
  }
};

template <int D>
Anisotropy<D> make_anisotropy(double r, std::vector<Eigen::Matrix<double, D, D>> Gs) {
  if (r < 1.0) throw std::invalid_argument("anisotropy needs r >= 1");
  if (Gs.empty()) throw std::invalid_argument("anisotropy needs L >= 1 matrices");
  Anisotropy<D> a;
  a.r = r;
  a.G = std::move(Gs);
  for (const auto& G : a.G) {
    if ((G - G.transpose()).norm() > 1e-12 * G.norm())
      throw std::invalid_argument("anisotropy matrix not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, D, D>> es(G);
    if (es.eigenvalues().minCoeff() <= 0)
      throw std::invalid_argument("anisotropy matrix not positive definite");
    const double det = G.determinant();
    a.detG.push_back(det);
    a.Gtilde.push_back(std::pow(det, 1.0 / (D - 1)) * G.inverse());
  }
  return a;
}

template <int D>
double gamma_l(const Anisotropy<D>& a, size_t l, const Eigen::Matrix<double, D, 1>& p) {
  return std::sqrt(p.dot(a.G[l] * p));
}

template <int D>
double gamma_eval(const Anisotropy<D>& a, const Eigen::Matrix<double, D, 1>& p) {
  if (a.G.size() == 1) return gamma_l(a, 0, p);
  double s = 0;
  for (size_t l = 0; l < a.G.size(); ++l) s += std::pow(gamma_l(a, l, p), a.r);
  return std::pow(s, 1.0 / a.r);
}

template <int D>
Eigen::Matrix<double, D, 1> gamma_grad(const Anisotropy<D>& a,
                                       const Eigen::Matrix<double, D, 1>& p) {
  Eigen::Matrix<double, D, 1> g = Eigen::Matrix<double, D, 1>::Zero();
  if (a.G.size() == 1) {
    const double gl = gamma_l(a, 0, p);
    return a.G[0] * p / gl;
  }
  const double gam = gamma_eval(a, p);
  for (size_t l = 0; l < a.G.size(); ++l) {
    const double gl = gamma_l(a, l, p);
    g += std::pow(gl, a.r - 1.0) * (a.G[l] * p) / gl;
  }
  return std::pow(gam, 1.0 - a.r) * g;
}

namespace detail {

template <int D>
std::vector<Eigen::Matrix<double, D, 1>> unit_directions(Index n) {
  std::vector<Eigen::Matrix<double, D, 1>> dirs;
  dirs.reserve(size_t(n));
  if constexpr (D == 2) {
    for (Index i = 0; i < n; ++i) {
      const double th = 2.0 * std::numbers::pi * double(i) / double(n);
      dirs.push_back(Eigen::Vector2d(std::cos(th), std::sin(th)));
    }
  } else {
    // Fibonacci sphere
    const double ga = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (Index i = 0; i < n; ++i) {
      const double z = 1.0 - 2.0 * (double(i) + 0.5) / double(n);
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double th = ga * double(i);
      dirs.push_back(Eigen::Vector3d(rho * std::cos(th), rho * std::sin(th), z));
    }
  }
  return dirs;
}

}  // namespace detail

// sampled sup_{|p|=1} (p . q) / gamma(p)
template <int D>
double dual_gamma_eval(const Anisotropy<D>& a, const Eigen::Matrix<double, D, 1>& q,
                       Index n_dirs = 1024) {
  if (n_dirs < 8) throw std::invalid_argument("dual_gamma_eval needs n_dirs >= 8");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& p : detail::unit_directions<D>(n_dirs))
    best = std::max(best, p.dot(q) / gamma_eval(a, p));
  return best;
}

struct ShapeSamples {
  MatrixXd frank;  // n x D points p/gamma(p), boundary of the 1-level set of gamma
  MatrixXd wulff;  // n x D points gamma'(p), boundary of the Wulff shape
};

template <int D>
ShapeSamples sample_shapes(const Anisotropy<D>& a, Index n = 256) {
  const auto dirs = detail::unit_directions<D>(n);
  ShapeSamples s{MatrixXd(Index(dirs.size()), D), MatrixXd(Index(dirs.size()), D)};
  for (Index i = 0; i < Index(dirs.size()); ++i) {
    s.frank.row(i) = (dirs[size_t(i)] / gamma_eval(a, dirs[size_t(i)])).transpose();
    s.wulff.row(i) = gamma_grad(a, dirs[size_t(i)]).transpose();
  }
  return s;
}

// --- presets ---

template <int D>
Anisotropy<D> aniso_iso() {
  return make_anisotropy<D>(1.0, {Eigen::Matrix<double, D, D>::Identity()});
}

template <int D>
Anisotropy<D> aniso_weighted(const Eigen::Matrix<double, D, 1>& diag) {
  if (diag.minCoeff() <= 0) throw std::invalid_argument("weighted anisotropy needs positive weights");
  Eigen::Matrix<double, D, D> G = diag.asDiagonal();
  return make_anisotropy<D>(1.0, {G});
}

// G_l = eps^2 I + (1-eps^2) e_l e_l^T, l = 1..D, regularized l1 density (r=1)
template <int D>
Anisotropy<D> aniso_l1reg(double eps, double r = 1.0) {
  if (!(eps > 0 && eps <= 1)) throw std::invalid_argument("l1reg needs 0 < eps <= 1");
  std::vector<Eigen::Matrix<double, D, D>> Gs;
  for (int l = 0; l < D; ++l) {
    Eigen::Matrix<double, D, D> G = eps * eps * Eigen::Matrix<double, D, D>::Identity();
    G(l, l) += 1.0 - eps * eps;
    Gs.push_back(G);
  }
  return make_anisotropy<D>(r, std::move(Gs));
}

template <int D>
Anisotropy<D> aniso_cubic(double eps, double r) {
  return aniso_l1reg<D>(eps, r);
}

// prismatic hexagonal density (D=3): l_eps(R2(pi/2) p) + 3^(-1/2) sum_l l_eps(R1(theta0 + l pi/3) p)
inline Anisotropy<3> aniso_hexagonal(double eps, double theta0) {
  if (!(eps > 0 && eps <= 1)) throw std::invalid_argument("hexagonal needs 0 < eps <= 1");
  using Mat = Eigen::Matrix3d;
  const Mat Deps = Eigen::Vector3d(1.0, eps * eps, eps * eps).asDiagonal();
  auto R1 = [](double th) {
    Mat R;
    R << std::cos(th), std::sin(th), 0, -std::sin(th), std::cos(th), 0, 0, 0, 1;
    return R;
  };
  Mat R2;  // rotation by pi/2 in the x1-x3 plane
  R2 << 0, 0, 1, 0, 1, 0, -1, 0, 0;
  std::vector<Mat> Gs;
  Gs.push_back(R2.transpose() * Deps * R2);
  for (int l = 1; l <= 3; ++l) {
    const Mat R = R1(theta0 + double(l) * std::numbers::pi / 3.0);
    Gs.push_back((R.transpose() * Deps * R) / 3.0);
  }
  return make_anisotropy<3>(1.0, std::move(Gs));
}

}  // namespace pflow
