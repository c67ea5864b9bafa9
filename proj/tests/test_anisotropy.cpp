#include <random>

#include "doctest.h"
#include "pflow/anisotropy.hpp"
#include "pflow/flows.hpp"

using namespace pflow;

namespace {

template <int D>
Eigen::Matrix<double, D, 1> random_dir(std::mt19937& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Matrix<double, D, 1> p;
  do {
    for (int c = 0; c < D; ++c) p[c] = gauss(rng);
  } while (p.norm() < 1e-3);
  return p;
}

template <int D>
void check_density_identities(const Anisotropy<D>& a, Index trials, std::mt19937& rng) {
  for (Index t = 0; t < trials; ++t) {
    const auto p = random_dir<D>(rng);
    const double g = gamma_eval(a, p);
    CHECK(g > 0);
    // one-homogeneous: gamma'(p) . p = gamma(p)
    CHECK(std::abs(gamma_grad(a, p).dot(p) - g) < 1e-10 * g);
    for (double lam : {-2.0, -1.0, 0.5, 3.0})
      CHECK(std::abs(gamma_eval<D>(a, lam * p) - std::abs(lam) * g) < 1e-12 * g * std::abs(lam));
    // gradient against a central difference
    const double step = 1e-6;
    const auto grad = gamma_grad(a, p);
    for (int c = 0; c < D; ++c) {
      Eigen::Matrix<double, D, 1> e = Eigen::Matrix<double, D, 1>::Zero();
      e[c] = step;
      const double fd = (gamma_eval<D>(a, p + e) - gamma_eval<D>(a, p - e)) / (2.0 * step);
      CHECK(std::abs(grad[c] - fd) < 1e-5 * (1.0 + std::abs(fd)));
    }
  }
}

}  // namespace

TEST_CASE("density identities for every preset") {
  std::mt19937 rng(42);
  check_density_identities(aniso_iso<2>(), 200, rng);
  check_density_identities(aniso_iso<3>(), 200, rng);
  check_density_identities(aniso_weighted<2>(Eigen::Vector2d(1.0, 0.25)), 200, rng);
  check_density_identities(aniso_weighted<3>(Eigen::Vector3d(1.0, 0.25, 4.0)), 200, rng);
  check_density_identities(aniso_l1reg<2>(0.2), 200, rng);
  check_density_identities(aniso_l1reg<3>(0.1), 200, rng);
  check_density_identities(aniso_cubic<2>(0.5, 4.0), 200, rng);
  check_density_identities(aniso_cubic<3>(0.01, 30.0), 200, rng);
  check_density_identities(aniso_hexagonal(0.2, 0.3), 200, rng);
}

TEST_CASE("dual matrices satisfy Gtilde G = det^(1/(D-1)) I") {
  auto check = [](const auto& a) {
    constexpr int D = std::decay_t<decltype(a)>::Mat::RowsAtCompileTime;
    for (size_t l = 0; l < a.G.size(); ++l) {
      const auto lhs = (a.Gtilde[l] * a.G[l]).eval();
      const double scale = std::pow(a.detG[l], 1.0 / (D - 1));
      CHECK((lhs - scale * std::decay_t<decltype(lhs)>::Identity()).norm() < 1e-12 * scale);
    }
  };
  check(aniso_weighted<2>(Eigen::Vector2d(1.0, 0.25)));
  check(aniso_l1reg<3>(0.1));
  check(aniso_hexagonal(0.2, 0.0));
}

TEST_CASE("weighted density evaluates the diagonal form") {
  const auto a = aniso_weighted<2>(Eigen::Vector2d(1.0, 0.25));
  CHECK(std::abs(gamma_eval(a, Eigen::Vector2d(0, 1)) - 0.5) < 1e-15);
  CHECK(std::abs(gamma_eval(a, Eigen::Vector2d(1, 0)) - 1.0) < 1e-15);
  CHECK(std::abs(gamma_eval(a, Eigen::Vector2d(3, 4)) - std::sqrt(13.0)) < 1e-14);
}

TEST_CASE("unit square has weighted anisotropic perimeter 3") {
  MatrixXd P(4, 2);
  P << 0, 0, 1, 0, 1, 1, 0, 1;
  const PolyCurve m = make_curve(P);
  const auto a = aniso_weighted<2>(Eigen::Vector2d(1.0, 0.25));
  CHECK(std::abs(anisotropic_measure(m, a) - 3.0) < 1e-14);
  CHECK(std::abs(anisotropic_measure(m, aniso_iso<2>()) - 4.0) < 1e-14);
}

TEST_CASE("regularized cubic density barely exceeds one along the axes") {
  const double eps = 0.01, r = 30.0;
  const auto a = aniso_cubic<3>(eps, r);
  for (int c = 0; c < 3; ++c) {
    Eigen::Vector3d e = Eigen::Vector3d::Zero();
    e[c] = 1.0;
    const double g = gamma_eval(a, e);
    CHECK(g >= 1.0);  // the 2 eps^r excess underflows for this eps, r
    CHECK(g < 1.0 + eps);
    // exact closed form (1 + (D-1) eps^r)^(1/r)
    CHECK(std::abs(g - std::pow(1.0 + 2.0 * std::pow(eps, r), 1.0 / r)) < 1e-15);
  }
  // a milder pair where the excess is representable
  const auto b = aniso_cubic<3>(0.2, 4.0);
  const double gb = gamma_eval(b, Eigen::Vector3d(1, 0, 0));
  CHECK(gb > 1.0);
  CHECK(gb < 1.2);
  CHECK(std::abs(gb - std::pow(1.0 + 2.0 * std::pow(0.2, 4.0), 0.25)) < 1e-15);
}

TEST_CASE("frank and wulff samples lie on the predicted quadrics") {
  const auto a = aniso_weighted<2>(Eigen::Vector2d(1.0, 0.25));
  const ShapeSamples s = sample_shapes(a, 128);
  for (Index i = 0; i < s.wulff.rows(); ++i) {
    const double x = s.wulff(i, 0), y = s.wulff(i, 1);
    CHECK(std::abs(x * x + 4.0 * y * y - 1.0) < 1e-12);
    const double fx = s.frank(i, 0), fy = s.frank(i, 1);
    CHECK(std::abs(fx * fx + 0.25 * fy * fy - 1.0) < 1e-12);
  }
}

TEST_CASE("sampled dual density") {
  // 1024 directions resolve the maximizer to |q| (pi/1024)^2 / 2
  const auto iso = aniso_iso<2>();
  CHECK(std::abs(dual_gamma_eval(iso, Eigen::Vector2d(3, 4)) - 5.0) < 5e-5);
  const auto a = aniso_weighted<2>(Eigen::Vector2d(1.0, 0.25));
  // dual of sqrt(p . diag(1, 1/4) p) is sqrt(q . diag(1, 4) q)
  CHECK(std::abs(dual_gamma_eval(a, Eigen::Vector2d(0, 1)) - 2.0) < 1e-6);
  CHECK(std::abs(dual_gamma_eval(a, Eigen::Vector2d(1, 0)) - 1.0) < 1e-6);
  CHECK_THROWS_AS(dual_gamma_eval(a, Eigen::Vector2d(1, 0), 4), std::invalid_argument);
}

TEST_CASE("hexagonal density has six-fold symmetry about the prism axis") {
  const auto a = aniso_hexagonal(0.15, 0.0);
  CHECK(a.G.size() == 4);
  CHECK(a.r == 1.0);
  std::mt19937 rng(3);
  Eigen::Matrix3d R;
  const double c = std::cos(std::numbers::pi / 3.0), s = std::sin(std::numbers::pi / 3.0);
  R << c, -s, 0, s, c, 0, 0, 0, 1;
  for (int t = 0; t < 50; ++t) {
    const Eigen::Vector3d p = random_dir<3>(rng);
    const double g = gamma_eval(a, p);
    CHECK(std::abs(gamma_eval<3>(a, R * p) - g) < 1e-12 * g);
    CHECK(std::abs(gamma_eval<3>(a, Eigen::Vector3d(p[0], p[1], -p[2])) - g) < 1e-12 * g);
  }
}

TEST_CASE("invalid anisotropies are rejected") {
  CHECK_THROWS_AS(make_anisotropy<2>(0.5, {Eigen::Matrix2d::Identity()}), std::invalid_argument);
  CHECK_THROWS_AS(make_anisotropy<2>(1.0, {}), std::invalid_argument);
  Eigen::Matrix2d asym;
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(make_anisotropy<2>(1.0, {asym}), std::invalid_argument);
  Eigen::Matrix2d indef;
  indef << 1, 0, 0, -1;
  CHECK_THROWS_AS(make_anisotropy<2>(1.0, {indef}), std::invalid_argument);
  CHECK_THROWS_AS(aniso_weighted<2>(Eigen::Vector2d(1.0, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(aniso_l1reg<3>(0.0), std::invalid_argument);
  CHECK_THROWS_AS(aniso_hexagonal(2.0, 0.0), std::invalid_argument);
}

TEST_CASE("isotropic detection") {
  CHECK(aniso_iso<2>().isotropic());
  CHECK(aniso_iso<3>().isotropic());
  CHECK(!aniso_weighted<2>(Eigen::Vector2d(1.0, 0.25)).isotropic());
  CHECK(!aniso_l1reg<3>(0.5).isotropic());
}
