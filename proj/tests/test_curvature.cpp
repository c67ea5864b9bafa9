#include <cmath>
#include <random>

#include "doctest.h"
#include "pflow/curvature.hpp"
#include "pflow/generate.hpp"

using namespace pflow;

namespace {

const double pi = std::acos(-1.0);

// classical periodic second-difference stencil, assembled without the fem machinery
Eigen::Matrix<double, Eigen::Dynamic, 2> stencil_curvature(const PolyCurve& m) {
  const Index J = m.num_vertices();
  Eigen::Matrix<double, Eigen::Dynamic, 2> kv(J, 2);
  for (Index k = 0; k < J; ++k) {
    const Eigen::Vector2d x = m.X.row(k), xp = m.X.row((k + 1) % J),
                          xm = m.X.row((k + J - 1) % J);
    const double hp = (xp - x).norm(), hm = (x - xm).norm();
    kv.row(k) = (((xp - x) / hp - (x - xm) / hm) / (0.5 * (hp + hm))).transpose();
  }
  return kv;
}

}  // namespace

TEST_CASE("curvature vector is exactly 1/R inward on regular polygons") {
  for (Index J : {8L, 64L}) {
    const double R = 2.0;
    const PolyCurve m = generate_circle(J, R, 0.0);
    const auto kv = lb_curvature_vector(m);
    for (Index k = 0; k < J; ++k) {
      CHECK(std::abs(kv.row(k).norm() - 1.0 / R) < 1e-13);
      // points toward the center
      CHECK(std::abs(kv.row(k).dot(m.X.row(k).normalized()) + 1.0 / R) < 1e-13);
    }
  }
}

TEST_CASE("curvature vector matches the classical stencil on a nonuniform curve") {
  const PolyCurve m = generate_circle(48, 1.0, 0.25, 99);
  const auto kv = lb_curvature_vector(m);
  const auto ref = stencil_curvature(m);
  CHECK((kv - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("scalar curvature on a regular polygon is 1/(R cos(pi/J))") {
  for (Index J : {16L, 64L}) {
    for (double R : {1.0, 2.5}) {
      const PolyCurve m = generate_circle(J, R, 0.0);
      const BgnCurvature<2> bc = bgn_curvature(m);
      const double exact = 1.0 / (R * std::cos(pi / double(J)));
      for (Index k = 0; k < J; ++k) {
        CHECK(std::abs(bc.kappa[k] - exact) < 1e-10);
        CHECK(bc.correction.row(k).norm() < 1e-10 * R);
      }
    }
  }
}

TEST_CASE("scalar curvature satisfies its variational identity nodewise") {
  // row 2 of the saddle system: mk kappa_k omega_k + (A(X + dX))_k = 0,
  // row 1: the correction carries no weighted-normal component
  auto check_identity = [](const auto& m) {
    constexpr int D =
        std::decay_t<decltype(m.X.row(0))>::ColsAtCompileTime == 2 ? 2 : 3;
    const auto bc = bgn_curvature(m);
    const VectorXd mk = lumped_vertex_measures(m);
    const auto omega = vertex_normals(m);
    // the stiffness matrix stays the one of the unmoved mesh
    const Eigen::Matrix<double, Eigen::Dynamic, D> residual =
        stiffness(m) * (m.X + bc.correction);
    for (Index k = 0; k < m.num_vertices(); ++k) {
      const auto lhs = (mk[k] * bc.kappa[k] * omega.row(k) + residual.row(k)).norm();
      CHECK(lhs < 1e-10);
      CHECK(std::abs(mk[k] * bc.correction.row(k).dot(omega.row(k))) < 1e-10);
    }
  };
  check_identity(generate_circle(40, 1.0, 0.2, 5));
  check_identity(generate_icosphere(1, 1.0));
}

TEST_CASE("nodal identity kappa_k omega_k = -(AX)_k / mk on regular polygons") {
  for (Index J : {16L, 64L}) {
    const PolyCurve m = generate_circle(J, 1.0, 0.0);
    const BgnCurvature<2> bc = bgn_curvature(m);
    const auto kv = lb_curvature_vector(m);
    const auto omega = vertex_normals(m);
    for (Index k = 0; k < J; ++k)
      CHECK((bc.kappa[k] * omega.row(k) - kv.row(k)).norm() < 1e-12);
  }
}

TEST_CASE("sphere curvatures approximate 2/R") {
  const double R = 1.0;
  const TriSurface m = generate_icosphere(2, R);
  const auto kv = lb_curvature_vector(m);
  const BgnCurvature<3> bc = bgn_curvature(m);
  double kv_mean = 0, kap_mean = 0;
  const VectorXd mk = lumped_vertex_measures(m);
  for (Index k = 0; k < m.num_vertices(); ++k) {
    CHECK(kv.row(k).norm() > 1.5 / R);
    CHECK(kv.row(k).norm() < 2.5 / R);
    CHECK(kv.row(k).dot(m.X.row(k).normalized()) < 0);  // inward
    CHECK(bc.kappa[k] > 1.7 / R);
    CHECK(bc.kappa[k] < 2.3 / R);
    kv_mean += mk[k] * kv.row(k).norm();
    kap_mean += mk[k] * bc.kappa[k];
  }
  const double area = surface_measure(m);
  CHECK(std::abs(kv_mean / area - 2.0 / R) < 0.05);
  CHECK(std::abs(kap_mean / area - 2.0 / R) < 0.04);
}

TEST_CASE("lumped weingarten equals -kappa t t^T exactly on regular polygons") {
  const Index J = 32;
  const double R = 1.5;
  const PolyCurve m = generate_circle(J, R, 0.0);
  const BgnCurvature<2> bc = bgn_curvature(m);
  const double kappa = 1.0 / (R * std::cos(pi / double(J)));
  const BlockField<2> W = weingarten_wh(m, bc.kappa);
  const auto omega = vertex_normals(m);
  for (Index k = 0; k < J; ++k) {
    CHECK(std::abs(W[k].squaredNorm() - kappa * kappa) < 1e-12);
    CHECK(std::abs(W[k].trace() + kappa) < 1e-12);
    // the weighted normal spans the kernel
    CHECK((W[k] * omega.row(k).normalized().transpose()).norm() < 1e-12);
  }
  const VectorXd w2 =
      weingarten_sq_norm(m, WeingartenVariant::wh, bc.kappa, lb_curvature_vector(m));
  CHECK(std::abs(w2.maxCoeff() - kappa * kappa) < 1e-12);
  CHECK(std::abs(w2.minCoeff() - kappa * kappa) < 1e-12);
}

TEST_CASE("normal-gradient weingarten is exactly 1/R^2 on regular polygons") {
  const Index J = 20;
  const double R = 1.5;
  const PolyCurve m = generate_circle(J, R, 0.0);
  const BlockField<2> W = weingarten_nabsomega_elems(m);
  for (Index j = 0; j < m.num_elements(); ++j)
    CHECK(std::abs(W[j].squaredNorm() - 1.0 / (R * R)) < 1e-12);
  const VectorXd w2 = weingarten_sq_norm(m, WeingartenVariant::nabsomega, VectorXd(),
                                         Eigen::Matrix<double, Eigen::Dynamic, 2>());
  for (Index k = 0; k < J; ++k) CHECK(std::abs(w2[k] - 1.0 / (R * R)) < 1e-12);
}

TEST_CASE("symmetrized and consistent-mass weingarten converge on a fine circle") {
  const Index J = 128;
  const PolyCurve m = generate_circle(J, 1.0, 0.0);
  const auto kv = lb_curvature_vector(m);
  const VectorXd wsym = weingarten_sq_norm(m, WeingartenVariant::whsym, VectorXd(), kv);
  const VectorXd wh04 =
      weingarten_sq_norm(m, WeingartenVariant::heine04, VectorXd(), kv);
  for (Index k = 0; k < J; ++k) {
    CHECK(std::abs(wsym[k] - 1.0) < 0.01);
    CHECK(std::abs(wh04[k] - 1.0) < 0.01);
  }
}

TEST_CASE("symmetrized weingarten blocks are symmetric on arbitrary meshes") {
  const PolyCurve c = generate_circle(24, 1.0, 0.3, 12);
  const BlockField<2> Wc = weingarten_whsym(c, lb_curvature_vector(c));
  for (const auto& B : Wc) CHECK((B - B.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  const TriSurface s = generate_icosphere(1, 1.0);
  const BlockField<3> Ws = weingarten_whsym(s, lb_curvature_vector(s));
  for (const auto& B : Ws) CHECK((B - B.transpose()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("all weingarten variants report |W|^2 near 2 on the unit sphere") {
  const TriSurface m = generate_icosphere(2, 1.0);
  const BgnCurvature<3> bc = bgn_curvature(m);
  const auto kv = lb_curvature_vector(m);
  for (WeingartenVariant v : {WeingartenVariant::wh, WeingartenVariant::whsym,
                              WeingartenVariant::heine04, WeingartenVariant::nabsomega}) {
    const VectorXd w2 = weingarten_sq_norm(m, v, bc.kappa, kv);
    CHECK(std::abs(lumped_mean(m, w2) - 2.0) < 0.25);
  }
}

TEST_CASE("normal-gradient weingarten rejects vanishing vertex normals") {
  TriSurface pillow;
  pillow.X.resize(3, 3);
  pillow.X << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  pillow.elems.resize(2, 3);
  pillow.elems << 0, 1, 2, 0, 2, 1;
  CHECK_THROWS_AS(weingarten_nabsomega_elems(pillow), MeshError);
}

TEST_CASE("weingarten variant names parse") {
  CHECK(parse_weingarten("wh") == WeingartenVariant::wh);
  CHECK(parse_weingarten("whsym") == WeingartenVariant::whsym);
  CHECK(parse_weingarten("heine04") == WeingartenVariant::heine04);
  CHECK(parse_weingarten("nabsomega") == WeingartenVariant::nabsomega);
  CHECK_THROWS_AS(parse_weingarten("qq"), std::invalid_argument);
}

TEST_CASE("lumped mean reproduces constants and weighted averages") {
  const TriSurface m = generate_icosphere(1, 2.0);
  CHECK(std::abs(lumped_mean(m, VectorXd::Ones(m.num_vertices())) - 1.0) < 1e-14);
  const VectorXd mk = lumped_vertex_measures(m);
  VectorXd u = VectorXd::Zero(m.num_vertices());
  u[0] = 3.0;
  CHECK(std::abs(lumped_mean(m, u) - 3.0 * mk[0] / surface_measure(m)) < 1e-14);
}
