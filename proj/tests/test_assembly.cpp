#include <random>
#include <sstream>

#include "doctest.h"
#include "pflow/assembly.hpp"
#include "pflow/generate.hpp"

using namespace pflow;

// Reference assembly on dense matrices, built from first principles: basis
// gradients from the affine interpolation conditions, measures from Gram
// determinants, masses from quadrature exact on quadratics.
namespace {

template <int D>
struct RefElem {
  Eigen::Matrix<double, D, D> g;  // column i = gradient of basis i
  Eigen::Matrix<double, D, 1> nu;
  double measure;
};

template <int D>
RefElem<D> ref_elem(const SurfaceMesh<D>& m, Index j) {
  RefElem<D> r;
  Eigen::Matrix<double, D, D - 1> B;
  for (int e = 0; e < D - 1; ++e)
    B.col(e) = m.vertex(m.elems(j, e + 1)) - m.vertex(m.elems(j, 0));
  const Eigen::Matrix<double, D - 1, D - 1> Gram = B.transpose() * B;
  r.measure = std::sqrt(Gram.determinant()) / (D == 3 ? 2.0 : 1.0);
  for (int i = 0; i < D; ++i) {
    Eigen::Matrix<double, D - 1, 1> c;
    for (int e = 0; e < D - 1; ++e) c[e] = (i == e + 1 ? 1.0 : 0.0) - (i == 0 ? 1.0 : 0.0);
    r.g.col(i) = B * Gram.inverse() * c;
  }
  if constexpr (D == 2) {
    r.nu = Eigen::Vector2d(-B(1, 0), B(0, 0)).normalized();
  } else {
    r.nu = Eigen::Vector3d(B.col(0)).cross(Eigen::Vector3d(B.col(1))).normalized();
  }
  return r;
}

template <int D>
MatrixXd ref_stiffness(const SurfaceMesh<D>& m, const VectorXd* fw = nullptr) {
  MatrixXd A = MatrixXd::Zero(m.num_vertices(), m.num_vertices());
  for (Index j = 0; j < m.num_elements(); ++j) {
    const RefElem<D> e = ref_elem(m, j);
    const double w = fw ? (*fw)[j] : 1.0;
    for (int a = 0; a < D; ++a)
      for (int b = 0; b < D; ++b)
        A(m.elems(j, a), m.elems(j, b)) += w * e.measure * e.g.col(a).dot(e.g.col(b));
  }
  return A;
}

// quadrature exact on quadratics: 2-point Gauss (curves), mid-edge rule (triangles)
template <int D>
MatrixXd ref_full_mass(const SurfaceMesh<D>& m) {
  MatrixXd M = MatrixXd::Zero(m.num_vertices(), m.num_vertices());
  for (Index j = 0; j < m.num_elements(); ++j) {
    const RefElem<D> e = ref_elem(m, j);
    std::vector<std::array<double, D>> pts;  // barycentric quadrature nodes
    std::vector<double> wq;
    if constexpr (D == 2) {
      const double s = 1.0 / (2.0 * std::sqrt(3.0));
      pts = {{0.5 + s, 0.5 - s}, {0.5 - s, 0.5 + s}};
      wq = {0.5, 0.5};
    } else {
      pts = {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}};
      wq = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    }
    for (size_t q = 0; q < pts.size(); ++q)
      for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b)
          M(m.elems(j, a), m.elems(j, b)) += e.measure * wq[q] * pts[q][a] * pts[q][b];
  }
  return M;
}

template <int D>
MatrixXd ref_normal_coupling(const SurfaceMesh<D>& m) {
  MatrixXd N = MatrixXd::Zero(m.num_vertices(), D);
  for (Index j = 0; j < m.num_elements(); ++j) {
    const RefElem<D> e = ref_elem(m, j);
    for (int v = 0; v < D; ++v) N.row(m.elems(j, v)) += e.measure / D * e.nu.transpose();
  }
  return N;
}

template <int D>
Eigen::Matrix<double, Eigen::Dynamic, D> random_field(Index K, std::mt19937& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Matrix<double, Eigen::Dynamic, D> u(K, D);
  for (Index k = 0; k < K; ++k)
    for (int c = 0; c < D; ++c) u(k, c) = gauss(rng);
  return u;
}

template <int D>
void compare_against_reference(const SurfaceMesh<D>& m, std::mt19937& rng) {
  const Index K = m.num_vertices();
  const double tol = 1e-12;

  const MatrixXd A(stiffness(m));
  const MatrixXd Aref = ref_stiffness(m);
  const double ascale = Aref.cwiseAbs().maxCoeff();
  CHECK((A - Aref).cwiseAbs().maxCoeff() < tol * ascale);
  CHECK((A - A.transpose()).cwiseAbs().maxCoeff() < tol * ascale);
  CHECK((A * VectorXd::Ones(K)).cwiseAbs().maxCoeff() < tol * ascale);

  VectorXd fw(m.num_elements());
  std::uniform_real_distribution<double> uni(0.5, 2.0);
  for (Index j = 0; j < m.num_elements(); ++j) fw[j] = uni(rng);
  CHECK((MatrixXd(stiffness(m, &fw)) - ref_stiffness(m, &fw)).cwiseAbs().maxCoeff() <
        tol * ascale);

  const MatrixXd M(full_mass(m));
  const MatrixXd Mref = ref_full_mass(m);
  CHECK((M - Mref).cwiseAbs().maxCoeff() < tol * Mref.cwiseAbs().maxCoeff());
  // row sums of the consistent mass recover the lumped diagonal
  const VectorXd mk = lumped_mass(m);
  CHECK((M * VectorXd::Ones(K) - mk).cwiseAbs().maxCoeff() < tol * mk.maxCoeff());
  CHECK((mk - lumped_vertex_measures(m)).cwiseAbs().maxCoeff() == 0.0);

  const auto N = normal_coupling(m);
  CHECK((MatrixXd(N) - ref_normal_coupling(m)).cwiseAbs().maxCoeff() < tol);
  // rows factor into vertex measure times averaged vertex normal
  const auto omega = vertex_normals(m);
  for (Index k = 0; k < K; ++k)
    CHECK((N.row(k) - mk[k] * omega.row(k)).cwiseAbs().maxCoeff() < tol * mk.maxCoeff());

  // adjoint pair on interleaved vectors
  const VectorXd kap = random_field<1>(K, rng);
  const VectorXd x = flatten<D>(random_field<D>(K, rng));
  CHECK(std::abs(apply_normal_coupling(N, kap).dot(x) - kap.dot(apply_normal_coupling_T(N, x))) <
        1e-12 * x.norm() * kap.norm());

  // vector stiffness acts componentwise
  const SparseMat Ak = vector_stiffness(m);
  const auto u = random_field<D>(K, rng);
  const VectorXd Au = Ak * flatten<D>(u);
  for (int c = 0; c < D; ++c) {
    const VectorXd ac = A * u.col(c);
    for (Index k = 0; k < K; ++k) CHECK(std::abs(Au[D * k + c] - ac[k]) < tol * ascale * u.norm());
  }

  // divergence-divergence form against per-element reference
  const SparseMat DD = divdiv(m);
  const auto v = random_field<D>(K, rng);
  double ref = 0;
  for (Index j = 0; j < m.num_elements(); ++j) {
    const RefElem<D> e = ref_elem(m, j);
    double du = 0, dv = 0;
    for (int k = 0; k < D; ++k) {
      du += e.g.col(k).dot(u.row(m.elems(j, k)));
      dv += e.g.col(k).dot(v.row(m.elems(j, k)));
    }
    ref += e.measure * du * dv;
  }
  const double dd = flatten<D>(u).dot(DD * flatten<D>(v));
  CHECK(std::abs(dd - ref) < 1e-11 * (1.0 + std::abs(ref)));

  // deformation pairing against trace form with projected symmetric gradient
  const SparseMat DS = deformation_pairing(m);
  double ref2 = 0;
  for (Index j = 0; j < m.num_elements(); ++j) {
    const RefElem<D> e = ref_elem(m, j);
    Eigen::Matrix<double, D, D> Gu = Eigen::Matrix<double, D, D>::Zero();
    Eigen::Matrix<double, D, D> Gv = Eigen::Matrix<double, D, D>::Zero();
    for (int k = 0; k < D; ++k) {
      Gu += u.row(m.elems(j, k)).transpose() * e.g.col(k).transpose();
      Gv += v.row(m.elems(j, k)).transpose() * e.g.col(k).transpose();
    }
    const Eigen::Matrix<double, D, D> P =
        Eigen::Matrix<double, D, D>::Identity() - e.nu * e.nu.transpose();
    const Eigen::Matrix<double, D, D> Dsv = 0.5 * P * (Gv + Gv.transpose()) * P;
    ref2 += e.measure * (Gu.transpose() * Dsv).trace();
  }
  const double ds = flatten<D>(u).dot(DS * flatten<D>(v));
  CHECK(std::abs(ds - ref2) < 1e-11 * (1.0 + std::abs(ref2)));
  CHECK((MatrixXd(DS) - MatrixXd(DS).transpose()).cwiseAbs().maxCoeff() < tol * ascale);

  // rigid rotations are annihilated by the symmetrized gradient
  Eigen::Matrix<double, D, D> W = Eigen::Matrix<double, D, D>::Zero();
  W(0, 1) = 1.0;
  W(1, 0) = -1.0;
  Eigen::Matrix<double, Eigen::Dynamic, D> rot(K, D);
  for (Index k = 0; k < K; ++k) rot.row(k) = (W * m.vertex(k)).transpose();
  CHECK((DS * flatten<D>(rot)).cwiseAbs().maxCoeff() < 1e-11 * ascale * m.diameter());

  // lumped right-hand-side pairings
  const VectorXd w = random_field<1>(K, rng);
  const VectorXd rdiv = lumped_pair_with_divergence(m, w);
  const VectorXd rgn = lumped_pair_with_gradT_nu(m, v);
  double ref3 = 0, ref4 = 0;
  for (Index j = 0; j < m.num_elements(); ++j) {
    const RefElem<D> e = ref_elem(m, j);
    double wsum = 0, divu = 0;
    Eigen::Matrix<double, D, 1> vsum = Eigen::Matrix<double, D, 1>::Zero();
    Eigen::Matrix<double, D, 1> gtnu = Eigen::Matrix<double, D, 1>::Zero();
    for (int k = 0; k < D; ++k) {
      wsum += w[m.elems(j, k)];
      vsum += v.row(m.elems(j, k)).transpose();
      divu += e.g.col(k).dot(u.row(m.elems(j, k)));
      gtnu += e.g.col(k) * u.row(m.elems(j, k)).dot(e.nu);
    }
    ref3 += e.measure / D * wsum * divu;
    ref4 += e.measure / D * vsum.dot(gtnu);
  }
  CHECK(std::abs(rdiv.dot(flatten<D>(u)) - ref3) < 1e-11 * (1.0 + std::abs(ref3)));
  CHECK(std::abs(rgn.dot(flatten<D>(u)) - ref4) < 1e-11 * (1.0 + std::abs(ref4)));
}

}  // namespace

TEST_CASE("assembled operators match the dense reference") {
  std::mt19937 rng(11);
  compare_against_reference(generate_circle(12, 1.0, 0.3), rng);
  compare_against_reference(generate_ellipse(24, 2.0, 1.0), rng);
  compare_against_reference(generate_icosphere(1, 1.0), rng);
  compare_against_reference(generate_torus(6, 4, 1.3, 0.4), rng);
}

TEST_CASE("uniform polygon stiffness and mass have the classical stencil") {
  const Index J = 16;
  const PolyCurve m = generate_circle(J, 1.0, 0.0);
  const double h = 2.0 * std::sin(std::numbers::pi / double(J));
  const MatrixXd A(stiffness(m));
  for (Index k = 0; k < J; ++k) {
    CHECK(std::abs(A(k, k) - 2.0 / h) < 1e-13 / h);
    CHECK(std::abs(A(k, (k + 1) % J) + 1.0 / h) < 1e-13 / h);
    CHECK(std::abs(A(k, (k + J - 1) % J) + 1.0 / h) < 1e-13 / h);
    CHECK(std::abs(lumped_mass(m)[k] - h) < 1e-14);
  }
}

TEST_CASE("normal-direction mass blocks") {
  const PolyCurve m = generate_circle(10, 1.0, 0.2);
  const Index K = m.num_vertices();
  const VectorXd mk = lumped_vertex_measures(m);
  const auto omega = vertex_normals(m);

  const MatrixXd Q1(qtheta_mass(m, 1.0));
  CHECK((Q1 - MatrixXd(kron_identity<2>(diagonal_matrix(mk)))).cwiseAbs().maxCoeff() < 1e-14);

  const MatrixXd Q0(qtheta_mass(m, 0.0));
  const MatrixXd Qh(qtheta_mass(m, 0.3));
  CHECK((Qh - (0.3 * Q1 + 0.7 * Q0)).cwiseAbs().maxCoeff() < 1e-14);

  const MatrixXd Qw(omega_outer_mass(m));
  for (Index k = 0; k < K; ++k) {
    const Eigen::Vector2d wv = omega.row(k).transpose();
    const Eigen::Matrix2d blk = mk[k] * wv * wv.transpose();
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        CHECK(std::abs(Qw(2 * k + a, 2 * k + b) - blk(a, b)) < 1e-14);
        CHECK(std::abs(Q0(2 * k + a, 2 * k + b) - blk(a, b) / wv.squaredNorm()) < 1e-13);
      }
  }

  // doubled triangle has cancelling vertex normals
  TriSurface pillow;
  pillow.X.resize(3, 3);
  pillow.X << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  pillow.elems.resize(2, 3);
  pillow.elems << 0, 1, 2, 0, 2, 1;
  CHECK_THROWS_AS(qtheta_mass(pillow, 0.5), MeshError);
}

TEST_CASE("isotropic density collapses the anisotropic stiffness") {
  std::mt19937 rng(5);
  auto collapse = [&](const auto& m) {
    constexpr int D = std::decay_t<decltype(m)>::dim;
    const auto f = face_data(m);
    const SparseMat Aa = aniso_stiffness(m, aniso_iso<D>(), f.normals);
    const MatrixXd diff = MatrixXd(Aa) - MatrixXd(vector_stiffness(m));
    const double scale = MatrixXd(vector_stiffness(m)).cwiseAbs().maxCoeff();
    CHECK(diff.cwiseAbs().maxCoeff() < 1e-12 * scale);

    // gamma scaled by sqrt(c): stiffness scales by sqrt(c)
    const double c = 4.0;
    const auto scaled =
        make_anisotropy<D>(1.0, {Eigen::Matrix<double, D, D>(c * Eigen::Matrix<double, D, D>::Identity())});
    const MatrixXd As(aniso_stiffness(m, scaled, f.normals));
    CHECK((As - std::sqrt(c) * MatrixXd(vector_stiffness(m))).cwiseAbs().maxCoeff() <
          1e-12 * scale * std::sqrt(c));

    // constants are annihilated componentwise
    const Index K = m.num_vertices();
    for (int cc = 0; cc < D; ++cc) {
      Eigen::Matrix<double, Eigen::Dynamic, D> e = Eigen::Matrix<double, Eigen::Dynamic, D>::Zero(K, D);
      e.col(cc).setOnes();
      CHECK(VectorXd(Aa * flatten<D>(e)).cwiseAbs().maxCoeff() < 1e-12 * scale);
    }
  };
  collapse(generate_circle(14, 1.0, 0.2));
  collapse(generate_icosphere(1, 1.0));
}

TEST_CASE("anisotropic stiffness on a curve matches the closed edge formula") {
  const PolyCurve m = generate_ellipse(12, 1.5, 0.7);
  Eigen::Matrix2d G;
  G << 2.0, 0.3, 0.3, 0.5;
  const auto a = make_anisotropy<2>(1.0, {G});
  const auto f = face_data(m);
  const MatrixXd A(aniso_stiffness(m, a, f.normals));
  // adj(G) = det(G) G^{-1} spelled with cofactors
  Eigen::Matrix2d Gt;
  Gt << G(1, 1), -G(0, 1), -G(1, 0), G(0, 0);
  MatrixXd Aref = MatrixXd::Zero(2 * m.num_vertices(), 2 * m.num_vertices());
  for (Index j = 0; j < m.num_elements(); ++j) {
    const Index k0 = m.elems(j, 0), k1 = m.elems(j, 1);
    const Eigen::Vector2d e = m.vertex(k1) - m.vertex(k0);
    const Eigen::Vector2d nu = Eigen::Vector2d(-e.y(), e.x()).normalized();
    const double w = std::sqrt(nu.dot(G * nu)) * e.norm() / e.dot(Gt * e);
    for (int aa = 0; aa < 2; ++aa)
      for (int bb = 0; bb < 2; ++bb) {
        const double gt = Gt(aa, bb);
        Aref(2 * k0 + aa, 2 * k0 + bb) += w * gt;
        Aref(2 * k1 + aa, 2 * k1 + bb) += w * gt;
        Aref(2 * k0 + aa, 2 * k1 + bb) -= w * gt;
        Aref(2 * k1 + aa, 2 * k0 + bb) -= w * gt;
      }
  }
  CHECK((A - Aref).cwiseAbs().maxCoeff() < 1e-12 * Aref.cwiseAbs().maxCoeff());
}

TEST_CASE("direction handling in the anisotropic stiffness") {
  const PolyCurve m = generate_circle(8, 1.0, 0.1);
  const auto f = face_data(m);
  const auto a = aniso_weighted<2>(Eigen::Vector2d(1.0, 0.25));
  Index renorm = 0;
  const SparseMat A1 = aniso_stiffness(m, a, f.normals, &renorm);
  CHECK(renorm == 0);
  const Eigen::Matrix<double, Eigen::Dynamic, 2> doubled = 2.0 * f.normals;
  const SparseMat A2 = aniso_stiffness(m, a, doubled, &renorm);
  CHECK(renorm == m.num_elements());
  CHECK((MatrixXd(A1) - MatrixXd(A2)).cwiseAbs().maxCoeff() < 1e-13);
  Eigen::Matrix<double, Eigen::Dynamic, 2> zeroed = f.normals;
  zeroed.row(3).setZero();
  CHECK_THROWS_AS(aniso_stiffness(m, a, zeroed), std::invalid_argument);
  const Eigen::Matrix<double, Eigen::Dynamic, 2> short_v =
      Eigen::Matrix<double, Eigen::Dynamic, 2>::Ones(3, 2);
  CHECK_THROWS_AS(aniso_stiffness(m, a, short_v), std::invalid_argument);
}

TEST_CASE("matrix dump uses row col value lines at full precision") {
  SparseMat A(2, 2);
  A.insert(0, 0) = 1.0 / 3.0;
  A.insert(1, 0) = -2.0;
  A.makeCompressed();
  std::ostringstream os;
  dump_matrix(A, os);
  CHECK(os.str() == "0 0 0.33333333333333331\n1 0 -2\n");
}
