#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pflow {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double degenerate_measure_rel = 1e-14;

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline std::string format_measure(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}
}  // namespace detail

struct DegenerateElementError : MeshError {
  DegenerateElementError(Index elem, double measure, double threshold)
      : MeshError("degenerate element " + std::to_string(elem) + ": measure " +
                  detail::format_measure(measure) + " below threshold " +
                  detail::format_measure(threshold)),
        element(elem) {}
  Index element;
};

// clockwise quarter turn, (x,y) -> (y,-x)
inline Eigen::Vector2d perp(const Eigen::Vector2d& v) { return {v.y(), -v.x()}; }

inline double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

// Closed polyhedral hypersurface in R^D: polygonal loop (D=2) or oriented
// triangulation (D=3). Element normals are -perp(edge)/|edge| for curves and
// the normalized cross product for triangles; generators wind elements so the
// normal points into the enclosed region (counterclockwise loops for D=2).
template <int D>
struct SurfaceMesh {
  static_assert(D == 2 || D == 3);
  static constexpr int dim = D;
  static constexpr int nodes_per_elem = D;
  using Point = Eigen::Matrix<double, D, 1>;
  using VertexArray = Eigen::Matrix<double, Eigen::Dynamic, D>;
  using ElemArray = Eigen::Matrix<Index, Eigen::Dynamic, D>;

  VertexArray X;    // K x D vertex positions
  ElemArray elems;  // J x D vertex indices per element

  Index num_vertices() const { return X.rows(); }
  Index num_elements() const { return elems.rows(); }
  Point vertex(Index k) const { return X.row(k).transpose(); }

  double diameter() const {
    if (X.rows() == 0) return 0.0;
    return (X.colwise().maxCoeff() - X.colwise().minCoeff()).norm();
  }
};

using PolyCurve = SurfaceMesh<2>;
using TriSurface = SurfaceMesh<3>;

template <int D>
struct FaceGeometry {
  Eigen::Matrix<double, D, 1> normal;
  double measure;
};

template <int D>
FaceGeometry<D> face_normal_and_measure_unchecked(const SurfaceMesh<D>& m, Index j) {
  FaceGeometry<D> g;
  if constexpr (D == 2) {
    const Eigen::Vector2d e = m.vertex(m.elems(j, 1)) - m.vertex(m.elems(j, 0));
    g.measure = e.norm();
    g.normal = g.measure > 0 ? Eigen::Vector2d(-perp(e) / g.measure) : Eigen::Vector2d::Zero();
  } else {
    const Eigen::Vector3d c = (m.vertex(m.elems(j, 1)) - m.vertex(m.elems(j, 0)))
                                  .cross(m.vertex(m.elems(j, 2)) - m.vertex(m.elems(j, 0)));
    const double n = c.norm();
    g.measure = 0.5 * n;
    g.normal = n > 0 ? Eigen::Vector3d(c / n) : Eigen::Vector3d::Zero();
  }
  return g;
}

template <int D>
FaceGeometry<D> face_normal_and_measure(const SurfaceMesh<D>& m, Index j) {
  FaceGeometry<D> g = face_normal_and_measure_unchecked(m, j);
  const double threshold = degenerate_measure_rel * m.diameter();
  if (!(g.measure > threshold))
    throw DegenerateElementError(j, g.measure, threshold);
  return g;
}

template <int D>
struct FaceData {
  Eigen::Matrix<double, Eigen::Dynamic, D> normals;  // J x D
  VectorXd measures;                                 // J
};

template <int D>
FaceData<D> face_data(const SurfaceMesh<D>& m) {
  const Index J = m.num_elements();
  FaceData<D> f{Eigen::Matrix<double, Eigen::Dynamic, D>(J, D), VectorXd(J)};
  const double threshold = degenerate_measure_rel * m.diameter();
  for (Index j = 0; j < J; ++j) {
    FaceGeometry<D> g = face_normal_and_measure_unchecked(m, j);
    if (!(g.measure > threshold))
      throw DegenerateElementError(j, g.measure, threshold);
    f.normals.row(j) = g.normal.transpose();
    f.measures[j] = g.measure;
  }
  return f;
}

// per-element constant gradients of the P1 nodal basis
template <int D>
Eigen::Matrix<double, D, D> elem_p1_gradients(const SurfaceMesh<D>& m, Index j) {
  Eigen::Matrix<double, D, D> g;  // column i = grad of basis at local node i
  if constexpr (D == 2) {
    const Eigen::Vector2d e = m.vertex(m.elems(j, 1)) - m.vertex(m.elems(j, 0));
    const double l2 = e.squaredNorm();
    g.col(0) = -e / l2;
    g.col(1) = e / l2;
  } else {
    const Eigen::Vector3d p0 = m.vertex(m.elems(j, 0));
    const Eigen::Vector3d p1 = m.vertex(m.elems(j, 1));
    const Eigen::Vector3d p2 = m.vertex(m.elems(j, 2));
    const Eigen::Vector3d c = (p1 - p0).cross(p2 - p0);
    const double two_area = c.norm();
    const Eigen::Vector3d nu = c / two_area;
    g.col(0) = nu.cross(p2 - p1) / two_area;
    g.col(1) = nu.cross(p0 - p2) / two_area;
    g.col(2) = nu.cross(p1 - p0) / two_area;
  }
  return g;
}

template <int D>
std::vector<std::vector<Index>> vertex_stars(const SurfaceMesh<D>& m) {
  std::vector<std::vector<Index>> star(static_cast<size_t>(m.num_vertices()));
  for (Index j = 0; j < m.num_elements(); ++j)
    for (int v = 0; v < D; ++v) star[static_cast<size_t>(m.elems(j, v))].push_back(j);
  return star;
}

template <int D>
void validate_mesh(const SurfaceMesh<D>& m) {
  const Index K = m.num_vertices();
  const Index J = m.num_elements();
  if constexpr (D == 2) {
    if (K < 3) throw MeshError("closed curve needs at least 3 vertices");
  } else {
    if (K < 4) throw MeshError("closed surface needs at least 4 vertices");
  }
  if (!m.X.allFinite()) throw MeshError("non-finite vertex coordinates");
  for (Index j = 0; j < J; ++j)
    for (int v = 0; v < D; ++v) {
      const Index k = m.elems(j, v);
      if (k < 0 || k >= K)
        throw MeshError("element " + std::to_string(j) + " references invalid vertex " +
                        std::to_string(k));
      for (int w = v + 1; w < D; ++w)
        if (m.elems(j, w) == k)
          throw MeshError("element " + std::to_string(j) + " repeats vertex " + std::to_string(k));
    }
  if constexpr (D == 3) {
    // every directed edge appears exactly once and its reversal exactly once:
    // each undirected edge is shared by two consistently oriented triangles
    std::map<std::pair<Index, Index>, int> directed;
    for (Index j = 0; j < J; ++j)
      for (int v = 0; v < 3; ++v) {
        const Index a = m.elems(j, v);
        const Index b = m.elems(j, (v + 1) % 3);
        if (++directed[{a, b}] > 1)
          throw MeshError("directed edge (" + std::to_string(a) + "," + std::to_string(b) +
                          ") appears twice: inconsistent orientation");
      }
    for (const auto& [e, cnt] : directed)
      if (directed.find({e.second, e.first}) == directed.end())
        throw MeshError("edge (" + std::to_string(e.first) + "," + std::to_string(e.second) +
                        ") is not shared by two elements: surface not closed");
  } else {
    // closed loop: every vertex has exactly one outgoing and one incoming edge
    std::vector<int> out(static_cast<size_t>(K), 0), in(static_cast<size_t>(K), 0);
    for (Index j = 0; j < J; ++j) {
      ++out[static_cast<size_t>(m.elems(j, 0))];
      ++in[static_cast<size_t>(m.elems(j, 1))];
    }
    for (Index k = 0; k < K; ++k)
      if (out[static_cast<size_t>(k)] != 1 || in[static_cast<size_t>(k)] != 1)
        throw MeshError("vertex " + std::to_string(k) + " is not on a single closed loop");
  }
  face_data(m);  // rejects degenerate elements
}

inline PolyCurve make_curve(const MatrixXd& points) {
  PolyCurve m;
  if (points.cols() != 2) throw MeshError("curve points must be K x 2");
  const Index K = points.rows();
  m.X = points;
  m.elems.resize(K, 2);
  for (Index j = 0; j < K; ++j) {
    m.elems(j, 0) = j;
    m.elems(j, 1) = (j + 1) % K;
  }
  validate_mesh(m);
  return m;
}

inline TriSurface make_surface(const MatrixXd& V, const Eigen::Matrix<Index, Eigen::Dynamic, 3>& F) {
  TriSurface m;
  if (V.cols() != 3) throw MeshError("surface vertices must be K x 3");
  m.X = V;
  m.elems = F;
  validate_mesh(m);
  return m;
}

template <int D>
SurfaceMesh<D> with_positions(const SurfaceMesh<D>& m, const typename SurfaceMesh<D>::VertexArray& Xnew) {
  SurfaceMesh<D> out;
  out.X = Xnew;
  out.elems = m.elems;
  if (!out.X.allFinite()) throw MeshError("non-finite vertex coordinates");
  face_data(out);  // connectivity unchanged; recheck geometry only
  return out;
}

// |Lambda_k|/D: diagonal entries of the mass-lumped inner product
template <int D>
VectorXd lumped_vertex_measures(const SurfaceMesh<D>& m) {
  const FaceData<D> f = face_data(m);
  VectorXd mk = VectorXd::Zero(m.num_vertices());
  for (Index j = 0; j < m.num_elements(); ++j)
    for (int v = 0; v < D; ++v) mk[m.elems(j, v)] += f.measures[j] / D;
  return mk;
}

// omega_k = sum |sigma| nu / sum |sigma| over the star of vertex k
template <int D>
Eigen::Matrix<double, Eigen::Dynamic, D> vertex_normals(const SurfaceMesh<D>& m) {
  const FaceData<D> f = face_data(m);
  Eigen::Matrix<double, Eigen::Dynamic, D> omega =
      Eigen::Matrix<double, Eigen::Dynamic, D>::Zero(m.num_vertices(), D);
  VectorXd area = VectorXd::Zero(m.num_vertices());
  for (Index j = 0; j < m.num_elements(); ++j)
    for (int v = 0; v < D; ++v) {
      const Index k = m.elems(j, v);
      omega.row(k) += f.measures[j] * f.normals.row(j);
      area[k] += f.measures[j];
    }
  omega.array().colwise() /= area.array();
  return omega;
}

template <int D>
double lumped_ip(const SurfaceMesh<D>& m, const VectorXd& u, const VectorXd& v) {
  const FaceData<D> f = face_data(m);
  double s = 0;
  for (Index j = 0; j < m.num_elements(); ++j) {
    double e = 0;
    for (int q = 0; q < D; ++q) e += u[m.elems(j, q)] * v[m.elems(j, q)];
    s += f.measures[j] / D * e;
  }
  return s;
}

template <int D>
double lumped_ip(const SurfaceMesh<D>& m, const Eigen::Matrix<double, Eigen::Dynamic, D>& u,
                 const Eigen::Matrix<double, Eigen::Dynamic, D>& v) {
  const FaceData<D> f = face_data(m);
  double s = 0;
  for (Index j = 0; j < m.num_elements(); ++j) {
    double e = 0;
    for (int q = 0; q < D; ++q) e += u.row(m.elems(j, q)).dot(v.row(m.elems(j, q)));
    s += f.measures[j] / D * e;
  }
  return s;
}

template <int D, class Field>
double lumped_norm(const SurfaceMesh<D>& m, const Field& u) {
  return std::sqrt(std::max(0.0, lumped_ip(m, u, u)));
}

template <int D>
double surface_measure(const SurfaceMesh<D>& m) {
  return face_data(m).measures.sum();
}

struct VolumeResult {
  double value;              // |enclosed region|
  double signed_divergence;  // (1/D) sum |sigma| centroid . nu ; sign follows orientation
};

template <int D>
VolumeResult enclosed_volume(const SurfaceMesh<D>& m) {
  const FaceData<D> f = face_data(m);
  double div_form = 0;
  for (Index j = 0; j < m.num_elements(); ++j) {
    Eigen::Matrix<double, D, 1> c = Eigen::Matrix<double, D, 1>::Zero();
    for (int v = 0; v < D; ++v) c += m.vertex(m.elems(j, v));
    c /= D;
    div_form += f.measures[j] * c.dot(f.normals.row(j).transpose()) / D;
  }
  VolumeResult r;
  r.signed_divergence = div_form;
  if constexpr (D == 2) {
    double shoelace = 0;
    for (Index j = 0; j < m.num_elements(); ++j)
      shoelace += 0.5 * cross2(m.vertex(m.elems(j, 0)), m.vertex(m.elems(j, 1)));
    r.value = std::abs(shoelace);
  } else {
    r.value = std::abs(div_form);
  }
  return r;
}

inline double shoelace_area(const PolyCurve& m) {
  double s = 0;
  for (Index j = 0; j < m.num_elements(); ++j)
    s += 0.5 * cross2(m.vertex(m.elems(j, 0)), m.vertex(m.elems(j, 1)));
  return s;
}

struct AssumptionAResult {
  enum class Status { ok, fail_span, fail_zero } status;
  Index vertex = -1;  // offending vertex for fail_zero
  double smin = 0, smax = 0;
  bool ok() const { return status == Status::ok; }
};

template <int D>
AssumptionAResult check_assumption_A(const SurfaceMesh<D>& m, double rank_tol = 1e-10,
                                     double zero_tol = 1e-12) {
  const auto omega = vertex_normals(m);
  AssumptionAResult r{AssumptionAResult::Status::ok};
  for (Index k = 0; k < omega.rows(); ++k)
    if (omega.row(k).norm() < zero_tol) {
      r.status = AssumptionAResult::Status::fail_zero;
      r.vertex = k;
      return r;
    }
  Eigen::Matrix<double, D, D> gram = omega.transpose() * omega;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, D, D>> es(gram);
  r.smin = std::sqrt(std::max(0.0, es.eigenvalues().minCoeff()));
  r.smax = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  if (r.smin < rank_tol * r.smax) r.status = AssumptionAResult::Status::fail_span;
  return r;
}

// stiffness operator applied to the vertex positions, row k = <grad id, grad phi_k>
template <int D>
Eigen::Matrix<double, Eigen::Dynamic, D> stiffness_times_positions(const SurfaceMesh<D>& m) {
  const FaceData<D> f = face_data(m);
  Eigen::Matrix<double, Eigen::Dynamic, D> b =
      Eigen::Matrix<double, Eigen::Dynamic, D>::Zero(m.num_vertices(), D);
  for (Index j = 0; j < m.num_elements(); ++j) {
    const auto g = elem_p1_gradients(m, j);
    Eigen::Matrix<double, D, D> P;  // column v = position of local node v
    for (int v = 0; v < D; ++v) P.col(v) = m.vertex(m.elems(j, v));
    // grad id restricted to the element is P * g^T (a D x D matrix)
    const Eigen::Matrix<double, D, D> gradX = P * g.transpose();
    for (int v = 0; v < D; ++v)
      b.row(m.elems(j, v)) += (f.measures[j] * (gradX * g.col(v))).transpose();
  }
  return b;
}

struct MeshQuality {
  double min_edge;
  double max_edge;
  double ratio;  // max/min edge (D=2) or max/min face area (D=3)
  double conformality_residual;
};

template <int D>
MeshQuality mesh_quality(const SurfaceMesh<D>& m) {
  MeshQuality q{};
  double emin = std::numeric_limits<double>::infinity(), emax = 0;
  for (Index j = 0; j < m.num_elements(); ++j)
    for (int v = 0; v < D; ++v) {
      if constexpr (D == 2)
        if (v == 1) break;
      const double l =
          (m.vertex(m.elems(j, (v + 1) % D)) - m.vertex(m.elems(j, v))).norm();
      emin = std::min(emin, l);
      emax = std::max(emax, l);
    }
  q.min_edge = emin;
  q.max_edge = emax;
  if constexpr (D == 2) {
    q.ratio = emax / emin;
  } else {
    const VectorXd meas = face_data(m).measures;
    q.ratio = meas.maxCoeff() / meas.minCoeff();
  }
  // least-squares defect of the weighted curvature identity: minimize over
  // nodal kappa the dual norm of kappa-coupling + stiffness applied to id,
  // normalized by the dual norm of the right-hand side
  const auto b = stiffness_times_positions(m);
  const auto omega = vertex_normals(m);
  const VectorXd mk = lumped_vertex_measures(m);
  double res2 = 0, rhs2 = 0;
  for (Index k = 0; k < m.num_vertices(); ++k) {
    const Eigen::Matrix<double, D, 1> bk = b.row(k).transpose();
    const Eigen::Matrix<double, D, 1> wk = omega.row(k).transpose();
    const double wn2 = wk.squaredNorm();
    double rk2 = bk.squaredNorm();
    if (wn2 > 1e-24) rk2 -= std::pow(wk.dot(bk), 2) / wn2;
    res2 += std::max(0.0, rk2) / mk[k];
    rhs2 += bk.squaredNorm() / mk[k];
  }
  q.conformality_residual = rhs2 > 0 ? std::sqrt(res2 / rhs2) : 0.0;
  return q;
}

// flatten/unflatten vector fields with interleaved component index D*k + c
template <int D>
VectorXd flatten(const Eigen::Matrix<double, Eigen::Dynamic, D>& u) {
  VectorXd v(u.rows() * D);
  for (Index k = 0; k < u.rows(); ++k)
    for (int c = 0; c < D; ++c) v[D * k + c] = u(k, c);
  return v;
}

template <int D>
Eigen::Matrix<double, Eigen::Dynamic, D> unflatten(const VectorXd& v) {
  Eigen::Matrix<double, Eigen::Dynamic, D> u(v.size() / D, D);
  for (Index k = 0; k < u.rows(); ++k)
    for (int c = 0; c < D; ++c) u(k, c) = v[D * k + c];
  return u;
}

}  // namespace pflow
