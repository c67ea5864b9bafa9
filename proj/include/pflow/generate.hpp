#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "pflow/mesh.hpp"

namespace pflow {

inline constexpr unsigned default_perturb_seed = 20210;

inline PolyCurve generate_circle(Index J, double r, double perturb,
                                 unsigned seed = default_perturb_seed) {
  if (J < 3) throw MeshError("circle needs J >= 3");
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  MatrixXd pts(J, 2);
  for (Index j = 0; j < J; ++j) {
    const double rho = r * (1.0 + (perturb != 0.0 ? perturb * uni(rng) : 0.0));
    const double th = 2.0 * std::numbers::pi * double(j) / double(J);
    pts(j, 0) = rho * std::cos(th);
    pts(j, 1) = rho * std::sin(th);
  }
  return make_curve(pts);
}

inline PolyCurve generate_ellipse(Index J, double a, double b) {
  if (J < 3) throw MeshError("ellipse needs J >= 3");
  MatrixXd pts(J, 2);
  for (Index j = 0; j < J; ++j) {
    const double th = 2.0 * std::numbers::pi * double(j) / double(J);
    pts(j, 0) = a * std::cos(th);
    pts(j, 1) = b * std::sin(th);
  }
  return make_curve(pts);
}

// Archimedean double spiral: an inbound arm r = 1 - q*theta wound `turns`
// times, its return arm offset by half a pitch, closed by two radial joins;
// oriented counterclockwise (positive shoelace area).
inline PolyCurve generate_closed_spiral(Index J, double turns) {
  if (J < 8) throw MeshError("closed_spiral needs J >= 8");
  if (turns <= 0) throw MeshError("closed_spiral needs turns > 0");
  const double pi = std::numbers::pi;
  const double theta_max = 2.0 * pi * turns;
  const double r_outer = 1.0, r_inner = 0.02;
  const double q = (r_outer - r_inner) / theta_max;
  const double gap = q * pi;  // half pitch between the interleaved arms
  const Index n1 = J / 2, n2 = J - n1;
  MatrixXd pts(J, 2);
  Index row = 0;
  for (Index i = 0; i < n1; ++i) {  // inbound: theta 0 -> theta_max at radius r(theta)
    const double th = theta_max * double(i) / double(n1);
    const double r = r_outer - q * th;
    pts(row, 0) = r * std::cos(th);
    pts(row, 1) = r * std::sin(th);
    ++row;
  }
  for (Index i = 0; i < n2; ++i) {  // return: theta_max -> 0 at radius r(theta) + gap
    const double th = theta_max * (1.0 - double(i) / double(n2));
    const double r = r_outer - q * th + gap;
    pts(row, 0) = r * std::cos(th);
    pts(row, 1) = r * std::sin(th);
    ++row;
  }
  PolyCurve c = make_curve(pts);
  if (shoelace_area(c) < 0) {
    MatrixXd rev(J, 2);
    for (Index j = 0; j < J; ++j) rev.row(j) = pts.row(J - 1 - j);
    c = make_curve(rev);
  }
  return c;
}

namespace detail {

// subdivided icosahedron projected to the sphere; triangles wound so the
// normal points into the ball
inline void icosahedron(MatrixXd& V, Eigen::Matrix<Index, Eigen::Dynamic, 3>& F) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  V.resize(12, 3);
  V << -1, phi, 0, 1, phi, 0, -1, -phi, 0, 1, -phi, 0, 0, -1, phi, 0, 1, phi, 0, -1, -phi, 0, 1,
      -phi, phi, 0, -1, phi, 0, 1, -phi, 0, -1, -phi, 0, 1;
  V.rowwise().normalize();
  F.resize(20, 3);
  F << 0, 11, 5, 0, 5, 1, 0, 1, 7, 0, 7, 10, 0, 10, 11, 1, 5, 9, 5, 11, 4, 11, 10, 2, 10, 7, 6, 7,
      1, 8, 3, 9, 4, 3, 4, 2, 3, 2, 6, 3, 6, 8, 3, 8, 9, 4, 9, 5, 2, 4, 11, 6, 2, 10, 8, 6, 7, 9,
      8, 1;
}

}  // namespace detail

inline TriSurface generate_icosphere(int level, double r) {
  if (level < 0) throw MeshError("icosphere needs level >= 0");
  if (level > 7) throw MeshError("icosphere level too large");
  MatrixXd V;
  Eigen::Matrix<Index, Eigen::Dynamic, 3> F;
  detail::icosahedron(V, F);
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<Index, Index>, Index> midpoint;
    std::vector<Eigen::Vector3d> verts;
    verts.reserve(static_cast<size_t>(V.rows()) * 4);
    for (Index k = 0; k < V.rows(); ++k) verts.push_back(V.row(k).transpose());
    auto mid = [&](Index a, Index b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find({key.first, key.second});
      if (it != midpoint.end()) return it->second;
      Eigen::Vector3d p = (verts[size_t(a)] + verts[size_t(b)]).normalized();
      verts.push_back(p);
      const Index idx = Index(verts.size()) - 1;
      midpoint[{key.first, key.second}] = idx;
      return idx;
    };
    Eigen::Matrix<Index, Eigen::Dynamic, 3> F2(F.rows() * 4, 3);
    for (Index f = 0; f < F.rows(); ++f) {
      const Index a = F(f, 0), b = F(f, 1), c = F(f, 2);
      const Index ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
      F2.row(4 * f + 0) << a, ab, ca;
      F2.row(4 * f + 1) << b, bc, ab;
      F2.row(4 * f + 2) << c, ca, bc;
      F2.row(4 * f + 3) << ab, bc, ca;
    }
    V.resize(Index(verts.size()), 3);
    for (Index k = 0; k < V.rows(); ++k) V.row(k) = verts[size_t(k)].transpose();
    F = F2;
  }
  V *= r;
  // flip winding so the cross-product normal points inward
  for (Index f = 0; f < F.rows(); ++f) std::swap(F(f, 1), F(f, 2));
  return make_surface(V, F);
}

inline TriSurface generate_torus(Index m, Index n, double R, double rt) {
  if (m < 3 || n < 3) throw MeshError("torus needs m,n >= 3");
  if (!(R > rt && rt > 0)) throw MeshError("torus needs R > r > 0");
  const double pi = std::numbers::pi;
  MatrixXd V(m * n, 3);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) {
      const double u = 2.0 * pi * double(i) / double(m);
      const double v = 2.0 * pi * double(j) / double(n);
      V.row(i * n + j) << (R + rt * std::cos(v)) * std::cos(u),
          (R + rt * std::cos(v)) * std::sin(u), rt * std::sin(v);
    }
  Eigen::Matrix<Index, Eigen::Dynamic, 3> F(2 * m * n, 3);
  Index row = 0;
  auto id = [&](Index i, Index j) { return ((i + m) % m) * n + ((j + n) % n); };
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) {
      // inward winding (reversed relative to the outward parametric normal)
      F.row(row++) << id(i, j), id(i + 1, j + 1), id(i + 1, j);
      F.row(row++) << id(i, j), id(i, j + 1), id(i + 1, j + 1);
    }
  return make_surface(V, F);
}

inline TriSurface generate_cube_projected_sphere(int level, double r) {
  if (level < 0) throw MeshError("cube_projected_sphere needs level >= 0");
  if (level > 8) throw MeshError("cube_projected_sphere level too large");
  const Index n = Index(1) << level;  // grid cells per cube-face edge
  std::map<std::array<Index, 3>, Index> index_of;
  std::vector<Eigen::Vector3d> verts;
  auto vertex_at = [&](Index x, Index y, Index z) {
    std::array<Index, 3> key{x, y, z};
    auto it = index_of.find(key);
    if (it != index_of.end()) return it->second;
    Eigen::Vector3d p(double(x) / double(n) - 1.0, double(y) / double(n) - 1.0,
                      double(z) / double(n) - 1.0);
    verts.push_back(r * p.normalized());
    index_of[key] = Index(verts.size()) - 1;
    return Index(verts.size()) - 1;
  };
  std::vector<std::array<Index, 3>> faces;
  // each cube face: axis held at 0 or 2n, the two remaining axes range over the grid
  for (int axis = 0; axis < 3; ++axis)
    for (int side = 0; side <= 1; ++side) {
      const Index w = side == 0 ? 0 : 2 * n;
      for (Index a = 0; a < 2 * n; a += 2)
        for (Index b = 0; b < 2 * n; b += 2) {
          auto at = [&](Index da, Index db) {
            Index c[3];
            c[axis] = w;
            c[(axis + 1) % 3] = a + da;
            c[(axis + 2) % 3] = b + db;
            return vertex_at(c[0], c[1], c[2]);
          };
          const Index v00 = at(0, 0), v10 = at(2, 0), v11 = at(2, 2), v01 = at(0, 2);
          // wind so the normal points outward along +axis for side=1, then
          // flip conventions so all normals point into the ball
          if (side == 1) {
            faces.push_back({v00, v11, v10});
            faces.push_back({v00, v01, v11});
          } else {
            faces.push_back({v00, v10, v11});
            faces.push_back({v00, v11, v01});
          }
        }
    }
  MatrixXd V(Index(verts.size()), 3);
  for (Index k = 0; k < V.rows(); ++k) V.row(k) = verts[size_t(k)].transpose();
  Eigen::Matrix<Index, Eigen::Dynamic, 3> F(Index(faces.size()), 3);
  for (Index f = 0; f < F.rows(); ++f) F.row(f) << faces[size_t(f)][0], faces[size_t(f)][1], faces[size_t(f)][2];
  TriSurface s = make_surface(V, F);
  if (enclosed_volume(s).signed_divergence > 0) {  // enforce inward normals
    for (Index f = 0; f < F.rows(); ++f) std::swap(F(f, 1), F(f, 2));
    s = make_surface(V, F);
  }
  return s;
}

}  // namespace pflow
