#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "pflow/mesh.hpp"

namespace pflow {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string format_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// closed curves: one "x y" line per vertex, closing edge implicit
inline void write_curve(const PolyCurve& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (Index k = 0; k < m.num_vertices(); ++k)
    out << format_g17(m.X(k, 0)) << ' ' << format_g17(m.X(k, 1)) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline PolyCurve read_curve(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Eigen::Vector2d> pts;
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double x, y;
    if (!(ss >> x >> y))
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 'x y'");
    pts.emplace_back(x, y);
  }
  MatrixXd X(Index(pts.size()), 2);
  for (Index k = 0; k < X.rows(); ++k) X.row(k) = pts[size_t(k)].transpose();
  return make_curve(X);
}

inline void write_off(const TriSurface& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "OFF\n" << m.num_vertices() << ' ' << m.num_elements() << " 0\n";
  for (Index k = 0; k < m.num_vertices(); ++k)
    out << format_g17(m.X(k, 0)) << ' ' << format_g17(m.X(k, 1)) << ' ' << format_g17(m.X(k, 2))
        << '\n';
  for (Index f = 0; f < m.num_elements(); ++f)
    out << "3 " << m.elems(f, 0) << ' ' << m.elems(f, 1) << ' ' << m.elems(f, 2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline TriSurface read_off(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string tok;
  auto next = [&](const char* what) {
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw IoError(path + ": unexpected end of file, expected " + std::string(what));
  };
  if (next("OFF header") != "OFF") throw IoError(path + ": missing OFF header");
  const Index K = std::stoll(next("vertex count"));
  const Index J = std::stoll(next("face count"));
  next("edge count");
  if (K <= 0 || J <= 0) throw IoError(path + ": empty mesh");
  MatrixXd V(K, 3);
  for (Index k = 0; k < K; ++k)
    for (int c = 0; c < 3; ++c) V(k, c) = std::stod(next("vertex coordinate"));
  Eigen::Matrix<Index, Eigen::Dynamic, 3> F(J, 3);
  for (Index f = 0; f < J; ++f) {
    if (std::stoll(next("face size")) != 3) throw IoError(path + ": only triangles supported");
    for (int c = 0; c < 3; ++c) F(f, c) = std::stoll(next("face index"));
  }
  return make_surface(V, F);
}

}  // namespace pflow
