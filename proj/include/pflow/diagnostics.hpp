#pragma once

#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pflow/flows.hpp"
#include "pflow/willmore.hpp"

namespace pflow {

inline constexpr const char* diagnostics_header =
    "step,time,area,area_gamma,volume,willmore,ade,stab_slack,min_edge,max_edge,ratio,conf_res,"
    "iters";

struct DiagnosticsRecord {
  Index step = 0;
  double time = 0;
  double area = 0;
  double area_gamma = 0;
  double volume = 0;
  double willmore = 0;
  double ade = 0;
  double stab_slack = 0;
  double min_edge = 0;
  double max_edge = 0;
  double ratio = 0;
  double conf_res = 0;
  Index iters = 0;
};

// curvature state of the producing scheme: scalar field, vector field, or
// neither (falls back to the discrete Laplace-Beltrami vector)
template <int D>
DiagnosticsRecord make_record(Index step, double time, const SurfaceMesh<D>& m,
                              const Anisotropy<D>* aniso, const VectorXd* kappa,
                              const Eigen::Matrix<double, Eigen::Dynamic, D>* kappa_vec,
                              double stab_slack, Index iters, double kappa_bar = 0,
                              double beta_ade = 0, double M0 = 0) {
  DiagnosticsRecord r;
  r.step = step;
  r.time = time;
  r.area = surface_measure(m);
  r.area_gamma = aniso ? anisotropic_measure(m, *aniso) : r.area;
  r.volume = enclosed_volume(m).value;

  Eigen::Matrix<double, Eigen::Dynamic, D> kv;
  if (kappa) {
    const auto omega = vertex_normals(m);
    kv.setZero(m.num_vertices(), D);
    for (Index k = 0; k < m.num_vertices(); ++k) {
      const double len = omega.row(k).norm();
      if (len > 1e-12) kv.row(k) = (*kappa)[k] / len * omega.row(k);
    }
    r.willmore = willmore_energy(m, *kappa);
  } else {
    kv = kappa_vec ? *kappa_vec : lb_curvature_vector(m);
    const VectorXd mk = lumped_vertex_measures(m);
    r.willmore = 0.5 * kv.rowwise().squaredNorm().dot(mk);
  }
  r.ade = ade_energy(m, kv, kappa_bar, beta_ade, M0);

  r.stab_slack = stab_slack;
  const MeshQuality q = mesh_quality(m);
  r.min_edge = q.min_edge;
  r.max_edge = q.max_edge;
  r.ratio = q.ratio;
  r.conf_res = q.conformality_residual;
  r.iters = iters;
  return r;
}

inline void write_record_line(std::ostream& out, const DiagnosticsRecord& r) {
  out << r.step << ',' << format_g17(r.time) << ',' << format_g17(r.area) << ','
      << format_g17(r.area_gamma) << ',' << format_g17(r.volume) << ',' << format_g17(r.willmore)
      << ',' << format_g17(r.ade) << ',' << format_g17(r.stab_slack) << ','
      << format_g17(r.min_edge) << ',' << format_g17(r.max_edge) << ',' << format_g17(r.ratio)
      << ',' << format_g17(r.conf_res) << ',' << r.iters << '\n';
}

inline void write_records(std::ostream& out, const std::vector<DiagnosticsRecord>& recs) {
  out << diagnostics_header << '\n';
  for (const auto& r : recs) write_record_line(out, r);
}

inline std::vector<DiagnosticsRecord> read_records(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("diagnostics: empty stream");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != diagnostics_header) throw IoError("diagnostics: unexpected header '" + line + "'");
  std::vector<DiagnosticsRecord> recs;
  for (Index ln = 2; std::getline(in, line); ++ln) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> v;
    std::string cur;
    std::istringstream ls(line);
    while (std::getline(ls, cur, ','))
      v.push_back(std::strtod(cur.c_str(), nullptr));
    if (v.size() != 13)
      throw IoError("diagnostics: line " + std::to_string(ln) + ": expected 13 fields, got " +
                    std::to_string(v.size()));
    DiagnosticsRecord r;
    r.step = Index(v[0]);
    r.time = v[1];
    r.area = v[2];
    r.area_gamma = v[3];
    r.volume = v[4];
    r.willmore = v[5];
    r.ade = v[6];
    r.stab_slack = v[7];
    r.min_edge = v[8];
    r.max_edge = v[9];
    r.ratio = v[10];
    r.conf_res = v[11];
    r.iters = Index(v[12]);
    recs.push_back(r);
  }
  return recs;
}

}  // namespace pflow
