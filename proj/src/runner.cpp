#include "pflow/runner.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>

#include "pflow/diagnostics.hpp"
#include "pflow/io.hpp"

namespace pflow {

namespace {

McfVariant variant_of(SchemeKind s) {
  switch (s) {
    case SchemeKind::mcf_dziuk: return McfVariant::dziuk;
    case SchemeKind::mcf_dziuk_lumped: return McfVariant::dziuk_lumped;
    case SchemeKind::mcf_theta: return McfVariant::theta;
    case SchemeKind::mcf_dd95: return McfVariant::dd95;
    case SchemeKind::mcf_elimkappa: return McfVariant::elimkappa;
    case SchemeKind::mcf_elimkappa_raw: return McfVariant::elimkappa_raw;
    default: throw std::logic_error("variant_of: not an mcf variant");
  }
}

bool is_mcf_variant(SchemeKind s) {
  switch (s) {
    case SchemeKind::mcf_dziuk:
    case SchemeKind::mcf_dziuk_lumped:
    case SchemeKind::mcf_theta:
    case SchemeKind::mcf_dd95:
    case SchemeKind::mcf_elimkappa:
    case SchemeKind::mcf_elimkappa_raw: return true;
    default: return false;
  }
}

FChoice implied_f(const RunConfig& cfg) {
  FChoice f = cfg.f;
  switch (cfg.scheme) {
    case SchemeKind::mcf: f.kind = FKind::mcf; break;
    case SchemeKind::sd: f.kind = FKind::sd; break;
    case SchemeKind::conserved: f.kind = FKind::conserved; break;
    case SchemeKind::power: f.kind = FKind::power; break;
    case SchemeKind::salk: f.kind = FKind::salk; break;
    default: break;  // tangential uses cfg.f as configured
  }
  return f;
}

int mesh_dimension(const MeshSpec& spec) {
  if (!spec.generate.empty())
    return generator_dimension(parse_generator_spec(spec.generate).name);
  const std::string& f = spec.file;
  const auto dot = f.find_last_of('.');
  const std::string ext = dot == std::string::npos ? "" : f.substr(dot);
  if (ext == ".curve") return 2;
  if (ext == ".off") return 3;
  throw ConfigError("cannot infer mesh dimension from '" + f + "' (use .curve or .off)");
}

void validate_run(const RunConfig& cfg, int dim) {
  if (dim == 3 && (cfg.scheme == SchemeKind::fdfi || cfg.scheme == SchemeKind::mcf_dd95))
    throw ConfigError("scheme " + scheme_name(cfg.scheme) + " is defined for curves only");
  if (cfg.method == SaddleMethod::schur_cg) {
    const bool ok = cfg.scheme == SchemeKind::mcf || cfg.scheme == SchemeKind::power ||
                    (cfg.scheme == SchemeKind::aniso && cfg.order == AnisoOrder::second);
    if (!ok)
      throw ConfigError("method schur_cg applies only to mcf, power and second-order aniso");
  }
}

std::string snapshot_path(const std::string& dir, Index step, int dim) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%08lld", static_cast<long long>(step));
  return dir + "/" + buf + (dim == 2 ? ".curve" : ".off");
}

template <int D>
void write_snapshot(const std::string& dir, Index step, const SurfaceMesh<D>& m) {
  if constexpr (D == 2)
    write_curve(m, snapshot_path(dir, step, 2));
  else
    write_off(m, snapshot_path(dir, step, 3));
}

Index report_iters(const StepResult<2>& r) {
  return r.picard_iters > 1 ? r.picard_iters : std::max<Index>(r.picard_iters, r.cg_iters);
}
Index report_iters(const StepResult<3>& r) {
  return r.picard_iters > 1 ? r.picard_iters : std::max<Index>(r.picard_iters, r.cg_iters);
}

template <int D>
int run_flow(const RunConfig& cfg, const SurfaceMesh<D>& initial, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir + "/diagnostics.csv");
  if (!csv) {
    std::cerr << "error: cannot open " << out_dir << "/diagnostics.csv\n";
    return 1;
  }
  csv << diagnostics_header << '\n';

  const auto [steps, dt] = resolve_steps(cfg);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::optional<Anisotropy<D>> aniso;
  if (cfg.aniso.present()) aniso = build_anisotropy<D>(cfg.aniso);

  SurfaceMesh<D> mesh = initial;
  std::optional<WillmoreState<D>> wst;
  std::optional<StableWillmoreState<D>> sst;
  std::optional<AdeState<D>> ast;
  if (cfg.scheme == SchemeKind::willmore) wst = init_willmore(mesh);
  if (cfg.scheme == SchemeKind::willmore_stable) sst = init_willmore_stable(mesh);
  if (cfg.scheme == SchemeKind::willmore_ade)
    ast = init_willmore_ade(mesh, cfg.willmore.kappa_bar, cfg.willmore.beta_ade, cfg.willmore.M0);

  using KV = Eigen::Matrix<double, Eigen::Dynamic, D>;
  auto put = [&](Index step, const VectorXd* kappa, const KV* kv, double slack, Index iters) {
    const auto rec =
        make_record<D>(step, double(step) * dt, mesh, aniso ? &*aniso : nullptr, kappa, kv, slack,
                       iters, cfg.willmore.kappa_bar, cfg.willmore.beta_ade, cfg.willmore.M0);
    write_record_line(csv, rec);
    csv.flush();
  };
  auto snap = [&](Index step) {
    if (cfg.snapshot_every > 0 &&
        (step == 0 || step == steps || step % cfg.snapshot_every == 0))
      write_snapshot<D>(out_dir, step, mesh);
  };

  if (wst) put(0, &wst->kappa, nullptr, nan, 0);
  else if (sst) put(0, &sst->kappa, nullptr, nan, 0);
  else if (ast) put(0, nullptr, &ast->kappa_vec, nan, 0);
  else put(0, nullptr, nullptr, nan, 0);
  snap(0);

  const FChoice f = implied_f(cfg);
  for (Index m = 1; m <= steps; ++m) {
    try {
      switch (cfg.scheme) {
        case SchemeKind::mcf:
        case SchemeKind::sd:
        case SchemeKind::conserved:
        case SchemeKind::power:
        case SchemeKind::salk: {
          const StepResult<D> r = step_generic(mesh, dt, f, cfg.method, cfg.tol, cfg.picard_tol,
                                               cfg.picard_maxit);
          mesh = r.mesh;
          put(m, &r.kappa, nullptr, r.stab_slack, report_iters(r));
          break;
        }
        case SchemeKind::tangential: {
          const TangentialResult<D> tr = step_tangential(mesh, dt, f, cfg.strategy, cfg.alpha,
                                                         cfg.delta, cfg.picard_tol,
                                                         cfg.picard_maxit);
          mesh = tr.step.mesh;
          put(m, &tr.step.kappa, nullptr, tr.step.stab_slack, report_iters(tr.step));
          break;
        }
        case SchemeKind::aniso: {
          const StepResult<D> r = step_aniso(mesh, dt, *aniso, cfg.mobility, cfg.order,
                                             cfg.method, cfg.tol, cfg.picard_tol,
                                             cfg.picard_maxit);
          mesh = r.mesh;
          put(m, &r.kappa, nullptr, r.stab_slack, report_iters(r));
          break;
        }
        case SchemeKind::fdfi: {
          if constexpr (D == 2) {
            const StepResult<2> r = step_fdfi_equi(mesh, dt, cfg.picard_tol, cfg.picard_maxit);
            mesh = r.mesh;
            put(m, &r.kappa, nullptr, r.stab_slack, report_iters(r));
          }
          break;
        }
        case SchemeKind::willmore: {
          wst = step_willmore(*wst, dt, cfg.willmore);
          mesh = wst->mesh;
          put(m, &wst->kappa, nullptr, nan, 1);
          break;
        }
        case SchemeKind::willmore_stable: {
          sst = step_willmore_stable(*sst, dt);
          mesh = sst->mesh;
          put(m, &sst->kappa, nullptr, nan, 1);
          break;
        }
        case SchemeKind::willmore_ade: {
          ast = step_willmore_ade(*ast, dt, cfg.willmore.kappa_bar, cfg.willmore.beta_ade,
                                  cfg.willmore.M0);
          mesh = ast->mesh;
          put(m, nullptr, &ast->kappa_vec, nan, 1);
          break;
        }
        default: {  // mcf variants
          const StepResult<D> r = step_mcf_variant(mesh, dt, variant_of(cfg.scheme), cfg.theta);
          mesh = r.mesh;
          put(m, nullptr, nullptr, r.stab_slack, report_iters(r));
          break;
        }
      }
    } catch (const std::exception& e) {
      csv.flush();
      std::cerr << "error: step " << m << " (t = " << double(m) * dt << "): " << e.what() << "\n";
      return 1;
    }
    snap(m);
  }
  return 0;
}

double max_radius_error(const MatrixXd& X, double r_exact) {
  double e = 0;
  for (Index k = 0; k < X.rows(); ++k)
    e = std::max(e, std::abs(X.row(k).norm() - r_exact));
  return e;
}

}  // namespace

std::vector<EocLevel> run_eoc(const EocSpec& spec) {
  if (spec.levels < 2) throw ConfigError("eoc: need >= 2 levels");
  const std::string& sel = spec.selector;
  const bool circle_mcf = sel == "circle_mcf";
  const bool sphere_mcf = sel == "sphere_mcf";
  const bool circle_willmore = sel == "circle_willmore";
  if (!circle_mcf && !sphere_mcf && !circle_willmore)
    throw ConfigError("unknown eoc selector '" + sel +
                      "' (circle_mcf, sphere_mcf, circle_willmore)");
  const double T = spec.t_end > 0 ? spec.t_end : (circle_mcf ? 0.25 : 0.1);
  if (circle_mcf && T >= 0.5) throw ConfigError("eoc: circle_mcf needs t_end < 0.5");
  if (sphere_mcf && T >= 0.25) throw ConfigError("eoc: sphere_mcf needs t_end < 0.25");

  std::vector<EocLevel> out;
  for (Index l = 0; l < spec.levels; ++l) {
    EocLevel lev;
    lev.level = l;
    double h = 0, r_exact = 0;
    if (sphere_mcf) {
      lev.n = (spec.base > 0 ? spec.base : 1) + l;
      r_exact = std::sqrt(1.0 - 4.0 * T);
    } else {
      lev.n = (spec.base > 0 ? spec.base : 32) << l;
      r_exact = circle_mcf ? std::sqrt(1.0 - 2.0 * T) : std::pow(1.0 + 2.0 * T, 0.25);
    }

    if (sphere_mcf) {
      TriSurface m = generate_icosphere(int(lev.n), 1.0);
      h = mesh_quality(m).max_edge;
      lev.steps = std::max<Index>(1, Index(std::llround(T / (spec.dt_factor * h * h))));
      lev.dt = T / double(lev.steps);
      for (Index s = 0; s < lev.steps; ++s) m = step_mcf(m, lev.dt).mesh;
      lev.error = max_radius_error(m.X, r_exact);
    } else {
      PolyCurve m = generate_circle(lev.n, 1.0, 0.0);
      h = 2.0 * std::numbers::pi / double(lev.n);
      lev.steps = std::max<Index>(1, Index(std::llround(T / (spec.dt_factor * h * h))));
      lev.dt = T / double(lev.steps);
      if (circle_mcf) {
        for (Index s = 0; s < lev.steps; ++s) m = step_mcf(m, lev.dt).mesh;
      } else {
        WillmoreState<2> st = init_willmore(m);
        const WillmoreParams p;
        for (Index s = 0; s < lev.steps; ++s) st = step_willmore(st, lev.dt, p);
        m = st.mesh;
      }
      lev.error = max_radius_error(m.X, r_exact);
    }
    lev.eoc = out.empty() ? std::numeric_limits<double>::quiet_NaN()
                          : std::log2(out.back().error / lev.error);
    out.push_back(lev);
  }
  return out;
}

int cmd_run(const RunConfig& cfg, const std::string& out_dir) {
  const int dim = mesh_dimension(cfg.mesh);
  validate_run(cfg, dim);
  if (dim == 2) {
    const PolyCurve m = cfg.mesh.generate.empty()
                            ? read_curve(cfg.mesh.file)
                            : build_curve(parse_generator_spec(cfg.mesh.generate));
    return run_flow<2>(cfg, m, out_dir);
  }
  const TriSurface m = cfg.mesh.generate.empty()
                           ? read_off(cfg.mesh.file)
                           : build_surface(parse_generator_spec(cfg.mesh.generate));
  return run_flow<3>(cfg, m, out_dir);
}

int cmd_eoc(const RunConfig& cfg, const std::string& out_dir) {
  const std::vector<EocLevel> table = run_eoc(cfg.eoc);
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir + "/eoc.csv");
  if (!csv) {
    std::cerr << "error: cannot open " << out_dir << "/eoc.csv\n";
    return 1;
  }
  csv << "level,J,dt,steps,error,eoc\n";
  for (const auto& l : table) {
    csv << l.level << ',' << l.n << ',' << format_g17(l.dt) << ',' << l.steps << ','
        << format_g17(l.error) << ',' << format_g17(l.eoc) << '\n';
    std::printf("level %2lld  n %6lld  dt %.3e  steps %6lld  error %.6e  eoc %s\n",
                static_cast<long long>(l.level), static_cast<long long>(l.n), l.dt,
                static_cast<long long>(l.steps), l.error,
                std::isnan(l.eoc) ? "   -" : format_g17(l.eoc).substr(0, 5).c_str());
  }
  return 0;
}

int cmd_meshgen(const std::string& spec, const std::string& path) {
  const GeneratorSpec g = parse_generator_spec(spec);
  if (generator_dimension(g.name) == 2) {
    const PolyCurve m = build_curve(g);
    write_curve(m, path);
    std::cout << path << ": " << m.num_vertices() << " vertices\n";
  } else {
    const TriSurface m = build_surface(g);
    write_off(m, path);
    std::cout << path << ": " << m.num_vertices() << " vertices, " << m.num_elements()
              << " faces\n";
  }
  return 0;
}

}  // namespace pflow
