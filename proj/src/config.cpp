#include "pflow/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace pflow {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size())
    throw ConfigError(where + ": expected a number, got '" + s + "'");
  return v;
}

Index to_index(const std::string& s, const std::string& where) {
  const double v = to_double(s, where);
  const Index i = Index(std::llround(v));
  if (double(i) != v) throw ConfigError(where + ": expected an integer, got '" + s + "'");
  return i;
}

bool to_bool(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  if (t == "true" || t == "on" || t == "1") return true;
  if (t == "false" || t == "off" || t == "0") return false;
  throw ConfigError(where + ": expected a boolean, got '" + s + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

GeneratorSpec parse_generator_spec(const std::string& text) {
  const std::string t = trim(text);
  GeneratorSpec g;
  const auto open = t.find('(');
  if (open == std::string::npos) {
    g.name = t;
    return g;
  }
  if (t.back() != ')') throw ConfigError("malformed call '" + text + "': missing ')'");
  g.name = trim(t.substr(0, open));
  const std::string inner = t.substr(open + 1, t.size() - open - 2);
  if (!trim(inner).empty())
    for (const std::string& a : split(inner, ','))
      g.args.push_back(to_double(a, "argument of " + g.name));
  if (g.name.empty()) throw ConfigError("malformed call '" + text + "': empty name");
  return g;
}

int generator_dimension(const std::string& name) {
  if (name == "circle" || name == "ellipse" || name == "spiral") return 2;
  if (name == "icosphere" || name == "torus" || name == "cube_sphere") return 3;
  throw ConfigError("unknown mesh generator '" + name + "'");
}

namespace {
void need_args(const GeneratorSpec& g, size_t lo, size_t hi) {
  if (g.args.size() < lo || g.args.size() > hi)
    throw ConfigError("generator " + g.name + ": expected " + std::to_string(lo) +
                      (hi > lo ? ".." + std::to_string(hi) : "") + " arguments, got " +
                      std::to_string(g.args.size()));
}
}  // namespace

PolyCurve build_curve(const GeneratorSpec& g) {
  if (g.name == "circle") {
    need_args(g, 3, 4);
    const unsigned seed = g.args.size() > 3 ? unsigned(g.args[3]) : default_perturb_seed;
    return generate_circle(Index(g.args[0]), g.args[1], g.args[2], seed);
  }
  if (g.name == "ellipse") {
    need_args(g, 3, 3);
    return generate_ellipse(Index(g.args[0]), g.args[1], g.args[2]);
  }
  if (g.name == "spiral") {
    need_args(g, 2, 2);
    return generate_closed_spiral(Index(g.args[0]), g.args[1]);
  }
  throw ConfigError("unknown curve generator '" + g.name + "'");
}

TriSurface build_surface(const GeneratorSpec& g) {
  if (g.name == "icosphere") {
    need_args(g, 2, 2);
    return generate_icosphere(int(g.args[0]), g.args[1]);
  }
  if (g.name == "torus") {
    need_args(g, 4, 4);
    return generate_torus(Index(g.args[0]), Index(g.args[1]), g.args[2], g.args[3]);
  }
  if (g.name == "cube_sphere") {
    need_args(g, 2, 2);
    return generate_cube_projected_sphere(int(g.args[0]), g.args[1]);
  }
  throw ConfigError("unknown surface generator '" + g.name + "'");
}

SchemeKind parse_scheme(const std::string& s) {
  static const std::map<std::string, SchemeKind> table = {
      {"mcf", SchemeKind::mcf},
      {"mcf_dziuk", SchemeKind::mcf_dziuk},
      {"mcf_dziuk_lumped", SchemeKind::mcf_dziuk_lumped},
      {"mcf_theta", SchemeKind::mcf_theta},
      {"mcf_dd95", SchemeKind::mcf_dd95},
      {"mcf_elimkappa", SchemeKind::mcf_elimkappa},
      {"mcf_elimkappa_raw", SchemeKind::mcf_elimkappa_raw},
      {"sd", SchemeKind::sd},
      {"conserved", SchemeKind::conserved},
      {"power", SchemeKind::power},
      {"salk", SchemeKind::salk},
      {"tangential", SchemeKind::tangential},
      {"aniso", SchemeKind::aniso},
      {"fdfi", SchemeKind::fdfi},
      {"willmore", SchemeKind::willmore},
      {"willmore_stable", SchemeKind::willmore_stable},
      {"willmore_ade", SchemeKind::willmore_ade},
  };
  const auto it = table.find(s);
  if (it == table.end()) throw ConfigError("unknown scheme '" + s + "'");
  return it->second;
}

std::string scheme_name(SchemeKind s) {
  switch (s) {
    case SchemeKind::mcf: return "mcf";
    case SchemeKind::mcf_dziuk: return "mcf_dziuk";
    case SchemeKind::mcf_dziuk_lumped: return "mcf_dziuk_lumped";
    case SchemeKind::mcf_theta: return "mcf_theta";
    case SchemeKind::mcf_dd95: return "mcf_dd95";
    case SchemeKind::mcf_elimkappa: return "mcf_elimkappa";
    case SchemeKind::mcf_elimkappa_raw: return "mcf_elimkappa_raw";
    case SchemeKind::sd: return "sd";
    case SchemeKind::conserved: return "conserved";
    case SchemeKind::power: return "power";
    case SchemeKind::salk: return "salk";
    case SchemeKind::tangential: return "tangential";
    case SchemeKind::aniso: return "aniso";
    case SchemeKind::fdfi: return "fdfi";
    case SchemeKind::willmore: return "willmore";
    case SchemeKind::willmore_stable: return "willmore_stable";
    case SchemeKind::willmore_ade: return "willmore_ade";
  }
  return "?";
}

template <int D>
Anisotropy<D> build_anisotropy(const AnisoSpec& spec) {
  using Mat = Eigen::Matrix<double, D, D>;
  std::vector<Mat> G;
  double r = spec.r;
  for (const auto& e : spec.entries) {
    if (e.preset == "iso") {
      G.push_back(Mat::Identity());
    } else if (e.preset == "weighted") {
      if (e.args.size() != D)
        throw ConfigError("weighted anisotropy needs " + std::to_string(D) + " weights");
      Mat g = Mat::Zero();
      for (int c = 0; c < D; ++c) g(c, c) = e.args[c];
      G.push_back(g);
    } else if (e.preset == "l1reg") {
      if (e.args.size() != 1) throw ConfigError("l1reg anisotropy needs (eps)");
      const auto a = aniso_l1reg<D>(e.args[0]);
      G.insert(G.end(), a.G.begin(), a.G.end());
    } else if (e.preset == "cubic") {
      if (e.args.size() != 2) throw ConfigError("cubic anisotropy needs (eps, r)");
      const auto a = aniso_cubic<D>(e.args[0], e.args[1]);
      G.insert(G.end(), a.G.begin(), a.G.end());
      r = e.args[1];
    } else if (e.preset == "hexagonal") {
      if constexpr (D == 3) {
        if (e.args.size() != 2) throw ConfigError("hexagonal anisotropy needs (eps, theta0)");
        const auto a = aniso_hexagonal(e.args[0], e.args[1]);
        G.insert(G.end(), a.G.begin(), a.G.end());
      } else {
        throw ConfigError("hexagonal anisotropy is defined for surfaces only");
      }
    } else if (e.preset == "explicit") {
      if (e.args.size() != size_t(D) * D)
        throw ConfigError("explicit anisotropy matrix needs " + std::to_string(D * D) +
                          " row-major entries");
      Mat g;
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) g(i, j) = e.args[i * D + j];
      G.push_back(g);
    } else {
      throw ConfigError("unknown anisotropy entry '" + e.preset + "'");
    }
  }
  return make_anisotropy<D>(r, G);
}

template Anisotropy<2> build_anisotropy<2>(const AnisoSpec&);
template Anisotropy<3> build_anisotropy<3>(const AnisoSpec&);

namespace {

struct Parser {
  RunConfig cfg;
  std::string file;
  Index line = 0;
  std::string section;
  bool saw_steps = false, saw_t_end = false;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(file + ":" + std::to_string(line) + ": " + msg);
  }

  std::string where(const std::string& key) const {
    return file + ":" + std::to_string(line) + ": " + key;
  }

  void handle(const std::string& key, const std::string& value) {
    if (section == "mesh") {
      if (key == "generate") cfg.mesh.generate = value;
      else if (key == "file") cfg.mesh.file = value;
      else fail("unknown key '" + key + "' in [mesh]");
    } else if (section == "flow") {
      if (key == "scheme") cfg.scheme = parse_scheme(value);
      else if (key == "dt") cfg.dt = to_double(value, where(key));
      else if (key == "t_end") { cfg.t_end = to_double(value, where(key)); saw_t_end = true; }
      else if (key == "steps") { cfg.steps = to_index(value, where(key)); saw_steps = true; }
      else if (key == "theta") cfg.theta = to_double(value, where(key));
      else if (key == "f") cfg.f.kind = parse_fkind(value);
      else if (key == "beta_exp") cfg.f.beta_exp = to_double(value, where(key));
      else if (key == "alpha_s") cfg.f.alpha_s = to_double(value, where(key));
      else if (key == "xi") cfg.f.xi = to_double(value, where(key));
      else if (key == "strategy") cfg.strategy = parse_tangential_strategy(value);
      else if (key == "alpha") cfg.alpha = to_double(value, where(key));
      else if (key == "delta") cfg.delta = to_double(value, where(key));
      else if (key == "order") cfg.order = parse_order(value);
      else if (key == "mobility") cfg.mobility = parse_mobility_value(value);
      else if (key == "kappa_bar") cfg.willmore.kappa_bar = to_double(value, where(key));
      else if (key == "beta_ade") cfg.willmore.beta_ade = to_double(value, where(key));
      else if (key == "m0") cfg.willmore.M0 = to_double(value, where(key));
      else if (key == "constraints") parse_constraints(value);
      else if (key == "weingarten") cfg.willmore.weingarten = parse_weingarten(value);
      else if (key == "kappa_sign") cfg.kappa_sign = to_double(value, where(key));
      else fail("unknown key '" + key + "' in [flow]");
    } else if (section == "anisotropy") {
      if (key == "r") cfg.aniso.r = to_double(value, where(key));
      else if (key == "matrix") {
        const GeneratorSpec g = parse_generator_spec(value);
        cfg.aniso.entries.push_back({g.name, g.args});
      } else fail("unknown key '" + key + "' in [anisotropy]");
    } else if (section == "solver") {
      if (key == "method") cfg.method = parse_saddle_method(value);
      else if (key == "tol") cfg.tol = to_double(value, where(key));
      else if (key == "picard_tol") cfg.picard_tol = to_double(value, where(key));
      else if (key == "picard_maxit") cfg.picard_maxit = to_index(value, where(key));
      else fail("unknown key '" + key + "' in [solver]");
    } else if (section == "output") {
      if (key == "snapshot_every") cfg.snapshot_every = to_index(value, where(key));
      else fail("unknown key '" + key + "' in [output]");
    } else if (section == "eoc") {
      if (key == "selector") cfg.eoc.selector = value;
      else if (key == "levels") cfg.eoc.levels = to_index(value, where(key));
      else if (key == "base") cfg.eoc.base = to_index(value, where(key));
      else if (key == "t_end") cfg.eoc.t_end = to_double(value, where(key));
      else if (key == "dt_factor") cfg.eoc.dt_factor = to_double(value, where(key));
      else fail("unknown key '" + key + "' in [eoc]");
    } else {
      fail("key '" + key + "' outside any section");
    }
  }

  FKind parse_fkind(const std::string& s) const {
    if (s == "mcf") return FKind::mcf;
    if (s == "sd") return FKind::sd;
    if (s == "conserved") return FKind::conserved;
    if (s == "power") return FKind::power;
    if (s == "salk") return FKind::salk;
    fail("unknown F-choice '" + s + "'");
  }

  AnisoOrder parse_order(const std::string& s) const {
    if (s == "second") return AnisoOrder::second;
    if (s == "fourth") return AnisoOrder::fourth;
    fail("unknown order '" + s + "' (second or fourth)");
  }

  Mobility parse_mobility_value(const std::string& s) const {
    const GeneratorSpec g = parse_generator_spec(s);
    if (g.name == "one") return {};
    if (g.name == "gamma") return {MobilityKind::gamma, {}};
    if (g.name == "weighted") {
      Mobility m{MobilityKind::weighted, VectorXd(g.args.size())};
      for (size_t i = 0; i < g.args.size(); ++i) m.weights[Index(i)] = g.args[i];
      return m;
    }
    fail("unknown mobility '" + s + "'");
  }

  void parse_constraints(const std::string& s) {
    cfg.willmore.constrain_area = cfg.willmore.constrain_volume = false;
    if (trim(s) == "none") return;
    for (const std::string& part : split(s, ',')) {
      const std::string p = trim(part);
      if (p == "area") cfg.willmore.constrain_area = true;
      else if (p == "volume") cfg.willmore.constrain_volume = true;
      else fail("unknown constraint '" + p + "' (area, volume or none)");
    }
  }

  void validate() {
    line = 0;  // errors below are not tied to a line
    const bool has_gen = !cfg.mesh.generate.empty(), has_file = !cfg.mesh.file.empty();
    if (has_gen == has_file)
      throw ConfigError(file + ": [mesh] needs exactly one of 'generate' or 'file'");
    if (!(cfg.dt > 0)) throw ConfigError(file + ": dt must be positive");
    if (saw_steps == saw_t_end)
      throw ConfigError(file + ": [flow] needs exactly one of 't_end' or 'steps'");
    if (saw_steps && cfg.steps < 1) throw ConfigError(file + ": steps must be >= 1");
    if (saw_t_end && !(cfg.t_end > 0)) throw ConfigError(file + ": t_end must be positive");
    if (!(cfg.theta >= 0 && cfg.theta <= 1)) throw ConfigError(file + ": theta must lie in [0,1]");
    if (cfg.alpha < 0 || cfg.delta < 0)
      throw ConfigError(file + ": alpha and delta must be nonnegative");
    if (!(cfg.aniso.r >= 1)) throw ConfigError(file + ": anisotropy r must be >= 1");
    if (cfg.kappa_sign != 1.0 && cfg.kappa_sign != -1.0)
      throw ConfigError(file + ": kappa_sign must be 1 or -1");
    if (cfg.scheme == SchemeKind::aniso && !cfg.aniso.present())
      throw ConfigError(file + ": scheme aniso needs an [anisotropy] section with matrices");
    if (cfg.picard_maxit < 1) throw ConfigError(file + ": picard_maxit must be >= 1");
    if (cfg.snapshot_every < 0) throw ConfigError(file + ": snapshot_every must be >= 0");
    if (!(cfg.f.beta_exp > 0)) throw ConfigError(file + ": beta_exp must be positive");
    if (!(cfg.f.alpha_s > 0) || !(cfg.f.xi > 0))
      throw ConfigError(file + ": alpha_s and xi must be positive");
  }
};

}  // namespace

RunConfig parse_config(std::istream& in, const std::string& filename) {
  Parser p;
  p.file = filename;
  std::string raw;
  while (std::getline(in, raw)) {
    ++p.line;
    std::string s = raw;
    const auto hash = s.find('#');
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') p.fail("malformed section header '" + raw + "'");
      const std::string name = trim(s.substr(1, s.size() - 2));
      static const std::set<std::string> sections = {"mesh",   "flow",   "anisotropy",
                                                     "solver", "output", "eoc"};
      if (!sections.count(name)) p.fail("unknown section [" + name + "]");
      p.section = name;
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) p.fail("expected key = value, got '" + raw + "'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) p.fail("empty key");
    try {
      p.handle(key, value);
    } catch (const ConfigError& e) {
      const std::string pre = p.file + ":" + std::to_string(p.line) + ":";
      if (std::string(e.what()).rfind(pre, 0) == 0) throw;
      p.fail(e.what());
    } catch (const std::exception& e) {
      p.fail(e.what());
    }
  }
  p.validate();
  return p.cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

std::string preset_config_text(const std::string& name) {
  if (name == "spiral")
    return "[mesh]\n"
           "generate = spiral(1024, 3)\n"
           "[flow]\n"
           "scheme = mcf\n"
           "dt = 1e-7\n"
           "t_end = 0.024\n"
           "[output]\n"
           "snapshot_every = 60000\n";
  if (name == "shrinking-circle")
    return "[mesh]\n"
           "generate = circle(128, 1, 0)\n"
           "[flow]\n"
           "scheme = mcf\n"
           "dt = 1e-4\n"
           "t_end = 0.25\n";
  throw ConfigError("unknown preset '" + name + "' (spiral, shrinking-circle)");
}

std::pair<Index, double> resolve_steps(const RunConfig& c) {
  if (c.steps > 0) return {c.steps, c.dt};
  const Index n = std::max<Index>(1, Index(std::llround(c.t_end / c.dt)));
  return {n, c.t_end / double(n)};
}

}  // namespace pflow
