#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "pflow/flows.hpp"
#include "pflow/generate.hpp"
#include "pflow/willmore.hpp"

namespace pflow {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// generator call of the form name(arg, arg, ...)
struct GeneratorSpec {
  std::string name;
  std::vector<double> args;
};

GeneratorSpec parse_generator_spec(const std::string& text);

// 2 for curve generators, 3 for surface generators
int generator_dimension(const std::string& name);

PolyCurve build_curve(const GeneratorSpec& g);
TriSurface build_surface(const GeneratorSpec& g);

struct MeshSpec {
  std::string generate;  // generator spec string, or
  std::string file;      // path to a .curve / .off file
};

enum class SchemeKind {
  mcf,
  mcf_dziuk,
  mcf_dziuk_lumped,
  mcf_theta,
  mcf_dd95,
  mcf_elimkappa,
  mcf_elimkappa_raw,
  sd,
  conserved,
  power,
  salk,
  tangential,
  aniso,
  fdfi,
  willmore,
  willmore_stable,
  willmore_ade
};

SchemeKind parse_scheme(const std::string& s);
std::string scheme_name(SchemeKind s);

// dimension-independent anisotropy description; realized per mesh dimension
struct AnisoSpec {
  double r = 1.0;
  struct Entry {
    std::string preset;         // iso / weighted / l1reg / cubic / hexagonal / explicit
    std::vector<double> args;
  };
  std::vector<Entry> entries;
  bool present() const { return !entries.empty(); }
};

template <int D>
Anisotropy<D> build_anisotropy(const AnisoSpec& spec);

struct EocSpec {
  std::string selector;  // circle_mcf / sphere_mcf / circle_willmore
  Index levels = 0;
  Index base = 0;        // starting J (curves) or subdivision level (spheres); 0 = selector default
  double t_end = 0;      // 0 = selector default
  double dt_factor = 0.25;  // dt = factor * h^2
};

struct RunConfig {
  MeshSpec mesh;
  SchemeKind scheme = SchemeKind::mcf;
  double dt = 1e-4;
  double t_end = 0;  // exactly one of t_end / steps
  Index steps = 0;
  double theta = 0.0;
  FChoice f;  // F-choice for the tangential scheme and power/salk parameters
  TangentialStrategy strategy = TangentialStrategy::s1;
  double alpha = 0.0;
  double delta = 1.0;
  AnisoSpec aniso;
  Mobility mobility;
  AnisoOrder order = AnisoOrder::second;
  WillmoreParams willmore;
  double kappa_sign = 1.0;
  SaddleMethod method = SaddleMethod::direct;
  double tol = 1e-12;
  double picard_tol = 1e-10;
  Index picard_maxit = 100;
  Index snapshot_every = 0;
  EocSpec eoc;
};

// sectioned key=value parser; unknown sections/keys and malformed values are
// ConfigError with file:line positions
RunConfig parse_config(std::istream& in, const std::string& filename);
RunConfig parse_config_file(const std::string& path);

// bundled presets as config text, parsed through the regular parser
std::string preset_config_text(const std::string& name);

// number of mesh steps and the adjusted dt that divides t_end exactly
std::pair<Index, double> resolve_steps(const RunConfig& c);

}  // namespace pflow
