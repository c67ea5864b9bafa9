#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pflow/runner.hpp"

namespace {

pflow::RunConfig load_config(const std::string& config, const std::string& preset) {
  if (config.empty() == preset.empty())
    throw pflow::ConfigError("give exactly one of --config or --preset");
  if (!config.empty()) return pflow::parse_config_file(config);
  std::istringstream in(pflow::preset_config_text(preset));
  return pflow::parse_config(in, "preset:" + preset);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parametric finite elements for curvature-driven evolution of curves and surfaces"};
  app.require_subcommand(1);

  std::string config, preset, out = "out", spec, path;
  bool serial = true;

  auto* run = app.add_subcommand("run", "advance a flow and write diagnostics");
  run->add_option("--config", config, "config file (sectioned key = value)");
  run->add_option("--preset", preset, "bundled preset (spiral, shrinking-circle)");
  run->add_option("--out", out, "output directory");
  run->add_flag("--serial", serial, "single-threaded execution (the only mode)");

  auto* eoc = app.add_subcommand("eoc", "mesh-refinement study against exact radius evolution");
  eoc->add_option("--config", config, "config file with an [eoc] section")->required();
  eoc->add_option("--out", out, "output directory");
  eoc->add_flag("--serial", serial, "single-threaded execution (the only mode)");

  auto* gen = app.add_subcommand("meshgen", "generate a mesh and write it to a file");
  gen->add_option("spec", spec, "generator call, e.g. circle(128,1,0) or icosphere(3,1)")
      ->required();
  gen->add_option("path", path, "output file (.curve or .off)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return pflow::cmd_run(load_config(config, preset), out);
    if (eoc->parsed()) return pflow::cmd_eoc(load_config(config, preset), out);
    return pflow::cmd_meshgen(spec, path);
  } catch (const pflow::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
