#pragma once

#include <string>
#include <vector>

#include "pflow/config.hpp"

namespace pflow {

struct EocLevel {
  Index level = 0;
  Index n = 0;  // J for curve selectors, subdivision level for sphere selectors
  double dt = 0;
  Index steps = 0;
  double error = 0;
  double eoc = 0;  // log2 error ratio against the previous level, nan on the first
};

// mesh-refinement study against the exact radius evolution of the selector
std::vector<EocLevel> run_eoc(const EocSpec& spec);

// exit codes: 0 success, 1 runtime failure (degenerate mesh, solver breakdown),
// 2 configuration problem detected before any output is written
int cmd_run(const RunConfig& cfg, const std::string& out_dir);
int cmd_eoc(const RunConfig& cfg, const std::string& out_dir);
int cmd_meshgen(const std::string& spec, const std::string& path);

}  // namespace pflow
