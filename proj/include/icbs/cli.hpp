#pragma once

#include <string>
#include <vector>

namespace icbs {

// Full command-line surface (train / prune-baseline / prune-icbs / eval /
// report / solve). Returns the process exit code; failures print a
// single-line diagnostic to stderr and never leave partial outputs.
int run_cli(const std::vector<std::string>& args);

}  // namespace icbs
