#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "icbs/scoring.hpp"

namespace icbs {

// All pruning-run knobs. Defaults are the stock Fashion-MNIST garment
// classifier configuration; density has no default and must be supplied per
// run (runs are per-density). Config files use these field names verbatim.
struct RunConfig {
    double density = -1.0;  // required, in (0, 1)
    int num_epochs = 10;
    int num_steps = 300;
    ScoreMethod init_method = ScoreMethod::kMagnitude;
    ScoreScope init_scope = ScoreScope::kPerLayer;
    ScoreMethod selection_method = ScoreMethod::kGradient;
    ScoreScope selection_scope = ScoreScope::kPerLayer;
    int block_size = 1024;
    int num_restarts = 10;
    std::int64_t batch_size_evaluation = 4096;
    std::int64_t batch_size_pruning = 2000;
    std::int64_t batch_size_calibration = 4096;
    double grad_multiplier = 0.75;   // alpha
    double ridge_multiplier = 0.001; // lambda
    double tabu_frac = 0.40;
    double fix_frac_prune = 0.42;
    double fix_frac_keep = 0.35;
    std::uint64_t seed = 0;
    // Annealer effort knobs (see SaSchedule for the full schedule shape).
    int sa_sweeps = 500;
    double sa_t_final = 1e-3;
};

// Parses a flat key=value config file ('#' starts a comment). Overrides take
// precedence over file values. Unknown keys and out-of-range values raise a
// named config error; a missing density does too.
RunConfig parse_config(const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& overrides);

// As above without a file (all values from defaults + overrides).
RunConfig parse_config_overrides(
    const std::vector<std::pair<std::string, std::string>>& overrides);

// Splits "key=value" override flags.
std::pair<std::string, std::string> split_override(const std::string& text);

void validate_config(const RunConfig& config);

// Config echo with verbatim parameter names, for run logs and checkpoints.
nlohmann::ordered_json config_to_json(const RunConfig& config);

}  // namespace icbs
