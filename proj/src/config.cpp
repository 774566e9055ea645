#include "icbs/config.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <stdexcept>

namespace icbs {

namespace {

std::string trim(const std::string& text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    return text.substr(begin, end - begin);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& why) {
    throw std::invalid_argument("config: " + key + "=" + value + " " + why);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double parsed = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return parsed;
    } catch (const std::exception&) {
        bad_value(key, value, "is not a number");
    }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const std::int64_t parsed = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return parsed;
    } catch (const std::exception&) {
        bad_value(key, value, "is not an integer");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const std::uint64_t parsed = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
        return parsed;
    } catch (const std::exception&) {
        bad_value(key, value, "is not an unsigned integer");
    }
}

// "method" or "method (scope)", e.g. "Magnitude (per layer)".
void parse_method_value(const std::string& key, const std::string& value, ScoreMethod& method,
                        ScoreScope& scope) {
    const std::size_t paren = value.find('(');
    try {
        if (paren == std::string::npos) {
            method = parse_score_method(value);
            scope = ScoreScope::kPerLayer;
        } else {
            method = parse_score_method(value.substr(0, paren));
            const std::size_t close = value.find(')', paren);
            if (close == std::string::npos) throw std::invalid_argument("unclosed scope");
            scope = parse_score_scope(value.substr(paren + 1, close - paren - 1));
        }
    } catch (const std::exception& err) {
        bad_value(key, value, std::string("(") + err.what() + ")");
    }
}

void apply_key(RunConfig& config, const std::string& key, const std::string& value) {
    if (key == "density") {
        config.density = parse_double(key, value);
    } else if (key == "num_epochs") {
        config.num_epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "num_steps") {
        config.num_steps = static_cast<int>(parse_int(key, value));
    } else if (key == "init_method") {
        parse_method_value(key, value, config.init_method, config.init_scope);
    } else if (key == "selection_method") {
        parse_method_value(key, value, config.selection_method, config.selection_scope);
    } else if (key == "block_size") {
        config.block_size = static_cast<int>(parse_int(key, value));
    } else if (key == "num_restarts") {
        config.num_restarts = static_cast<int>(parse_int(key, value));
    } else if (key == "batch_size_evaluation") {
        config.batch_size_evaluation = parse_int(key, value);
    } else if (key == "batch_size_pruning") {
        config.batch_size_pruning = parse_int(key, value);
    } else if (key == "batch_size_calibration") {
        config.batch_size_calibration = parse_int(key, value);
    } else if (key == "grad_multiplier") {
        config.grad_multiplier = parse_double(key, value);
    } else if (key == "ridge_multiplier") {
        config.ridge_multiplier = parse_double(key, value);
    } else if (key == "tabu_frac") {
        config.tabu_frac = parse_double(key, value);
    } else if (key == "fix_frac_prune") {
        config.fix_frac_prune = parse_double(key, value);
    } else if (key == "fix_frac_keep") {
        config.fix_frac_keep = parse_double(key, value);
    } else if (key == "seed") {
        config.seed = parse_u64(key, value);
    } else if (key == "sa_sweeps") {
        config.sa_sweeps = static_cast<int>(parse_int(key, value));
    } else if (key == "sa_t_final") {
        config.sa_t_final = parse_double(key, value);
    } else {
        throw std::invalid_argument("config: unknown key '" + key + "'");
    }
}

std::string method_string(ScoreMethod method, ScoreScope scope) {
    return to_string(method) + " (" + to_string(scope) + ")";
}

}  // namespace

std::pair<std::string, std::string> split_override(const std::string& text) {
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("config: override '" + text + "' is not key=value");
    return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

RunConfig parse_config(const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open file " + path);
    RunConfig config;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos || trim(line.substr(0, eq)).empty())
            throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                        " is not key=value: '" + line + "'");
        apply_key(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    for (const auto& [key, value] : overrides) apply_key(config, key, value);
    validate_config(config);
    return config;
}

RunConfig parse_config_overrides(
    const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig config;
    for (const auto& [key, value] : overrides) apply_key(config, key, value);
    validate_config(config);
    return config;
}

void validate_config(const RunConfig& config) {
    if (config.density < 0.0)
        throw std::invalid_argument(
            "config: density is required (runs are per-density; no default)");
    if (!(config.density > 0.0 && config.density < 1.0))
        throw std::invalid_argument("config: density=" + std::to_string(config.density) +
                                    " out of range (0, 1)");
    auto in_unit = [](const char* key, double value) {
        if (value < 0.0 || value >= 1.0)
            throw std::invalid_argument("config: " + std::string(key) + "=" +
                                        std::to_string(value) + " out of range [0, 1)");
    };
    in_unit("tabu_frac", config.tabu_frac);
    in_unit("fix_frac_prune", config.fix_frac_prune);
    in_unit("fix_frac_keep", config.fix_frac_keep);
    auto at_least = [](const char* key, std::int64_t value, std::int64_t bound) {
        if (value < bound)
            throw std::invalid_argument("config: " + std::string(key) + "=" +
                                        std::to_string(value) + " must be >= " +
                                        std::to_string(bound));
    };
    at_least("num_epochs", config.num_epochs, 0);
    at_least("num_steps", config.num_steps, 0);
    at_least("block_size", config.block_size, 2);
    at_least("num_restarts", config.num_restarts, 1);
    at_least("batch_size_evaluation", config.batch_size_evaluation, 1);
    at_least("batch_size_pruning", config.batch_size_pruning, 1);
    at_least("batch_size_calibration", config.batch_size_calibration, 1);
    at_least("sa_sweeps", config.sa_sweeps, 1);
    if (config.grad_multiplier < 0.0)
        throw std::invalid_argument("config: grad_multiplier must be >= 0");
    if (config.ridge_multiplier < 0.0)
        throw std::invalid_argument("config: ridge_multiplier must be >= 0");
    if (config.sa_t_final <= 0.0)
        throw std::invalid_argument("config: sa_t_final must be > 0");
}

nlohmann::ordered_json config_to_json(const RunConfig& config) {
    nlohmann::ordered_json echo;
    echo["density"] = config.density;
    echo["num_epochs"] = config.num_epochs;
    echo["num_steps"] = config.num_steps;
    echo["init_method"] = method_string(config.init_method, config.init_scope);
    echo["selection_method"] = method_string(config.selection_method, config.selection_scope);
    echo["block_size"] = config.block_size;
    echo["num_restarts"] = config.num_restarts;
    echo["batch_size_evaluation"] = config.batch_size_evaluation;
    echo["batch_size_pruning"] = config.batch_size_pruning;
    echo["batch_size_calibration"] = config.batch_size_calibration;
    echo["grad_multiplier"] = config.grad_multiplier;
    echo["ridge_multiplier"] = config.ridge_multiplier;
    echo["tabu_frac"] = config.tabu_frac;
    echo["fix_frac_prune"] = config.fix_frac_prune;
    echo["fix_frac_keep"] = config.fix_frac_keep;
    echo["seed"] = config.seed;
    echo["sa_sweeps"] = config.sa_sweeps;
    echo["sa_t_final"] = config.sa_t_final;
    return echo;
}

}  // namespace icbs
