#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "icbs/config.hpp"

using namespace icbs;

namespace {

std::string write_tmp_config(const std::string& name, const std::string& body) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::trunc);
    out << body;
    return path.string();
}

}  // namespace

TEST_CASE("empty file plus density override yields the stock defaults") {
    const auto path = write_tmp_config("icbs_empty.cfg", "# nothing but comments\n\n");
    const RunConfig config = parse_config(path, {{"density", "0.5"}});
    CHECK(config.density == 0.5);
    CHECK(config.num_epochs == 10);
    CHECK(config.num_steps == 300);
    CHECK(config.init_method == ScoreMethod::kMagnitude);
    CHECK(config.init_scope == ScoreScope::kPerLayer);
    CHECK(config.selection_method == ScoreMethod::kGradient);
    CHECK(config.selection_scope == ScoreScope::kPerLayer);
    CHECK(config.block_size == 1024);
    CHECK(config.num_restarts == 10);
    CHECK(config.batch_size_evaluation == 4096);
    CHECK(config.batch_size_pruning == 2000);
    CHECK(config.batch_size_calibration == 4096);
    CHECK(config.grad_multiplier == 0.75);
    CHECK(config.ridge_multiplier == 0.001);
    CHECK(config.tabu_frac == 0.40);
    CHECK(config.fix_frac_prune == 0.42);
    CHECK(config.fix_frac_keep == 0.35);
}

TEST_CASE("missing density is a named error") {
    const auto path = write_tmp_config("icbs_nodens.cfg", "num_epochs = 3\n");
    CHECK_THROWS_WITH_AS(parse_config(path, {}), doctest::Contains("density"),
                         std::invalid_argument);
}

TEST_CASE("out-of-range tabu_frac is rejected by name") {
    CHECK_THROWS_WITH_AS(parse_config_overrides({{"density", "0.5"}, {"tabu_frac", "1.5"}}),
                         doctest::Contains("tabu_frac"), std::invalid_argument);
}

TEST_CASE("unknown keys are rejected by name") {
    CHECK_THROWS_WITH_AS(parse_config_overrides({{"density", "0.5"}, {"blocksize", "8"}}),
                         doctest::Contains("blocksize"), std::invalid_argument);
}

TEST_CASE("flag overrides beat file values") {
    const auto path = write_tmp_config("icbs_override.cfg",
                                       "density = 0.3\nblock_size = 512\nseed = 7\n");
    const RunConfig config = parse_config(path, {{"block_size", "1024"}});
    CHECK(config.block_size == 1024);
    CHECK(config.density == 0.3);
    CHECK(config.seed == 7);
}

TEST_CASE("method values carry an optional scope in parentheses") {
    const RunConfig config = parse_config_overrides({{"density", "0.2"},
                                                     {"init_method", "Wanda (per output)"},
                                                     {"selection_method", "random"}});
    CHECK(config.init_method == ScoreMethod::kWanda);
    CHECK(config.init_scope == ScoreScope::kPerOutput);
    CHECK(config.selection_method == ScoreMethod::kRandom);
    CHECK(config.selection_scope == ScoreScope::kPerLayer);
}

TEST_CASE("malformed numbers and lines are named errors") {
    CHECK_THROWS_AS(parse_config_overrides({{"density", "half"}}), std::invalid_argument);
    const auto path = write_tmp_config("icbs_badline.cfg", "density 0.5\n");
    CHECK_THROWS_WITH_AS(parse_config(path, {}), doctest::Contains("line 1"),
                         std::invalid_argument);
    CHECK_THROWS_AS(parse_config("/nonexistent/icbs.cfg", {}), std::invalid_argument);
}

TEST_CASE("split_override splits at the first equals sign") {
    const auto [key, value] = split_override("init_method=magnitude (per layer)");
    CHECK(key == "init_method");
    CHECK(value == "magnitude (per layer)");
    CHECK_THROWS_AS(split_override("no-equals"), std::invalid_argument);
}

TEST_CASE("config echo carries the verbatim parameter names") {
    const RunConfig config = parse_config_overrides({{"density", "0.1"}});
    const auto echo = config_to_json(config);
    CHECK(echo.at("density") == 0.1);
    CHECK(echo.at("num_steps") == 300);
    CHECK(echo.at("init_method") == "magnitude (per_layer)");
    CHECK(echo.at("grad_multiplier") == 0.75);
    CHECK(echo.contains("fix_frac_keep"));
}
