#include "icbs/pruner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "icbs/qcbo.hpp"
#include "icbs/scoring.hpp"
#include "icbs/solver.hpp"

namespace icbs {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool needs_calibration(ScoreMethod method) {
    return method == ScoreMethod::kGradient || method == ScoreMethod::kWanda;
}

Batch calibration_batch(const Dataset& train, const RunConfig& config, Rng& rng) {
    const std::int64_t size = std::min<std::int64_t>(config.batch_size_calibration, train.size());
    return sample_batch(train, size, rng);
}

}  // namespace

int pick_layer(const std::vector<std::int64_t>& layer_sizes, Rng& rng, int* clamp_count) {
    if (layer_sizes.empty()) throw std::invalid_argument("pick_layer: no layers");
    std::vector<double> weights(layer_sizes.size());
    double total = 0.0;
    for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
        double w;
        if (layer_sizes[i] < 10) {
            w = 1.0;  // log floor
            if (clamp_count != nullptr) ++*clamp_count;
        } else {
            w = std::log10(static_cast<double>(layer_sizes[i]));
        }
        weights[i] = w;
        total += w;
    }
    const double draw = rng.next_double() * total;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        cumulative += weights[i];
        if (draw < cumulative) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

RunResult run_icbs(Mlp& model, const Dataset& train, const Dataset& valid,
                   const RunConfig& config, const RunOptions& options) {
    validate_config(config);
    if (!model.has_snapshot()) throw std::logic_error("run_icbs: model has no w0 snapshot");
    const auto run_start = Clock::now();

    Rng rng_calib(derive_seed(config.seed, stream::kCalibrationBatch));
    Rng rng_init_scores(derive_seed(config.seed, stream::kInitScores));
    Rng rng_batches(derive_seed(config.seed, stream::kPruningBatches));
    Rng rng_layer(derive_seed(config.seed, stream::kLayerPick));
    Rng rng_selection(derive_seed(config.seed, stream::kSelectionScores));

    Batch init_calib;
    if (needs_calibration(config.init_method))
        init_calib = calibration_batch(train, config, rng_calib);
    const ScoreVector init_scores = score(config.init_method, config.init_scope, model,
                                          init_calib, rng_init_scores, options.threads);

    RunResult result;
    result.state = init_prune(model, init_scores, config.density, config.tabu_frac);
    fix_weights(result.state, init_scores, config.fix_frac_prune, config.fix_frac_keep);

    if (!options.dump_dir.empty()) std::filesystem::create_directories(options.dump_dir);

    std::vector<std::int64_t> layer_sizes;
    layer_sizes.reserve(model.prunable().size());
    for (int t : model.prunable()) layer_sizes.push_back(model.tensor_weight_count(t));

    const std::int64_t batch_size =
        std::min<std::int64_t>(config.batch_size_pruning, train.size());
    const std::int64_t block_k = (static_cast<std::int64_t>(config.block_size) + 1) / 2;
    std::int64_t global_step = 0;

    for (int epoch = 1; epoch <= config.num_epochs; ++epoch) {
        const auto epoch_start = Clock::now();
        int executed = 0;
        int skipped = 0;
        for (int step = 1; step <= config.num_steps; ++step, ++global_step) {
            const Batch batch = sample_batch(train, batch_size, rng_batches);
            const int layer_pos = pick_layer(layer_sizes, rng_layer, &result.layer_weight_clamps);
            const int tensor = model.prunable()[static_cast<std::size_t>(layer_pos)];

            const ScoreVector selection =
                score_layer(config.selection_method, config.selection_scope, model, tensor,
                            batch, rng_selection, options.threads);
            // Scarce-side recovery: at extreme densities one side's free pool
            // can sit entirely inside the tabu list, which would stall the
            // layer for the rest of the run; releasing the oldest entries
            // keeps the FIFO exclusion window as large as the pool allows.
            tabu_make_room(result.state, model, tensor, block_k,
                           config.block_size - block_k);
            const std::vector<std::int64_t> block_indices =
                select_block(result.state, model, selection, tensor, config.block_size, block_k);
            if (block_indices.empty()) {
                ++skipped;
                if (options.observer)
                    options.observer(StepAudit{epoch, step, true, result.state, model});
                continue;
            }

            const Block block =
                assemble_block(model, result.state, block_indices, batch, options.threads);
            const QcboProblem problem =
                build_qcbo(block, config.grad_multiplier, config.ridge_multiplier);
            if (!options.dump_dir.empty())
                write_problem_file(options.dump_dir + "/step_" + std::to_string(global_step) +
                                       ".qcbo",
                                   problem);

            SaSchedule schedule;
            schedule.sweeps = config.sa_sweeps;
            schedule.t_final = config.sa_t_final;
            schedule.restarts = config.num_restarts;
            schedule.seed = derive_seed(config.seed, stream::kSolver,
                                        static_cast<std::uint64_t>(global_step));
            const SolveResult solution = solve_csa(problem, schedule, options.threads);

            apply_solution(result.state, model, block_indices, solution.x);
            tabu_push(result.state, model, tensor, block_indices);
            ++executed;
            if (options.observer)
                options.observer(StepAudit{epoch, step, false, result.state, model});
        }

        const EvalResult eval =
            evaluate(model, valid, config.batch_size_evaluation, options.threads);
        EpochRecord record;
        record.epoch = epoch;
        record.val_loss = eval.loss;
        record.val_accuracy = eval.accuracy;
        record.steps_executed = executed;
        record.steps_skipped = skipped;
        record.wall_seconds = options.measure_time ? seconds_since(epoch_start) : 0.0;
        result.records.push_back(record);
        result.steps_total += config.num_steps;
        result.steps_skipped += skipped;
    }

    const double planned = static_cast<double>(config.num_epochs) *
                           static_cast<double>(config.num_steps) *
                           static_cast<double>(config.block_size);
    result.fraction_weights_optimized =
        std::min(1.0, planned / static_cast<double>(model.num_prunable()));
    result.total_wall_seconds = options.measure_time ? seconds_since(run_start) : 0.0;
    return result;
}

RunResult baseline_prune(Mlp& model, const Dataset& train, const Dataset& valid,
                         const RunConfig& config, const RunOptions& options) {
    validate_config(config);
    if (!model.has_snapshot()) throw std::logic_error("baseline_prune: model has no w0 snapshot");
    const auto run_start = Clock::now();

    Rng rng_calib(derive_seed(config.seed, stream::kCalibrationBatch));
    Rng rng_scores(derive_seed(config.seed, stream::kInitScores));
    Batch calib;
    if (needs_calibration(config.init_method))
        calib = calibration_batch(train, config, rng_calib);
    const ScoreVector scores =
        score(config.init_method, config.init_scope, model, calib, rng_scores, options.threads);

    RunResult result;
    result.state = init_prune(model, scores, config.density, config.tabu_frac);

    const EvalResult eval = evaluate(model, valid, config.batch_size_evaluation, options.threads);
    EpochRecord record;
    record.epoch = 0;
    record.val_loss = eval.loss;
    record.val_accuracy = eval.accuracy;
    record.wall_seconds = options.measure_time ? seconds_since(run_start) : 0.0;
    result.records.push_back(record);
    result.fraction_weights_optimized = 0.0;
    result.total_wall_seconds = record.wall_seconds;
    return result;
}

void write_run_log(std::ostream& out, const std::string& method_label, const RunConfig& config,
                   const RunResult& result, bool zero_wall) {
    for (const EpochRecord& record : result.records) {
        nlohmann::ordered_json row;
        row["record"] = "epoch";
        row["epoch"] = record.epoch;
        row["val_loss"] = record.val_loss;
        row["val_accuracy"] = record.val_accuracy;
        row["steps_executed"] = record.steps_executed;
        row["steps_skipped"] = record.steps_skipped;
        row["wall_seconds"] = zero_wall ? 0.0 : record.wall_seconds;
        out << row.dump() << '\n';
    }
    nlohmann::ordered_json summary;
    summary["record"] = "summary";
    summary["method"] = method_label;
    summary["scope"] = to_string(config.init_scope);
    summary["density"] = config.density;
    summary["seed"] = config.seed;
    summary["fraction_weights_optimized"] = result.fraction_weights_optimized;
    summary["steps_total"] = result.steps_total;
    summary["steps_skipped"] = result.steps_skipped;
    summary["layer_weight_clamps"] = result.layer_weight_clamps;
    if (!result.records.empty()) {
        summary["final_val_loss"] = result.records.back().val_loss;
        summary["final_val_accuracy"] = result.records.back().val_accuracy;
    }
    summary["total_wall_seconds"] = zero_wall ? 0.0 : result.total_wall_seconds;
    summary["config"] = config_to_json(config);
    out << summary.dump() << '\n';
}

void write_report_csv(std::ostream& out, const std::vector<std::string>& log_paths) {
    out << "method,scope,density,epoch,loss,accuracy,seed\n";
    for (const std::string& path : log_paths) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("report: cannot open run log " + path);
        std::vector<nlohmann::ordered_json> epochs;
        nlohmann::ordered_json summary;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::ordered_json row = nlohmann::ordered_json::parse(line);
            if (row.value("record", "") == "epoch")
                epochs.push_back(std::move(row));
            else if (row.value("record", "") == "summary")
                summary = std::move(row);
        }
        if (summary.is_null())
            throw std::runtime_error("report: run log " + path + " lacks a summary record");
        std::ostringstream prefix;
        prefix << summary.at("method").get<std::string>() << ','
               << summary.at("scope").get<std::string>() << ','
               << summary.at("density").dump() << ',';
        for (const auto& row : epochs)
            out << prefix.str() << row.at("epoch") << ',' << row.at("val_loss").dump() << ','
                << row.at("val_accuracy").dump() << ',' << summary.at("seed").dump() << '\n';
    }
}

}  // namespace icbs
