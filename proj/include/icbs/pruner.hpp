#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "icbs/config.hpp"
#include "icbs/dataset.hpp"
#include "icbs/mlp.hpp"
#include "icbs/prune_state.hpp"

namespace icbs {

struct EpochRecord {
    int epoch = 0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    int steps_executed = 0;
    int steps_skipped = 0;
    double wall_seconds = 0.0;
};

// Per-step audit hook: fires after every step (including skipped ones) with
// the live state, so tests can verify the invariants mid-run.
struct StepAudit {
    int epoch = 0;
    int step = 0;  // 1-based within the epoch
    bool skipped = false;
    const PruneState& state;
    const Mlp& model;
};

struct RunOptions {
    int threads = 1;
    bool measure_time = true;  // false zeroes wall-time fields (reproducible artifacts)
    std::string dump_dir;      // when set, one QCBO dump file per executed step
    std::function<void(const StepAudit&)> observer;
};

struct RunResult {
    std::vector<EpochRecord> records;
    PruneState state;
    double fraction_weights_optimized = 0.0;  // min(1, total_steps * n / N)
    std::int64_t steps_total = 0;
    std::int64_t steps_skipped = 0;
    int layer_weight_clamps = 0;
    double total_wall_seconds = 0.0;
};

// The full iterative loop: initial pruning by init_method, weight fixing,
// then num_epochs x num_steps block-optimization steps with an end-of-epoch
// evaluation. The model is pruned in place. Skipped steps (exhausted
// candidate pools) consume the step counter but never fail the run.
RunResult run_icbs(Mlp& model, const Dataset& train, const Dataset& valid,
                   const RunConfig& config, const RunOptions& options = {});

// Tensor choice weighted by log10(weight count); sizes below 10 clamp to
// weight 1 and are tallied in clamp_count.
int pick_layer(const std::vector<std::int64_t>& layer_sizes, Rng& rng,
               int* clamp_count = nullptr);

// One-shot baseline: score once, prune the ceil((1-d)N) lowest, evaluate.
RunResult baseline_prune(Mlp& model, const Dataset& train, const Dataset& valid,
                         const RunConfig& config, const RunOptions& options = {});

// Run-log (JSON lines): one epoch record per line plus a trailing summary
// with the config echo and total wall time.
void write_run_log(std::ostream& out, const std::string& method_label, const RunConfig& config,
                   const RunResult& result, bool zero_wall);

// CSV rows (method, scope, density, epoch, loss, accuracy, seed) harvested
// from run logs, in input order.
void write_report_csv(std::ostream& out, const std::vector<std::string>& log_paths);

}  // namespace icbs
