#include "icbs/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "icbs/checkpoint.hpp"
#include "icbs/config.hpp"
#include "icbs/pruner.hpp"
#include "icbs/qcbo.hpp"
#include "icbs/solver.hpp"

namespace icbs {

namespace {

namespace fs = std::filesystem;

struct DataFlags {
    std::string images;
    std::string labels;
    bool synthetic = false;
    std::uint64_t synthetic_seed = 0;
    std::int64_t synthetic_samples = 60000;
    std::int64_t synthetic_valid = 10000;
    int synthetic_classes = 10;
    int synthetic_dim = 784;
    double synthetic_sigma = 0.3;
    std::string valid_images;
    std::string valid_labels;
};

void add_data_flags(CLI::App* cmd, DataFlags& flags, bool with_valid) {
    cmd->add_option("--images", flags.images, "IDX image file (training split)");
    cmd->add_option("--labels", flags.labels, "IDX label file (training split)");
    cmd->add_flag("--synthetic", flags.synthetic, "use the synthetic blob dataset");
    cmd->add_option("--synthetic-seed", flags.synthetic_seed, "seed for the synthetic dataset");
    cmd->add_option("--synthetic-samples", flags.synthetic_samples, "synthetic training samples");
    cmd->add_option("--synthetic-valid", flags.synthetic_valid, "synthetic validation samples");
    cmd->add_option("--synthetic-classes", flags.synthetic_classes, "synthetic class count");
    cmd->add_option("--synthetic-dim", flags.synthetic_dim, "synthetic feature dimension");
    cmd->add_option("--synthetic-sigma", flags.synthetic_sigma, "synthetic blob sigma");
    if (with_valid) {
        cmd->add_option("--valid-images", flags.valid_images, "IDX image file (validation split)");
        cmd->add_option("--valid-labels", flags.valid_labels, "IDX label file (validation split)");
    }
}

Dataset load_train_split(const DataFlags& flags) {
    if (flags.synthetic)
        return synthetic_blobs(derive_seed(flags.synthetic_seed, stream::kSyntheticTrain),
                               flags.synthetic_samples, flags.synthetic_classes,
                               flags.synthetic_dim, flags.synthetic_sigma, "train");
    if (flags.images.empty() || flags.labels.empty())
        throw std::invalid_argument("no dataset: pass --images/--labels or --synthetic");
    return load_idx(flags.images, flags.labels, "train");
}

Dataset load_valid_split(const DataFlags& flags) {
    if (flags.synthetic)
        return synthetic_blobs(derive_seed(flags.synthetic_seed, stream::kSyntheticValid),
                               flags.synthetic_valid, flags.synthetic_classes,
                               flags.synthetic_dim, flags.synthetic_sigma, "valid");
    if (flags.valid_images.empty() || flags.valid_labels.empty())
        throw std::invalid_argument(
            "no validation dataset: pass --valid-images/--valid-labels or --synthetic");
    return load_idx(flags.valid_images, flags.valid_labels, "valid");
}

RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& set_flags, bool seed_given,
                         std::uint64_t seed) {
    std::vector<std::pair<std::string, std::string>> overrides;
    overrides.reserve(set_flags.size() + 1);
    for (const std::string& flag : set_flags) overrides.push_back(split_override(flag));
    if (seed_given) overrides.emplace_back("seed", std::to_string(seed));
    if (config_path.empty()) return parse_config_overrides(overrides);
    return parse_config(config_path, overrides);
}

int do_train(const DataFlags& data, const std::string& out_dir, const std::string& hidden_spec,
             int epochs, double lr, std::int64_t batch_size, std::uint64_t seed,
             int plateau_patience, double plateau_tol, int threads) {
    const Dataset train = load_train_split(data);

    std::vector<int> dims{static_cast<int>(train.dim())};
    std::stringstream hidden(hidden_spec);
    std::string token;
    while (std::getline(hidden, token, ','))
        if (!token.empty()) dims.push_back(std::stoi(token));
    dims.push_back(train.num_classes());

    Mlp model = Mlp::feedforward(dims, seed);
    SgdOptions options;
    options.epochs = epochs;
    options.lr = lr;
    options.batch_size = batch_size;
    options.seed = seed;
    options.plateau_patience = plateau_patience;
    options.plateau_tol = plateau_tol;
    options.threads = threads;
    const SgdSummary summary = train_sgd(model, train, options);

    TrainingMeta meta;
    meta.seed = seed;
    meta.epochs = summary.epochs_run;
    meta.lr = lr;
    meta.batch_size = batch_size;
    meta.final_train_loss = summary.final_train_loss;
    meta.train_samples = train.size();
    meta.dataset = data.synthetic ? "synthetic" : data.images;
    save_checkpoint(out_dir, model, meta);
    std::cout << "trained " << summary.epochs_run << " epochs, final train loss "
              << summary.final_train_loss << ", checkpoint at " << out_dir << "\n";
    return 0;
}

int do_prune(bool icbs, const DataFlags& data, const std::string& checkpoint_dir,
             const std::string& config_path, const std::vector<std::string>& set_flags,
             bool seed_given, std::uint64_t seed, const std::string& out_dir, bool sequential,
             int threads, const std::string& dump_dir) {
    const RunConfig config = resolve_config(config_path, set_flags, seed_given, seed);
    if (fs::weakly_canonical(out_dir) == fs::weakly_canonical(checkpoint_dir))
        throw std::invalid_argument("refusing to overwrite the input checkpoint in place");
    LoadedCheckpoint loaded = load_checkpoint(checkpoint_dir);
    // A pruned checkpoint has lost the trained values of its zeroed weights;
    // pruning has to restart from the trained model.
    if (loaded.mask.has_value())
        throw std::invalid_argument("checkpoint " + checkpoint_dir +
                                    " is already pruned; prune from the trained checkpoint");
    const Dataset train = load_train_split(data);
    const Dataset valid = load_valid_split(data);

    RunOptions options;
    options.threads = sequential ? 1 : threads;
    options.measure_time = !sequential;
    options.dump_dir = dump_dir;

    const std::string method_label =
        icbs ? "icbs" : to_string(config.init_method);
    RunResult result = icbs ? run_icbs(loaded.model, train, valid, config, options)
                            : baseline_prune(loaded.model, train, valid, config, options);

    fs::create_directories(out_dir);
    OrderedJson pruning_info;
    pruning_info["method"] = method_label;
    pruning_info["source_checkpoint"] = checkpoint_dir;
    pruning_info["config"] = config_to_json(config);
    save_checkpoint(out_dir, loaded.model, loaded.meta, &result.state.mask, &pruning_info);

    std::ofstream log(fs::path(out_dir) / "run.log", std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write run log in " + out_dir);
    write_run_log(log, method_label, config, result, /*zero_wall=*/sequential);

    if (result.records.empty()) {
        std::cout << method_label << " density " << config.density << ": no epochs run\n";
    } else {
        const EpochRecord& last = result.records.back();
        std::cout << method_label << " density " << config.density << ": val_loss "
                  << last.val_loss << " val_accuracy " << last.val_accuracy << " (skipped "
                  << result.steps_skipped << "/" << result.steps_total << " steps)\n";
    }
    return 0;
}

int do_eval(const DataFlags& data, const std::string& checkpoint_dir,
            std::int64_t batch_size_evaluation, int threads) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint_dir);
    const Dataset valid = load_valid_split(data);
    const EvalResult eval = evaluate(loaded.model, valid, batch_size_evaluation, threads);
    std::printf("%.17g %.17g\n", eval.loss, eval.accuracy);
    return 0;
}

int do_report(const std::string& out_path, const std::vector<std::string>& logs) {
    std::ostringstream csv;
    write_report_csv(csv, logs);  // parse everything before touching the output
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write report to " + out_path);
    out << csv.str();
    return 0;
}

int do_solve(const std::string& problem_path, int restarts, int sweeps, double t_final,
             std::uint64_t seed, int threads) {
    const QcboProblem problem = read_problem_file(problem_path);
    SaSchedule schedule;
    schedule.restarts = restarts;
    schedule.sweeps = sweeps;
    schedule.t_final = t_final;
    schedule.seed = seed;
    const SolveResult result = solve_csa(problem, schedule, threads);
    std::string bits(result.x.size(), '0');
    for (std::size_t i = 0; i < result.x.size(); ++i)
        if (result.x[i]) bits[i] = '1';
    std::printf("%s %.17g\n", bits.c_str(), result.objective);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"iterative Combinatorial Brain Surgeon pruning toolkit"};
    app.require_subcommand(1);
    const int default_threads =
        static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    // train
    auto* train = app.add_subcommand("train", "train a feedforward classifier");
    DataFlags train_data;
    add_data_flags(train, train_data, /*with_valid=*/false);
    std::string train_out;
    std::string hidden = "512,512";
    int epochs = 100;
    double lr = 0.01;
    std::int64_t batch_size = 100;
    std::uint64_t train_seed = 0;
    int plateau_patience = 0;
    double plateau_tol = 1e-3;
    int train_threads = default_threads;
    train->add_option("--out", train_out, "output checkpoint directory")->required();
    train->add_option("--hidden", hidden, "comma-separated hidden layer sizes");
    train->add_option("--epochs", epochs, "SGD epochs");
    train->add_option("--lr", lr, "SGD learning rate");
    train->add_option("--batch-size", batch_size, "SGD minibatch size");
    train->add_option("--seed", train_seed, "initialization/shuffling seed");
    train->add_option("--plateau-patience", plateau_patience,
                      "stop after this many epochs without relative improvement (0 = off)");
    train->add_option("--plateau-tol", plateau_tol, "relative improvement threshold");
    train->add_option("--threads", train_threads, "worker threads");

    // prune-baseline / prune-icbs share flag structure
    struct PruneFlags {
        DataFlags data;
        std::string checkpoint;
        std::string config_path;
        std::vector<std::string> set_flags;
        std::uint64_t seed = 0;
        std::string out;
        bool sequential = false;
        int threads = 0;
        std::string dump_dir;
        CLI::Option* seed_opt = nullptr;
    };
    auto add_prune_flags = [&](CLI::App* cmd, PruneFlags& flags) {
        add_data_flags(cmd, flags.data, /*with_valid=*/true);
        cmd->add_option("--checkpoint", flags.checkpoint, "trained checkpoint directory")
            ->required();
        cmd->add_option("--config", flags.config_path, "key=value config file");
        cmd->add_option("--set", flags.set_flags, "config override key=value (repeatable)");
        flags.seed_opt = cmd->add_option("--seed", flags.seed, "run seed (overrides config)");
        cmd->add_option("--out", flags.out, "output directory")->required();
        cmd->add_flag("--sequential", flags.sequential,
                      "single-threaded, zeroed wall times: byte-reproducible artifacts");
        flags.threads = default_threads;
        cmd->add_option("--threads", flags.threads, "worker threads");
        cmd->add_option("--dump-problems", flags.dump_dir,
                        "directory for per-step QCBO dumps (prune-icbs only)");
    };
    auto* baseline = app.add_subcommand("prune-baseline", "one-shot weight-scoring baseline");
    PruneFlags baseline_flags;
    add_prune_flags(baseline, baseline_flags);
    auto* icbs = app.add_subcommand("prune-icbs", "iterative Combinatorial Brain Surgeon");
    PruneFlags icbs_flags;
    add_prune_flags(icbs, icbs_flags);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    DataFlags eval_data;
    add_data_flags(eval_cmd, eval_data, /*with_valid=*/true);
    std::string eval_checkpoint;
    std::int64_t eval_batch = 4096;
    int eval_threads = default_threads;
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint directory")->required();
    eval_cmd->add_option("--batch-size-evaluation", eval_batch, "evaluation batch size");
    eval_cmd->add_option("--threads", eval_threads, "worker threads");

    // report
    auto* report = app.add_subcommand("report", "emit a CSV across run logs");
    std::string report_out;
    std::vector<std::string> report_logs;
    report->add_option("--out", report_out, "CSV output path")->required();
    report->add_option("logs", report_logs, "run logs to harvest")->required();

    // solve
    auto* solve = app.add_subcommand("solve", "solve a dumped QCBO problem");
    std::string solve_problem;
    int solve_restarts = 10;
    int solve_sweeps = 500;
    double solve_t_final = 1e-3;
    std::uint64_t solve_seed = 0;
    int solve_threads = default_threads;
    solve->add_option("--problem", solve_problem, "problem dump file")->required();
    solve->add_option("--restarts", solve_restarts, "independent restarts");
    solve->add_option("--sweeps", solve_sweeps, "sweeps per restart");
    solve->add_option("--t-final", solve_t_final, "final temperature");
    solve->add_option("--seed", solve_seed, "solver seed");
    solve->add_option("--threads", solve_threads, "worker threads");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("icbs");
    for (const std::string& arg : args) argv.push_back(arg.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }

    try {
        if (train->parsed())
            return do_train(train_data, train_out, hidden, epochs, lr, batch_size, train_seed,
                            plateau_patience, plateau_tol, train_threads);
        if (baseline->parsed())
            return do_prune(false, baseline_flags.data, baseline_flags.checkpoint,
                            baseline_flags.config_path, baseline_flags.set_flags,
                            baseline_flags.seed_opt->count() > 0, baseline_flags.seed,
                            baseline_flags.out, baseline_flags.sequential,
                            baseline_flags.threads, "");
        if (icbs->parsed())
            return do_prune(true, icbs_flags.data, icbs_flags.checkpoint, icbs_flags.config_path,
                            icbs_flags.set_flags, icbs_flags.seed_opt->count() > 0,
                            icbs_flags.seed, icbs_flags.out, icbs_flags.sequential,
                            icbs_flags.threads, icbs_flags.dump_dir);
        if (eval_cmd->parsed()) return do_eval(eval_data, eval_checkpoint, eval_batch, eval_threads);
        if (report->parsed()) return do_report(report_out, report_logs);
        if (solve->parsed())
            return do_solve(solve_problem, solve_restarts, solve_sweeps, solve_t_final, solve_seed,
                            solve_threads);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}

}  // namespace icbs
