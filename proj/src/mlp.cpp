#include "icbs/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "icbs/parallel.hpp"
#include "icbs/rng.hpp"

namespace icbs {

namespace {

// Sample-shard width for all batched passes. Shard boundaries are fixed, so
// runs are bit-identical for any thread count.
constexpr std::int64_t kSampleShard = 512;

// Evaluation always runs in blocks of this many samples regardless of the
// requested eval_batch_size; Eigen's GEMM is not bitwise invariant under row
// partitioning, and the evaluation contract demands results that do not
// depend on the batching knob.
constexpr std::int64_t kEvalBlock = 1024;

int shard_count(std::int64_t count) {
    return static_cast<int>((count + kSampleShard - 1) / kSampleShard);
}

// Forward pass keeping the input of every layer; acts[0] is the feature
// block, acts[l + 1] the post-activation output of layer l (so acts.back()
// holds the logits).
std::vector<Eigen::MatrixXd> forward_acts(const Mlp& model,
                                          const Eigen::Ref<const Eigen::MatrixXd>& features,
                                          int threads) {
    const std::int64_t m = features.rows();
    std::vector<Eigen::MatrixXd> acts(static_cast<std::size_t>(model.num_layers()) + 1);
    acts[0] = features;
    for (int l = 0; l < model.num_layers(); ++l)
        acts[static_cast<std::size_t>(l) + 1].resize(m, model.layer(l).weights.rows());

    parallel_shards(m, kSampleShard, threads, [&](int, std::int64_t begin, std::int64_t end) {
        const std::int64_t len = end - begin;
        for (int l = 0; l < model.num_layers(); ++l) {
            const DenseLayer& layer = model.layer(l);
            auto out = acts[static_cast<std::size_t>(l) + 1].middleRows(begin, len);
            out.noalias() =
                acts[static_cast<std::size_t>(l)].middleRows(begin, len) * layer.weights.transpose();
            out.rowwise() += layer.bias.transpose();
            if (layer.relu) out = out.cwiseMax(0.0);
        }
    });
    return acts;
}

// Per-sample dLoss_s/dZ_l for every layer (loss of each sample alone, not the
// batch mean). The ReLU mask of layer l is recovered from its own output.
std::vector<Eigen::MatrixXd> backward_deltas(const Mlp& model,
                                             const std::vector<Eigen::MatrixXd>& acts,
                                             const std::vector<int>& labels, int threads) {
    const int num_layers = model.num_layers();
    const std::int64_t m = acts[0].rows();
    std::vector<Eigen::MatrixXd> deltas(static_cast<std::size_t>(num_layers));
    for (int l = 0; l < num_layers; ++l)
        deltas[static_cast<std::size_t>(l)].resize(m, model.layer(l).weights.rows());

    parallel_shards(m, kSampleShard, threads, [&](int, std::int64_t begin, std::int64_t end) {
        const std::int64_t len = end - begin;
        const auto logits = acts.back().middleRows(begin, len);
        auto top = deltas[static_cast<std::size_t>(num_layers) - 1].middleRows(begin, len);
        // softmax(logits) - onehot(label), row by row, max-shifted.
        top = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp();
        const Eigen::VectorXd row_sums = top.rowwise().sum();
        top.array().colwise() /= row_sums.array();
        for (std::int64_t s = 0; s < len; ++s)
            top(s, labels[static_cast<std::size_t>(begin + s)]) -= 1.0;

        for (int l = num_layers - 2; l >= 0; --l) {
            auto cur = deltas[static_cast<std::size_t>(l)].middleRows(begin, len);
            cur.noalias() = deltas[static_cast<std::size_t>(l) + 1].middleRows(begin, len) *
                            model.layer(l + 1).weights;
            if (model.layer(l).relu) {
                const auto outputs = acts[static_cast<std::size_t>(l) + 1].middleRows(begin, len);
                cur.array() *= (outputs.array() > 0.0).cast<double>();
            }
        }
    });
    return deltas;
}

Eigen::VectorXd loss_per_sample(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size())
        throw std::invalid_argument("loss: logits/labels size mismatch");
    Eigen::VectorXd out(logits.rows());
    for (Eigen::Index s = 0; s < logits.rows(); ++s) {
        const auto row = logits.row(s);
        const int label = labels[static_cast<std::size_t>(s)];
        if (label < 0 || label >= logits.cols())
            throw std::invalid_argument("loss: label out of range");
        const double shift = row.maxCoeff();
        const double lse = std::log((row.array() - shift).exp().sum()) + shift;
        out[s] = lse - row[label];
    }
    return out;
}

// (1/m) delta^T input with a fixed-order sharded reduction.
Eigen::MatrixXd weight_grad_mean(const Eigen::MatrixXd& delta, const Eigen::MatrixXd& input,
                                 int threads) {
    const std::int64_t m = delta.rows();
    std::vector<Eigen::MatrixXd> partials(static_cast<std::size_t>(shard_count(m)));
    parallel_shards(m, kSampleShard, threads, [&](int s, std::int64_t begin, std::int64_t end) {
        const std::int64_t len = end - begin;
        partials[static_cast<std::size_t>(s)].noalias() =
            delta.middleRows(begin, len).transpose() * input.middleRows(begin, len);
    });
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(delta.cols(), input.cols());
    for (const auto& partial : partials) grad += partial;
    return grad / static_cast<double>(m);
}

void check_batch(const Mlp& model, const Batch& batch) {
    if (batch.features.cols() != model.input_dim())
        throw std::invalid_argument("forward: batch width " + std::to_string(batch.features.cols()) +
                                    " does not match model input width " +
                                    std::to_string(model.input_dim()));
    if (static_cast<std::size_t>(batch.features.rows()) != batch.labels.size() &&
        !batch.labels.empty())
        throw std::invalid_argument("forward: feature/label count mismatch");
}

struct Workspace {
    std::vector<Eigen::MatrixXd> acts;
    std::vector<Eigen::MatrixXd> deltas;
};

Workspace make_workspace(const Mlp& model, const Batch& batch, int threads) {
    check_batch(model, batch);
    if (static_cast<std::size_t>(batch.features.rows()) != batch.labels.size())
        throw std::invalid_argument("gradients: batch must carry one label per sample");
    Workspace ws;
    ws.acts = forward_acts(model, batch.features, threads);
    ws.deltas = backward_deltas(model, ws.acts, batch.labels, threads);
    return ws;
}

}  // namespace

Mlp Mlp::feedforward(const std::vector<int>& dims, std::uint64_t init_seed) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
    for (int d : dims)
        if (d < 1) throw std::invalid_argument("Mlp: all layer dims must be positive");

    Rng rng(derive_seed(init_seed, stream::kModelInit));
    Mlp model;
    const int num_layers = static_cast<int>(dims.size()) - 1;
    model.layers_.resize(static_cast<std::size_t>(num_layers));
    for (int l = 0; l < num_layers; ++l) {
        DenseLayer& layer = model.layers_[static_cast<std::size_t>(l)];
        const int fan_in = dims[static_cast<std::size_t>(l)];
        const int fan_out = dims[static_cast<std::size_t>(l) + 1];
        layer.weights.resize(fan_out, fan_in);
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        layer.relu = (l + 1 < num_layers);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c)
                layer.weights(r, c) = (2.0 * rng.next_double() - 1.0) * limit;
    }
    model.prunable_.resize(static_cast<std::size_t>(num_layers));
    std::iota(model.prunable_.begin(), model.prunable_.end(), 0);
    model.rebuild_index();
    return model;
}

Mlp Mlp::from_layers(std::vector<DenseLayer> layers, std::vector<int> prunable) {
    if (layers.empty()) throw std::invalid_argument("Mlp: no layers");
    Mlp model;
    model.layers_ = std::move(layers);
    model.prunable_ = std::move(prunable);
    for (int t : model.prunable_)
        if (t < 0 || t >= model.num_layers())
            throw std::invalid_argument("Mlp: prunable tensor id out of range");
    model.rebuild_index();
    return model;
}

void Mlp::rebuild_index() {
    offsets_.assign(prunable_.size() + 1, 0);
    for (std::size_t i = 0; i < prunable_.size(); ++i) {
        const auto& w = layers_[static_cast<std::size_t>(prunable_[i])].weights;
        offsets_[i + 1] = offsets_[i] + static_cast<std::int64_t>(w.size());
    }
    total_prunable_ = offsets_.back();
    w0_.clear();
}

std::int64_t Mlp::tensor_offset(int tensor) const {
    for (std::size_t i = 0; i < prunable_.size(); ++i)
        if (prunable_[i] == tensor) return offsets_[i];
    throw std::out_of_range("Mlp: tensor not prunable");
}

std::int64_t Mlp::tensor_weight_count(int tensor) const {
    return static_cast<std::int64_t>(layers_[static_cast<std::size_t>(tensor)].weights.size());
}

WeightRef Mlp::locate(std::int64_t global_index) const {
    if (global_index < 0 || global_index >= total_prunable_)
        throw std::out_of_range("Mlp: weight index " + std::to_string(global_index) +
                                " outside [0, " + std::to_string(total_prunable_) + ")");
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), global_index);
    const std::size_t slot = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    const int tensor = prunable_[slot];
    const std::int64_t local = global_index - offsets_[slot];
    const int cols = static_cast<int>(layers_[static_cast<std::size_t>(tensor)].weights.cols());
    return WeightRef{tensor, static_cast<int>(local / cols), static_cast<int>(local % cols)};
}

std::int64_t Mlp::global_index(int tensor, int row, int col) const {
    const int cols = static_cast<int>(layers_[static_cast<std::size_t>(tensor)].weights.cols());
    return tensor_offset(tensor) + static_cast<std::int64_t>(row) * cols + col;
}

double Mlp::current_weight(std::int64_t global_index) const {
    const WeightRef ref = locate(global_index);
    return layers_[static_cast<std::size_t>(ref.tensor)].weights(ref.row, ref.col);
}

void Mlp::set_current_weight(std::int64_t global_index, double value) {
    const WeightRef ref = locate(global_index);
    layers_[static_cast<std::size_t>(ref.tensor)].weights(ref.row, ref.col) = value;
}

double Mlp::original_weight(std::int64_t global_index) const {
    if (w0_.empty()) throw std::logic_error("Mlp: no w0 snapshot taken yet");
    return w0_[static_cast<std::size_t>(global_index)];
}

void Mlp::snapshot_original() {
    w0_.resize(static_cast<std::size_t>(total_prunable_));
    std::int64_t g = 0;
    for (int t : prunable_) {
        const auto& w = layers_[static_cast<std::size_t>(t)].weights;
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w0_[static_cast<std::size_t>(g++)] = w(r, c);
    }
}

ForwardResult forward(const Mlp& model, const Batch& batch, bool capture) {
    check_batch(model, batch);
    ForwardResult result;
    auto acts = forward_acts(model, batch.features, 1);
    if (capture) {
        result.activation_sq_mean.reserve(model.prunable().size());
        for (int t : model.prunable())
            result.activation_sq_mean.push_back(
                acts[static_cast<std::size_t>(t)].array().square().colwise().mean());
    }
    result.logits = std::move(acts.back());
    return result;
}

double loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
    return loss_per_sample(logits, labels).sum() / static_cast<double>(logits.rows());
}

Eigen::VectorXd grad_mean(const Mlp& model, const Batch& batch,
                          std::span<const std::int64_t> indices, int threads) {
    const Workspace ws = make_workspace(model, batch, threads);
    const double m = static_cast<double>(batch.size());

    // Count requests per tensor to pick between a full-tensor GEMM and
    // per-index dot products.
    std::vector<std::int64_t> per_tensor(static_cast<std::size_t>(model.num_layers()), 0);
    for (std::int64_t g : indices) ++per_tensor[static_cast<std::size_t>(model.locate(g).tensor)];
    std::vector<Eigen::MatrixXd> full(static_cast<std::size_t>(model.num_layers()));
    for (int t = 0; t < model.num_layers(); ++t) {
        const std::size_t ts = static_cast<std::size_t>(t);
        if (per_tensor[ts] > 0 && per_tensor[ts] >= model.tensor_weight_count(t) / 16)
            full[ts] = weight_grad_mean(ws.deltas[ts], ws.acts[ts], threads);
    }

    Eigen::VectorXd out(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const WeightRef ref = model.locate(indices[i]);
        const std::size_t ts = static_cast<std::size_t>(ref.tensor);
        out[static_cast<Eigen::Index>(i)] =
            full[ts].size() > 0
                ? full[ts](ref.row, ref.col)
                : ws.deltas[ts].col(ref.row).dot(ws.acts[ts].col(ref.col)) / m;
    }
    return out;
}

Eigen::MatrixXd grad_per_sample(const Mlp& model, const Batch& batch,
                                std::span<const std::int64_t> indices, int threads) {
    const Workspace ws = make_workspace(model, batch, threads);
    Eigen::MatrixXd per_sample(batch.size(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const WeightRef ref = model.locate(indices[j]);
        const std::size_t ts = static_cast<std::size_t>(ref.tensor);
        per_sample.col(static_cast<Eigen::Index>(j)) =
            ws.deltas[ts].col(ref.row).cwiseProduct(ws.acts[ts].col(ref.col));
    }
    return per_sample;
}

Eigen::MatrixXd grad_mean_tensor(const Mlp& model, const Batch& batch, int tensor, int threads) {
    if (tensor < 0 || tensor >= model.num_layers())
        throw std::out_of_range("grad_mean_tensor: bad tensor id");
    const Workspace ws = make_workspace(model, batch, threads);
    const std::size_t ts = static_cast<std::size_t>(tensor);
    return weight_grad_mean(ws.deltas[ts], ws.acts[ts], threads);
}

std::vector<Eigen::MatrixXd> grad_mean_all(const Mlp& model, const Batch& batch, int threads) {
    const Workspace ws = make_workspace(model, batch, threads);
    std::vector<Eigen::MatrixXd> out;
    out.reserve(model.prunable().size());
    for (int t : model.prunable()) {
        const std::size_t ts = static_cast<std::size_t>(t);
        out.push_back(weight_grad_mean(ws.deltas[ts], ws.acts[ts], threads));
    }
    return out;
}

SgdSummary train_sgd(Mlp& model, const Dataset& train, const SgdOptions& options) {
    const std::int64_t n = train.size();
    if (n < 1) throw std::invalid_argument("train_sgd: empty dataset");
    if (options.epochs < 0) throw std::invalid_argument("train_sgd: negative epochs");
    const std::int64_t batch_size = std::min<std::int64_t>(std::max<std::int64_t>(1, options.batch_size), n);

    Rng rng(derive_seed(options.seed, stream::kSgdShuffle));
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    SgdSummary summary;
    double best_loss = std::numeric_limits<double>::infinity();
    int stale_epochs = 0;
    Batch batch;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::int64_t i = n - 1; i > 0; --i) {
            const std::int64_t j =
                static_cast<std::int64_t>(rng.bounded(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }

        double loss_sum = 0.0;
        for (std::int64_t start = 0; start < n; start += batch_size) {
            const std::int64_t len = std::min(batch_size, n - start);
            batch.features.resize(len, train.dim());
            batch.labels.resize(static_cast<std::size_t>(len));
            for (std::int64_t i = 0; i < len; ++i) {
                const std::int64_t row = order[static_cast<std::size_t>(start + i)];
                batch.features.row(i) = train.features.row(row);
                batch.labels[static_cast<std::size_t>(i)] =
                    train.labels[static_cast<std::size_t>(row)];
            }

            const Workspace ws = make_workspace(model, batch, options.threads);
            const double batch_loss = loss(ws.acts.back(), batch.labels);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train_sgd: loss diverged (non-finite) at epoch " +
                                         std::to_string(epoch + 1));
            loss_sum += batch_loss * static_cast<double>(len);

            const double m = static_cast<double>(len);
            for (int l = 0; l < model.num_layers(); ++l) {
                const std::size_t ls = static_cast<std::size_t>(l);
                DenseLayer& layer = model.layer(l);
                layer.weights.noalias() -=
                    options.lr * weight_grad_mean(ws.deltas[ls], ws.acts[ls], options.threads);
                layer.bias.noalias() -=
                    (options.lr / m) * ws.deltas[ls].colwise().sum().transpose();
            }
        }

        const double epoch_loss = loss_sum / static_cast<double>(n);
        summary.final_train_loss = epoch_loss;
        summary.epochs_run = epoch + 1;
        if (options.plateau_patience > 0) {
            if (epoch_loss < best_loss * (1.0 - options.plateau_tol)) {
                best_loss = epoch_loss;
                stale_epochs = 0;
            } else if (++stale_epochs >= options.plateau_patience) {
                break;
            }
            best_loss = std::min(best_loss, epoch_loss);
        }
    }

    model.snapshot_original();
    return summary;
}

EvalResult evaluate(const Mlp& model, const Dataset& dataset, std::int64_t eval_batch_size,
                    int threads) {
    if (dataset.size() < 1) throw std::invalid_argument("evaluate: empty dataset");
    if (eval_batch_size < 1) throw std::invalid_argument("evaluate: eval_batch_size must be >= 1");
    const std::int64_t n = dataset.size();

    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (std::int64_t start = 0; start < n; start += kEvalBlock) {
        const std::int64_t len = std::min(kEvalBlock, n - start);
        auto acts = forward_acts(model, dataset.features.middleRows(start, len), threads);
        const Eigen::MatrixXd& logits = acts.back();
        for (std::int64_t s = 0; s < len; ++s) {
            const int label = dataset.labels[static_cast<std::size_t>(start + s)];
            const auto row = logits.row(s);
            const double shift = row.maxCoeff();
            loss_sum += std::log((row.array() - shift).exp().sum()) + shift - row[label];
            int arg = 0;
            for (int c = 1; c < row.size(); ++c)
                if (row[c] > row[arg]) arg = c;  // ties keep the lowest class
            if (arg == label) ++correct;
        }
    }
    return EvalResult{loss_sum / static_cast<double>(n),
                      static_cast<double>(correct) / static_cast<double>(n)};
}

}  // namespace icbs
