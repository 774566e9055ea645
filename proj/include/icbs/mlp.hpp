#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "icbs/dataset.hpp"

namespace icbs {

struct WeightRef {
    int tensor = 0;
    int row = 0;
    int col = 0;
};

struct DenseLayer {
    Eigen::MatrixXd weights;  // out_dim x in_dim
    Eigen::VectorXd bias;     // out_dim; biases are trainable but never prunable
    bool relu = false;
};

// Feedforward classifier. Weight tensors listed in `prunable()` share one
// flat global index space (tensor order, row-major within a tensor); all
// pruning bookkeeping speaks in those indices. `original_weight` serves the
// post-training snapshot w0, `current_weight` the live value wc; pruning only
// ever zeroes wc or restores it to w0.
class Mlp {
  public:
    // dims = {input, hidden..., classes}; ReLU on hidden layers, identity on
    // the output layer, zero biases, Glorot-uniform weights from `init_seed`.
    static Mlp feedforward(const std::vector<int>& dims, std::uint64_t init_seed);

    int input_dim() const { return static_cast<int>(layers_.front().weights.cols()); }
    int num_classes() const { return static_cast<int>(layers_.back().weights.rows()); }
    int num_layers() const { return static_cast<int>(layers_.size()); }
    const DenseLayer& layer(int t) const { return layers_[static_cast<std::size_t>(t)]; }
    DenseLayer& layer(int t) { return layers_[static_cast<std::size_t>(t)]; }

    const std::vector<int>& prunable() const { return prunable_; }
    std::int64_t num_prunable() const { return total_prunable_; }
    std::int64_t tensor_offset(int tensor) const;
    std::int64_t tensor_weight_count(int tensor) const;
    WeightRef locate(std::int64_t global_index) const;
    std::int64_t global_index(int tensor, int row, int col) const;

    double current_weight(std::int64_t global_index) const;
    void set_current_weight(std::int64_t global_index, double value);
    double original_weight(std::int64_t global_index) const;
    void snapshot_original();  // w0 := wc
    bool has_snapshot() const { return !w0_.empty(); }

    // Rebuild from explicit tensors (checkpoint loading).
    static Mlp from_layers(std::vector<DenseLayer> layers, std::vector<int> prunable);

  private:
    Mlp() = default;
    void rebuild_index();

    std::vector<DenseLayer> layers_;
    std::vector<int> prunable_;        // tensor ids eligible for pruning
    std::vector<std::int64_t> offsets_;  // per prunable tensor, plus total at the end
    std::int64_t total_prunable_ = 0;
    std::vector<double> w0_;  // flat snapshot over the prunable index space
};

struct ForwardResult {
    Eigen::MatrixXd logits;  // m x C
    // Per prunable tensor: mean over the batch of the squared input feeding
    // each column of that tensor. Populated only when capture is requested.
    std::vector<Eigen::VectorXd> activation_sq_mean;
};

ForwardResult forward(const Mlp& model, const Batch& batch, bool capture);

// Mean cross-entropy, log-sum-exp stabilized.
double loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels);

// d(mean loss)/d(wc[i]) for each requested global index, evaluated at the
// current weights. Duplicate indices yield duplicate entries.
Eigen::VectorXd grad_mean(const Mlp& model, const Batch& batch,
                          std::span<const std::int64_t> indices, int threads = 1);

// Per-sample gradient matrix A: row s is the gradient of sample s's own loss
// with respect to the requested weights. Column means equal grad_mean.
Eigen::MatrixXd grad_per_sample(const Mlp& model, const Batch& batch,
                                std::span<const std::int64_t> indices, int threads = 1);

// Full mean-gradient matrix of one weight tensor (out x in).
Eigen::MatrixXd grad_mean_tensor(const Mlp& model, const Batch& batch, int tensor,
                                 int threads = 1);

// Mean gradients for every prunable tensor, indexed like model.prunable().
std::vector<Eigen::MatrixXd> grad_mean_all(const Mlp& model, const Batch& batch,
                                           int threads = 1);

struct SgdOptions {
    int epochs = 100;
    double lr = 0.01;
    std::int64_t batch_size = 100;
    std::uint64_t seed = 0;
    // Optional early stop: quit once the epoch train loss has failed to
    // improve by plateau_tol (relative) for plateau_patience epochs in a row.
    int plateau_patience = 0;  // 0 disables
    double plateau_tol = 1e-3;
    int threads = 1;
};

struct SgdSummary {
    int epochs_run = 0;
    double final_train_loss = 0.0;
};

// Minibatch SGD; snapshots w0 on completion. Throws if the loss goes
// non-finite, naming the epoch.
SgdSummary train_sgd(Mlp& model, const Dataset& train, const SgdOptions& options);

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Full-dataset evaluation in chunks of eval_batch_size; the result does not
// depend on the chunking. Argmax ties resolve to the lowest class index.
EvalResult evaluate(const Mlp& model, const Dataset& dataset, std::int64_t eval_batch_size,
                    int threads = 1);

}  // namespace icbs
