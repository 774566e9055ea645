#include "icbs/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace icbs {

namespace {

void fill_random_tensor(const Mlp& model, int tensor, std::uint64_t draw, Eigen::VectorXd& out) {
    // Per-tensor substreams keep single-layer scoring identical to the
    // corresponding slice of whole-model scoring.
    Rng sub(derive_seed(draw, static_cast<std::uint64_t>(tensor)));
    const std::int64_t offset = model.tensor_offset(tensor);
    const std::int64_t count = model.tensor_weight_count(tensor);
    for (std::int64_t i = 0; i < count; ++i) out[offset + i] = sub.next_double();
}

void fill_magnitude_tensor(const Mlp& model, int tensor, Eigen::VectorXd& out) {
    const auto& w = model.layer(tensor).weights;
    std::int64_t g = model.tensor_offset(tensor);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) out[g++] = std::abs(w(r, c));
}

void fill_gradient_tensor(const Mlp& model, int tensor, const Eigen::MatrixXd& grad,
                          Eigen::VectorXd& out) {
    std::int64_t g = model.tensor_offset(tensor);
    for (Eigen::Index r = 0; r < grad.rows(); ++r)
        for (Eigen::Index c = 0; c < grad.cols(); ++c) {
            out[g] = std::abs(model.original_weight(g) * grad(r, c));
            ++g;
        }
}

void fill_wanda_tensor(const Mlp& model, int tensor, const Eigen::VectorXd& act_sq_mean,
                       Eigen::VectorXd& out) {
    const auto& w = model.layer(tensor).weights;
    std::int64_t g = model.tensor_offset(tensor);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            out[g] = std::abs(model.original_weight(g) * act_sq_mean[c]);
            ++g;
        }
}

void require_calibration(ScoreMethod method, const Mlp& model, const Batch& calib) {
    if (calib.size() < 1)
        throw std::invalid_argument("scoring: " + to_string(method) +
                                    " needs a nonempty calibration batch");
    if (!model.has_snapshot())
        throw std::logic_error("scoring: model has no w0 snapshot");
}

// Assign within-group fractional ranks rank/group_size; ties break by
// ascending global index so the result is a total order.
void rank_group(const Eigen::VectorXd& raw, std::vector<std::int64_t>& group,
                Eigen::VectorXd& out) {
    std::sort(group.begin(), group.end(), [&](std::int64_t a, std::int64_t b) {
        if (raw[a] != raw[b]) return raw[a] < raw[b];
        return a < b;
    });
    const double size = static_cast<double>(group.size());
    for (std::size_t rank = 0; rank < group.size(); ++rank)
        out[group[rank]] = static_cast<double>(rank) / size;
}

void normalize_tensor(const Mlp& model, int tensor, ScoreScope scope, const Eigen::VectorXd& raw,
                      Eigen::VectorXd& out) {
    const std::int64_t offset = model.tensor_offset(tensor);
    const auto& w = model.layer(tensor).weights;
    const std::int64_t rows = w.rows();
    const std::int64_t cols = w.cols();
    std::vector<std::int64_t> group;
    switch (scope) {
        case ScoreScope::kPerLayer:
            group.resize(static_cast<std::size_t>(rows * cols));
            for (std::int64_t i = 0; i < rows * cols; ++i)
                group[static_cast<std::size_t>(i)] = offset + i;
            rank_group(raw, group, out);
            break;
        case ScoreScope::kPerOutput:
            for (std::int64_t r = 0; r < rows; ++r) {
                group.resize(static_cast<std::size_t>(cols));
                for (std::int64_t c = 0; c < cols; ++c)
                    group[static_cast<std::size_t>(c)] = offset + r * cols + c;
                rank_group(raw, group, out);
            }
            break;
        case ScoreScope::kPerInput:
            for (std::int64_t c = 0; c < cols; ++c) {
                group.resize(static_cast<std::size_t>(rows));
                for (std::int64_t r = 0; r < rows; ++r)
                    group[static_cast<std::size_t>(r)] = offset + r * cols + c;
                rank_group(raw, group, out);
            }
            break;
    }
}

template <typename Better>
std::vector<std::int64_t> select_k(std::int64_t count, std::span<const std::int64_t> within,
                                   Better better) {
    if (count < 0) throw std::invalid_argument("selection: negative count");
    if (count > static_cast<std::int64_t>(within.size()))
        throw std::invalid_argument("selection: count exceeds candidate set");
    std::vector<std::int64_t> pool(within.begin(), within.end());
    std::nth_element(pool.begin(), pool.begin() + count, pool.end(), better);
    pool.resize(static_cast<std::size_t>(count));
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace

std::string to_string(ScoreMethod method) {
    switch (method) {
        case ScoreMethod::kRandom: return "random";
        case ScoreMethod::kMagnitude: return "magnitude";
        case ScoreMethod::kGradient: return "gradient";
        case ScoreMethod::kWanda: return "wanda";
    }
    return "?";
}

std::string to_string(ScoreScope scope) {
    switch (scope) {
        case ScoreScope::kPerLayer: return "per_layer";
        case ScoreScope::kPerOutput: return "per_output";
        case ScoreScope::kPerInput: return "per_input";
    }
    return "?";
}

namespace {
std::string squeeze(const std::string& text) {
    std::string out;
    for (char ch : text) {
        if (ch == ' ' || ch == '_' || ch == '-' || ch == '(' || ch == ')') continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    return out;
}
}  // namespace

ScoreMethod parse_score_method(const std::string& text) {
    const std::string key = squeeze(text);
    if (key == "random") return ScoreMethod::kRandom;
    if (key == "magnitude") return ScoreMethod::kMagnitude;
    if (key == "gradient") return ScoreMethod::kGradient;
    if (key == "wanda") return ScoreMethod::kWanda;
    throw std::invalid_argument("unknown weight-scoring method: " + text);
}

ScoreScope parse_score_scope(const std::string& text) {
    const std::string key = squeeze(text);
    if (key == "perlayer") return ScoreScope::kPerLayer;
    if (key == "peroutput") return ScoreScope::kPerOutput;
    if (key == "perinput") return ScoreScope::kPerInput;
    throw std::invalid_argument("unknown weight-scoring scope: " + text);
}

Eigen::VectorXd raw_scores(ScoreMethod method, const Mlp& model, const Batch& calib, Rng& rng,
                           int threads) {
    Eigen::VectorXd out(model.num_prunable());
    switch (method) {
        case ScoreMethod::kRandom: {
            const std::uint64_t draw = rng.next_u64();
            for (int t : model.prunable()) fill_random_tensor(model, t, draw, out);
            break;
        }
        case ScoreMethod::kMagnitude:
            for (int t : model.prunable()) fill_magnitude_tensor(model, t, out);
            break;
        case ScoreMethod::kGradient: {
            require_calibration(method, model, calib);
            const auto grads = grad_mean_all(model, calib, threads);
            for (std::size_t i = 0; i < model.prunable().size(); ++i)
                fill_gradient_tensor(model, model.prunable()[i], grads[i], out);
            break;
        }
        case ScoreMethod::kWanda: {
            require_calibration(method, model, calib);
            const ForwardResult fwd = forward(model, calib, /*capture=*/true);
            for (std::size_t i = 0; i < model.prunable().size(); ++i)
                fill_wanda_tensor(model, model.prunable()[i], fwd.activation_sq_mean[i], out);
            break;
        }
    }
    return out;
}

ScoreVector score(ScoreMethod method, ScoreScope scope, const Mlp& model, const Batch& calib,
                  Rng& rng, int threads) {
    const Eigen::VectorXd raw = raw_scores(method, model, calib, rng, threads);
    ScoreVector scores;
    scores.method = method;
    scores.scope = scope;
    scores.normalized = true;
    scores.values.setZero(model.num_prunable());
    for (int t : model.prunable()) normalize_tensor(model, t, scope, raw, scores.values);
    return scores;
}

ScoreVector score_layer(ScoreMethod method, ScoreScope scope, const Mlp& model, int tensor,
                        const Batch& calib, Rng& rng, int threads) {
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(model.num_prunable());
    switch (method) {
        case ScoreMethod::kRandom:
            fill_random_tensor(model, tensor, rng.next_u64(), raw);
            break;
        case ScoreMethod::kMagnitude:
            fill_magnitude_tensor(model, tensor, raw);
            break;
        case ScoreMethod::kGradient: {
            require_calibration(method, model, calib);
            fill_gradient_tensor(model, tensor, grad_mean_tensor(model, calib, tensor, threads),
                                 raw);
            break;
        }
        case ScoreMethod::kWanda: {
            require_calibration(method, model, calib);
            const ForwardResult fwd = forward(model, calib, /*capture=*/true);
            for (std::size_t i = 0; i < model.prunable().size(); ++i)
                if (model.prunable()[i] == tensor)
                    fill_wanda_tensor(model, tensor, fwd.activation_sq_mean[i], raw);
            break;
        }
    }
    ScoreVector scores;
    scores.method = method;
    scores.scope = scope;
    scores.normalized = true;
    scores.values.setZero(model.num_prunable());
    normalize_tensor(model, tensor, scope, raw, scores.values);
    return scores;
}

std::vector<std::int64_t> lowest_k(const ScoreVector& scores, std::int64_t count,
                                   std::span<const std::int64_t> within) {
    const auto& v = scores.values;
    return select_k(count, within, [&](std::int64_t a, std::int64_t b) {
        if (v[a] != v[b]) return v[a] < v[b];
        return a < b;
    });
}

std::vector<std::int64_t> highest_k(const ScoreVector& scores, std::int64_t count,
                                    std::span<const std::int64_t> within) {
    const auto& v = scores.values;
    return select_k(count, within, [&](std::int64_t a, std::int64_t b) {
        if (v[a] != v[b]) return v[a] > v[b];
        return a < b;
    });
}

}  // namespace icbs
