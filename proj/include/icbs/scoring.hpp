#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "icbs/mlp.hpp"
#include "icbs/rng.hpp"

namespace icbs {

enum class ScoreMethod { kRandom, kMagnitude, kGradient, kWanda };
enum class ScoreScope { kPerLayer, kPerOutput, kPerInput };

std::string to_string(ScoreMethod method);
std::string to_string(ScoreScope scope);
ScoreMethod parse_score_method(const std::string& text);
ScoreScope parse_score_scope(const std::string& text);

// One score per prunable global index. Raw values come straight from the
// scoring formula; normalized values are within-group fractional ranks in
// [0, 1), which makes groups comparable under a single global prune count.
struct ScoreVector {
    Eigen::VectorXd values;
    ScoreMethod method = ScoreMethod::kMagnitude;
    ScoreScope scope = ScoreScope::kPerLayer;
    bool normalized = false;
};

// Raw scores over the whole prunable index space.
//   random:    uniform(0,1) draws
//   magnitude: |wc_i|
//   gradient:  |w0_i * G_i|, G the mean gradient on calib at the current weights
//   wanda:     |w0_i * a_i^2|, a^2 the batch mean of the squared column input
// Gradient and wanda use the trained value w0 so that pruned weights (wc = 0)
// still carry their restore-time importance.
Eigen::VectorXd raw_scores(ScoreMethod method, const Mlp& model, const Batch& calib, Rng& rng,
                           int threads = 1);

// Raw scores followed by within-group fractional ranking. Groups are the
// whole tensor (per_layer), one tensor row (per_output) or one tensor column
// (per_input); rank ties break by ascending global index.
ScoreVector score(ScoreMethod method, ScoreScope scope, const Mlp& model, const Batch& calib,
                  Rng& rng, int threads = 1);

// Rank-normalize the weights of a single prunable tensor. Equivalent to the
// slice of score() covering that tensor; used on the per-step selection path
// where only one layer's ordering is consumed.
ScoreVector score_layer(ScoreMethod method, ScoreScope scope, const Mlp& model, int tensor,
                        const Batch& calib, Rng& rng, int threads = 1);

// The `count` members of `within` with the smallest (largest) score; ties
// break by ascending global index. Results are sorted by index.
std::vector<std::int64_t> lowest_k(const ScoreVector& scores, std::int64_t count,
                                   std::span<const std::int64_t> within);
std::vector<std::int64_t> highest_k(const ScoreVector& scores, std::int64_t count,
                                    std::span<const std::int64_t> within);

}  // namespace icbs
