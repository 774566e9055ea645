#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "icbs/mlp.hpp"
#include "icbs/prune_state.hpp"

namespace icbs {

// Coefficients at or below this magnitude (after scaling) are dropped.
inline constexpr double kCoefficientDropThreshold = 1e-12;

// The n weights chosen for one optimization step: k currently pruned plus
// n - k currently kept, with their trained values, drift from those values,
// block gradient and block Hessian at the current weights.
struct Block {
    std::vector<std::int64_t> indices;  // ascending global indices
    Eigen::VectorXd w0;
    Eigen::VectorXd dw;    // wc - w0: -w0 for pruned members, 0 for kept
    Eigen::VectorXd grad;  // mean gradient at wc
    Eigen::MatrixXd hess;  // (1/m) A^T A estimate
    std::int64_t k = 0;    // pruned members on entry

    std::int64_t size() const { return static_cast<std::int64_t>(indices.size()); }
};

struct QuadTerm {
    int i = 0;
    int j = 0;  // i < j
    double value = 0.0;
};

// Cardinality-constrained binary quadratic problem over a block. Linear
// entries and quadratic terms below the drop threshold are stored as exact
// zeros / omitted. `scale` is the factor already applied to all coefficients.
struct QcboProblem {
    int n = 0;
    int k = 0;
    double scale = 1.0;
    Eigen::VectorXd linear;
    std::vector<QuadTerm> quad;
    bool degenerate = false;  // every coefficient fell below the threshold
};

// Picks the step's block from one layer: the k highest-scoring free, non-tabu
// pruned weights and n - k lowest-scoring free, non-tabu kept weights. When a
// side runs short the block shrinks to n' = 2 * min(avail_pruned, avail_kept)
// with k' = n'/2; an empty return means the step must be skipped.
std::vector<std::int64_t> select_block(const PruneState& state, const Mlp& model,
                                       const ScoreVector& scores, int tensor, std::int64_t n,
                                       std::int64_t k);

// (1/m) A^T A from the m x n per-sample gradient matrix.
Eigen::MatrixXd estimate_hessian(const Eigen::MatrixXd& per_sample_grads, int threads = 1);

// Gathers w0 / dw / mean gradient / Hessian estimate for the given indices.
Block assemble_block(const Mlp& model, const PruneState& state,
                     std::vector<std::int64_t> indices, const Batch& batch, int threads = 1);

// Raw objective coefficients before scaling:
//   linear_i = -alpha w0_i g_i + sum_j w0_i H_ij dw_j
//              + lambda (2 dw_i w0_i + w0_i^2) + 1/2 H_ii w0_i^2
//   quad_ij  = w0_i H_ij w0_j            (i < j; the 1/2 double-count cancels)
void qcbo_coefficients(const Block& block, double alpha, double lambda, Eigen::VectorXd& linear,
                       Eigen::MatrixXd& quad_upper);

// Scales the raw coefficients so the mean absolute nonzero coefficient is
// one, then drops anything at or below the threshold.
QcboProblem build_qcbo(const Block& block, double alpha, double lambda);

// sum_i linear_i x_i + sum_{i<j} quad_ij x_i x_j (the discarded constant is
// not restored).
double objective(const QcboProblem& problem, std::span<const std::uint8_t> x);

// One-problem-per-file text dump: a header line "n k scale" then (i, j,
// value) triples, diagonal entries carrying the linear coefficients.
void write_problem(std::ostream& out, const QcboProblem& problem);
void write_problem_file(const std::string& path, const QcboProblem& problem);
QcboProblem read_problem(std::istream& in);
QcboProblem read_problem_file(const std::string& path);

}  // namespace icbs
