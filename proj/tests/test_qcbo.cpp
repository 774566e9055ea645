#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "icbs/qcbo.hpp"
#include "icbs/solver.hpp"
#include "support.hpp"

using namespace icbs;

namespace {

// Random block with realistic structure: H = (1/m) A^T A, k pruned members
// (dw = -w0), the rest kept (dw = 0).
Block random_block(int n, int k, Rng& rng) {
    Block block;
    block.indices.resize(static_cast<std::size_t>(n));
    std::iota(block.indices.begin(), block.indices.end(), 0);
    block.w0.resize(n);
    block.grad.resize(n);
    for (int i = 0; i < n; ++i) {
        block.w0[i] = 2.0 * rng.next_double() - 1.0;
        block.grad[i] = 2.0 * rng.next_double() - 1.0;
    }
    const int m = 2 * n;
    Eigen::MatrixXd per_sample(m, n);
    for (int s = 0; s < m; ++s)
        for (int i = 0; i < n; ++i) per_sample(s, i) = 2.0 * rng.next_double() - 1.0;
    block.hess = estimate_hessian(per_sample);
    block.dw = Eigen::VectorXd::Zero(n);
    block.k = k;
    for (int i = 0; i < k; ++i) block.dw[i] = -block.w0[i];
    return block;
}

// Direct Eq-style objective: full double sums over the block, no coefficient
// bookkeeping. The independent oracle for build_qcbo + objective.
double direct_block_objective(const Block& block, double alpha, double lambda,
                              const std::vector<std::uint8_t>& x) {
    const int n = static_cast<int>(block.size());
    double value = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!x[static_cast<std::size_t>(i)]) continue;
        value += -alpha * block.w0[i] * block.grad[i];
        for (int j = 0; j < n; ++j) value += block.w0[i] * block.hess(i, j) * block.dw[j];
        value += lambda * (2.0 * block.dw[i] * block.w0[i] + block.w0[i] * block.w0[i]);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (x[static_cast<std::size_t>(i)] && x[static_cast<std::size_t>(j)])
                value += 0.5 * block.w0[i] * block.hess(i, j) * block.w0[j];
    return value;
}

}  // namespace

TEST_CASE("estimate_hessian: 2x2 identity gives I/2") {
    const Eigen::MatrixXd hess = estimate_hessian(Eigen::MatrixXd::Identity(2, 2));
    CHECK(hess(0, 0) == doctest::Approx(0.5));
    CHECK(hess(1, 1) == doctest::Approx(0.5));
    CHECK(hess(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("estimate_hessian: a zero gradient column zeroes its row and column") {
    Rng rng(4);
    Eigen::MatrixXd per_sample(6, 4);
    for (int s = 0; s < 6; ++s)
        for (int i = 0; i < 4; ++i) per_sample(s, i) = rng.next_double();
    per_sample.col(2).setZero();
    const Eigen::MatrixXd hess = estimate_hessian(per_sample);
    CHECK(hess.row(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(hess.col(2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("estimate_hessian matches the naive triple-loop oracle within 1e-12") {
    Rng rng(8);
    Eigen::MatrixXd per_sample(5, 3);
    for (int s = 0; s < 5; ++s)
        for (int i = 0; i < 3; ++i) per_sample(s, i) = 2.0 * rng.next_double() - 1.0;
    const Eigen::MatrixXd hess = estimate_hessian(per_sample);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double naive = 0.0;
            for (int s = 0; s < 5; ++s) naive += per_sample(s, i) * per_sample(s, j);
            naive /= 5.0;
            CHECK(std::abs(hess(i, j) - naive) < 1e-12);
        }
}

TEST_CASE("estimate_hessian output is symmetric and positive semidefinite in quadratic form") {
    Rng rng(15);
    Eigen::MatrixXd per_sample(30, 8);
    for (int s = 0; s < 30; ++s)
        for (int i = 0; i < 8; ++i) per_sample(s, i) = 2.0 * rng.next_double() - 1.0;
    const Eigen::MatrixXd hess = estimate_hessian(per_sample);
    CHECK((hess - hess.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    for (int rep = 0; rep < 100; ++rep) {
        Eigen::VectorXd x(8);
        for (int i = 0; i < 8; ++i) x[i] = 2.0 * rng.next_double() - 1.0;
        CHECK(x.dot(hess * x) >= -1e-10);
    }
}

TEST_CASE("with wc = w0 the block coefficients reduce to the one-shot form") {
    // Independent coding of the unpruned-state special case:
    //   linear_i = -alpha w0_i G_i + lambda w0_i^2 + 1/2 H_ii w0_i^2
    //   quad_ij  = w0_i H_ij w0_j
    Rng rng(19);
    for (int rep = 0; rep < 20; ++rep) {
        const Block block = random_block(16, 0, rng);  // k=0: dw all zero
        Eigen::VectorXd linear;
        Eigen::MatrixXd quad;
        qcbo_coefficients(block, 0.75, 0.001, linear, quad);
        for (int i = 0; i < 16; ++i) {
            const double expect = -0.75 * block.w0[i] * block.grad[i] +
                                  0.001 * block.w0[i] * block.w0[i] +
                                  0.5 * block.hess(i, i) * block.w0[i] * block.w0[i];
            CHECK(std::abs(linear[i] - expect) <= 1e-12);
            for (int j = i + 1; j < 16; ++j) {
                const double pair = block.w0[i] * block.hess(i, j) * block.w0[j];
                CHECK(std::abs(quad(i, j) - pair) <= 1e-12);
            }
        }
    }
}

TEST_CASE("build_qcbo: scaled objective matches the direct summation for all assignments") {
    Rng rng(23);
    const Block block = random_block(3, 1, rng);
    const QcboProblem problem = build_qcbo(block, 0.75, 0.001);
    CHECK(problem.k == 1);
    for (int bits = 0; bits < 8; ++bits) {
        const std::vector<std::uint8_t> x{static_cast<std::uint8_t>(bits & 1),
                                          static_cast<std::uint8_t>((bits >> 1) & 1),
                                          static_cast<std::uint8_t>((bits >> 2) & 1)};
        const double direct = direct_block_objective(block, 0.75, 0.001, x);
        CHECK(std::abs(objective(problem, x) / problem.scale - direct) < 1e-9);
    }
}

TEST_CASE("build_qcbo: mean absolute nonzero coefficient is one after scaling") {
    Rng rng(29);
    const Block block = random_block(12, 6, rng);
    const QcboProblem problem = build_qcbo(block, 0.75, 0.001);
    double abs_sum = 0.0;
    std::int64_t count = 0;
    for (int i = 0; i < problem.n; ++i)
        if (problem.linear[i] != 0.0) {
            abs_sum += std::abs(problem.linear[i]);
            ++count;
        }
    for (const QuadTerm& term : problem.quad) {
        abs_sum += std::abs(term.value);
        ++count;
    }
    CHECK(abs_sum / static_cast<double>(count) == doctest::Approx(1.0).epsilon(1e-9));
    for (const QuadTerm& term : problem.quad)
        CHECK(std::abs(term.value) > kCoefficientDropThreshold);
}

TEST_CASE("build_qcbo: scaling preserves the constrained argmin") {
    Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
        const Block block = random_block(10, 5, rng);
        const QcboProblem scaled = build_qcbo(block, 0.75, 0.001);

        Eigen::VectorXd linear;
        Eigen::MatrixXd quad;
        qcbo_coefficients(block, 0.75, 0.001, linear, quad);
        QcboProblem unscaled;
        unscaled.n = 10;
        unscaled.k = 5;
        unscaled.linear = linear;
        for (int i = 0; i < 10; ++i)
            for (int j = i + 1; j < 10; ++j)
                if (quad(i, j) != 0.0) unscaled.quad.push_back({i, j, quad(i, j)});

        CHECK(brute_force(scaled).x == brute_force(unscaled).x);
    }
}

TEST_CASE("degenerate problems (all coefficients dropped) are flagged") {
    Block block;
    block.indices = {0, 1};
    block.w0 = Eigen::VectorXd::Zero(2);  // all-zero trained weights
    block.dw = Eigen::VectorXd::Zero(2);
    block.grad = Eigen::VectorXd::Ones(2);
    block.hess = Eigen::MatrixXd::Identity(2, 2);
    block.k = 1;
    const QcboProblem problem = build_qcbo(block, 0.75, 0.001);
    CHECK(problem.degenerate);
    SaSchedule schedule;
    schedule.restarts = 2;
    schedule.sweeps = 10;
    const SolveResult result = solve_csa(problem, schedule);
    CHECK(result.objective == 0.0);
    std::int64_t total = 0;
    for (auto bit : result.x) total += bit;
    CHECK(total == 1);
}

TEST_CASE("objective: all-zeros assignment scores 0; single bit scores its linear term") {
    QcboProblem problem;
    problem.n = 3;
    problem.k = 1;
    problem.linear.resize(3);
    problem.linear << 0.5, -1.0, 2.0;
    problem.quad.push_back({0, 2, 4.0});
    CHECK(objective(problem, std::vector<std::uint8_t>{0, 0, 0}) == 0.0);
    CHECK(objective(problem, std::vector<std::uint8_t>{0, 1, 0}) == -1.0);
    CHECK(objective(problem, std::vector<std::uint8_t>{1, 0, 1}) == doctest::Approx(6.5));
}

TEST_CASE("select_block: highest-scoring pruned plus lowest-scoring kept") {
    // 1x4 tensor; indices a=0 (pruned, 0.9), b=1 (pruned, 0.1),
    // c=2 (kept, 0.2), d=3 (kept, 0.8); n=2 -> {a, c}.
    DenseLayer layer;
    layer.weights.resize(1, 4);
    layer.weights << 1, 1, 1, 1;
    layer.bias = Eigen::VectorXd::Zero(1);
    Mlp model = Mlp::from_layers({layer}, {0});
    model.snapshot_original();
    ScoreVector init;
    init.values.resize(4);
    init.values << 1, 0, 2, 3;  // prune the two lowest: indices 0 and 1
    PruneState state = init_prune(model, init, 0.5, 0.0);
    REQUIRE(state.is_pruned(0));
    REQUIRE(state.is_pruned(1));

    ScoreVector selection;
    selection.values.resize(4);
    selection.values << 0.9, 0.1, 0.2, 0.8;
    const auto block = select_block(state, model, selection, 0, 2, 1);
    CHECK(block == std::vector<std::int64_t>{0, 2});
}

TEST_CASE("select_block: all pruned candidates tabu means the step is skipped") {
    DenseLayer layer;
    layer.weights.resize(1, 4);
    layer.weights << 1, 1, 1, 1;
    layer.bias = Eigen::VectorXd::Zero(1);
    Mlp model = Mlp::from_layers({layer}, {0});
    model.snapshot_original();
    ScoreVector init;
    init.values.resize(4);
    init.values << 0, 1, 2, 3;
    PruneState state = init_prune(model, init, 0.5, 0.9);  // capacity floor(3.6) = 3
    tabu_push(state, model, 0, std::vector<std::int64_t>{0, 1});  // both pruned now tabu
    ScoreVector selection;
    selection.values.resize(4);
    selection.values << 0.9, 0.1, 0.2, 0.8;
    CHECK(select_block(state, model, selection, 0, 2, 1).empty());
}

TEST_CASE("select_block: shrinks to twice the scarcer side") {
    DenseLayer layer;
    layer.weights.resize(1, 8);
    layer.weights << 1, 1, 1, 1, 1, 1, 1, 1;
    layer.bias = Eigen::VectorXd::Zero(1);
    Mlp model = Mlp::from_layers({layer}, {0});
    model.snapshot_original();
    ScoreVector init;
    init.values.resize(8);
    init.values << 0, 1, 2, 3, 4, 5, 6, 7;  // prune 0,1 at d=0.75
    PruneState state = init_prune(model, init, 0.75, 0.0);
    REQUIRE(state.pruned_count == 2);
    ScoreVector selection;
    selection.values = init.values;
    // ask for n=8, k=4: only 2 pruned available -> n'=4, k'=2
    const auto block = select_block(state, model, selection, 0, 8, 4);
    CHECK(block.size() == 4);
    CHECK(block[0] == 0);
    CHECK(block[1] == 1);
}

TEST_CASE("problem dumps round-trip through the text format") {
    Rng rng(37);
    const Block block = random_block(6, 3, rng);
    const QcboProblem problem = build_qcbo(block, 0.75, 0.001);
    std::stringstream buffer;
    write_problem(buffer, problem);
    const QcboProblem parsed = read_problem(buffer);
    CHECK(parsed.n == problem.n);
    CHECK(parsed.k == problem.k);
    CHECK(parsed.scale == problem.scale);
    CHECK(parsed.linear == problem.linear);
    REQUIRE(parsed.quad.size() == problem.quad.size());
    for (std::size_t i = 0; i < parsed.quad.size(); ++i) {
        CHECK(parsed.quad[i].i == problem.quad[i].i);
        CHECK(parsed.quad[i].j == problem.quad[i].j);
        CHECK(parsed.quad[i].value == problem.quad[i].value);
    }
    std::stringstream bad("3 5 1.0\n");
    CHECK_THROWS_AS(read_problem(bad), std::runtime_error);
}
