#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "icbs/qcbo.hpp"

namespace icbs {

struct SaSchedule {
    int sweeps = 500;
    double t_init = 0.0;  // <= 0 means auto: max |coefficient| of the problem
    double t_final = 1e-3;
    int restarts = 10;
    std::uint64_t seed = 0;
};

struct SolveResult {
    std::vector<std::uint8_t> x;
    double objective = 0.0;
    int restart = 0;  // ordinal of the winning restart
};

// Test instrumentation: objective value of every assignment visited.
struct SolveTrace {
    std::vector<double> visited;
};

// Multi-restart constrained simulated annealing. Every assignment holds
// sum(x) == k exactly: restarts start from a random feasible point and only
// propose pruned<->kept swap pairs, Metropolis-accepted under geometric
// cooling. The best assignment ever visited wins; restart-ordinal order
// breaks ties, so parallel and sequential execution agree bitwise.
SolveResult solve_csa(const QcboProblem& problem, const SaSchedule& schedule, int threads = 1,
                      SolveTrace* trace = nullptr);

// Exact optimum by enumerating all C(n, k) feasible assignments (n <= 24);
// ties resolve to the lexicographically smallest assignment vector.
SolveResult brute_force(const QcboProblem& problem);

// Penalty reformulation: objective(x) + penalty * (sum(x) - k)^2. The
// expanded coefficient views serve export; evaluation keeps the penalty term
// grouped so feasible assignments score exactly the QCBO objective.
struct QuboProblem {
    QcboProblem base;
    double penalty = 0.0;

    double objective(std::span<const std::uint8_t> x) const;
    Eigen::VectorXd linear_expanded() const;       // base.linear + penalty (1 - 2k)
    std::vector<QuadTerm> quad_expanded() const;   // base.quad + 2 penalty on every pair
    double constant() const { return penalty * static_cast<double>(base.k) * base.k; }
};

QuboProblem to_qubo(const QcboProblem& problem, double penalty);

}  // namespace icbs
