#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "icbs/solver.hpp"
#include "support.hpp"

using namespace icbs;
using icbs::testing::brute_force_qubo;
using icbs::testing::random_instance;

TEST_CASE("solve_csa: n=2 k=1 with linear [1,-1] picks the second variable") {
    QcboProblem problem;
    problem.n = 2;
    problem.k = 1;
    problem.linear.resize(2);
    problem.linear << 1.0, -1.0;
    SaSchedule schedule;
    schedule.sweeps = 50;
    schedule.restarts = 2;
    const SolveResult result = solve_csa(problem, schedule);
    CHECK(result.x == std::vector<std::uint8_t>{0, 1});
    CHECK(result.objective == doctest::Approx(-1.0));
}

TEST_CASE("solve_csa: infeasible cardinalities raise") {
    QcboProblem problem;
    problem.n = 3;
    problem.k = 3;
    problem.linear = Eigen::VectorXd::Zero(3);
    SaSchedule schedule;
    CHECK_THROWS_AS(solve_csa(problem, schedule), std::invalid_argument);
    problem.k = 0;
    CHECK_THROWS_AS(solve_csa(problem, schedule), std::invalid_argument);
}

TEST_CASE("solve_csa: every returned and visited assignment is feasible") {
    Rng rng(51);
    for (int rep = 0; rep < 10; ++rep) {
        const QcboProblem problem = random_instance(10, 4, rng);
        SaSchedule schedule;
        schedule.sweeps = 100;
        schedule.restarts = 3;
        schedule.seed = static_cast<std::uint64_t>(rep);
        const SolveResult result = solve_csa(problem, schedule);
        std::int64_t total = 0;
        for (auto bit : result.x) total += bit;
        CHECK(total == 4);
    }
}

TEST_CASE("solve_csa: returned objective equals the minimum ever visited") {
    Rng rng(53);
    const QcboProblem problem = random_instance(12, 6, rng);
    SaSchedule schedule;
    schedule.sweeps = 200;
    schedule.restarts = 4;
    SolveTrace trace;
    const SolveResult result = solve_csa(problem, schedule, 1, &trace);
    REQUIRE(!trace.visited.empty());
    const double min_visited = *std::min_element(trace.visited.begin(), trace.visited.end());
    CHECK(result.objective == min_visited);
}

TEST_CASE("solve_csa: swap deltas agree with full re-evaluation to 1e-10") {
    // The tracked running objective after a full anneal must match an
    // objective() recomputation of the returned assignment.
    Rng rng(57);
    for (int rep = 0; rep < 20; ++rep) {
        const QcboProblem problem = random_instance(14, 7, rng);
        SaSchedule schedule;
        schedule.sweeps = 300;
        schedule.restarts = 2;
        schedule.seed = static_cast<std::uint64_t>(rep * 31);
        const SolveResult result = solve_csa(problem, schedule);
        CHECK(std::abs(result.objective - objective(problem, result.x)) < 1e-10);
    }
}

TEST_CASE("solve_csa: identical schedules give identical results; threads do not matter") {
    Rng rng(59);
    const QcboProblem problem = random_instance(16, 8, rng);
    SaSchedule schedule;
    schedule.sweeps = 150;
    schedule.restarts = 6;
    schedule.seed = 99;
    const SolveResult a = solve_csa(problem, schedule, 1);
    const SolveResult b = solve_csa(problem, schedule, 1);
    const SolveResult c = solve_csa(problem, schedule, 4);
    CHECK(a.x == b.x);
    CHECK(a.objective == b.objective);
    CHECK(a.restart == b.restart);
    CHECK(a.x == c.x);
    CHECK(a.objective == c.objective);
    CHECK(a.restart == c.restart);
}

TEST_CASE("brute_force: n=4 k=4 has the single all-ones point") {
    QcboProblem problem;
    problem.n = 4;
    problem.k = 4;
    problem.linear.resize(4);
    problem.linear << 1, 2, 3, 4;
    const SolveResult result = brute_force(problem);
    CHECK(result.x == std::vector<std::uint8_t>{1, 1, 1, 1});
    CHECK(result.objective == doctest::Approx(10.0));
}

TEST_CASE("brute_force: a single negative pair attracts the optimum") {
    QcboProblem problem;
    problem.n = 4;
    problem.k = 2;
    problem.linear = Eigen::VectorXd::Zero(4);
    problem.quad.push_back({0, 1, -5.0});
    const SolveResult result = brute_force(problem);
    CHECK(result.x == std::vector<std::uint8_t>{1, 1, 0, 0});
    CHECK(result.objective == doctest::Approx(-5.0));
}

TEST_CASE("brute_force: ties resolve to the lexicographically smallest assignment") {
    QcboProblem problem;
    problem.n = 4;
    problem.k = 2;
    problem.linear = Eigen::VectorXd::Zero(4);  // all C(4,2) assignments tie at 0
    const SolveResult result = brute_force(problem);
    CHECK(result.x == std::vector<std::uint8_t>{0, 0, 1, 1});
}

TEST_CASE("brute_force refuses n > 24") {
    QcboProblem problem;
    problem.n = 25;
    problem.k = 5;
    problem.linear = Eigen::VectorXd::Zero(25);
    CHECK_THROWS_AS(brute_force(problem), std::invalid_argument);
}

TEST_CASE("solve_csa agrees with brute_force across seeds on a fixed instance") {
    Rng rng(61);
    const QcboProblem problem = random_instance(10, 5, rng);
    const SolveResult exact = brute_force(problem);
    int hits = 0;
    for (int seed = 0; seed < 20; ++seed) {
        SaSchedule schedule;
        schedule.sweeps = 500;
        schedule.restarts = 10;
        schedule.seed = static_cast<std::uint64_t>(seed);
        const SolveResult result = solve_csa(problem, schedule);
        if (std::abs(result.objective - exact.objective) <= 1e-9) ++hits;
    }
    CHECK(hits == 20);
}

TEST_CASE("to_qubo: feasible assignments score exactly the constrained objective") {
    Rng rng(67);
    const QcboProblem problem = random_instance(8, 4, rng);
    const QuboProblem qubo = to_qubo(problem, 25.0);
    const std::vector<std::uint8_t> feasible{1, 0, 1, 0, 1, 0, 1, 0};
    CHECK(qubo.objective(feasible) == objective(problem, feasible));
    // one extra bit inflates by penalty * 1
    const std::vector<std::uint8_t> overfull{1, 1, 1, 0, 1, 0, 1, 0};
    CHECK(qubo.objective(overfull) ==
          doctest::Approx(objective(problem, overfull) + 25.0).epsilon(1e-12));
    CHECK_THROWS_AS(to_qubo(problem, 0.0), std::invalid_argument);
}

TEST_CASE("to_qubo: expanded coefficients reproduce the grouped objective") {
    Rng rng(71);
    const QcboProblem problem = random_instance(6, 3, rng);
    const QuboProblem qubo = to_qubo(problem, 10.0);
    const Eigen::VectorXd linear = qubo.linear_expanded();
    const auto quad = qubo.quad_expanded();
    Rng xr(5);
    for (int rep = 0; rep < 32; ++rep) {
        std::vector<std::uint8_t> x(6);
        for (int i = 0; i < 6; ++i) x[static_cast<std::size_t>(i)] = xr.bounded(2) ? 1 : 0;
        double expanded = qubo.constant();
        for (int i = 0; i < 6; ++i)
            if (x[static_cast<std::size_t>(i)]) expanded += linear[i];
        for (const QuadTerm& term : quad)
            if (x[static_cast<std::size_t>(term.i)] && x[static_cast<std::size_t>(term.j)])
                expanded += term.value;
        CHECK(expanded == doctest::Approx(qubo.objective(x)).epsilon(1e-12));
    }
}

TEST_CASE("to_qubo: a large enough penalty makes the unconstrained optimum feasible") {
    Rng rng(73);
    for (int rep = 0; rep < 5; ++rep) {
        const QcboProblem problem = random_instance(8, 4, rng);
        double max_coeff = 0.0;
        for (int i = 0; i < 8; ++i) max_coeff = std::max(max_coeff, std::abs(problem.linear[i]));
        for (const QuadTerm& term : problem.quad)
            max_coeff = std::max(max_coeff, std::abs(term.value));
        const QuboProblem qubo = to_qubo(problem, 10.0 * 8 * max_coeff);
        const auto [x, value] = brute_force_qubo(qubo);
        std::int64_t total = 0;
        for (auto bit : x) total += bit;
        CHECK(total == 4);
        const SolveResult constrained = brute_force(problem);
        CHECK(value == constrained.objective);
        CHECK(x == constrained.x);
    }
}
