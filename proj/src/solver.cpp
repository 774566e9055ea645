#include "icbs/solver.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "icbs/rng.hpp"

namespace icbs {

namespace {

double max_abs_coefficient(const QcboProblem& problem) {
    double best = 0.0;
    for (int i = 0; i < problem.n; ++i) best = std::max(best, std::abs(problem.linear[i]));
    for (const QuadTerm& term : problem.quad) best = std::max(best, std::abs(term.value));
    return best;
}

Eigen::MatrixXd dense_couplings(const QcboProblem& problem) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(problem.n, problem.n);
    for (const QuadTerm& term : problem.quad) {
        q(term.i, term.j) = term.value;
        q(term.j, term.i) = term.value;
    }
    return q;
}

struct RestartOutcome {
    std::vector<std::uint8_t> x;
    double objective = 0.0;
    std::vector<double> visited;  // filled only when tracing
};

RestartOutcome run_restart(const QcboProblem& problem, const Eigen::MatrixXd& couplings,
                           const SaSchedule& schedule, double t_init, int ordinal, bool tracing) {
    const int n = problem.n;
    const int k = problem.k;
    Rng rng(derive_seed(schedule.seed, static_cast<std::uint64_t>(ordinal)));

    // Random feasible start: first k slots of a partial shuffle.
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    std::vector<int> set_list(order.begin(), order.begin() + k);
    std::vector<int> unset_list(order.begin() + k, order.end());
    std::vector<std::uint8_t> x(static_cast<std::size_t>(n), 0);
    for (int s = 0; s < k; ++s) x[static_cast<std::size_t>(set_list[static_cast<std::size_t>(s)])] = 1;

    // Cached fields: h_i = sum_j Q_ij x_j gives O(1) swap deltas.
    Eigen::VectorXd fields = Eigen::VectorXd::Zero(n);
    for (int s = 0; s < k; ++s) fields += couplings.col(set_list[static_cast<std::size_t>(s)]);
    double current = 0.0;
    for (int s = 0; s < k; ++s) {
        const int i = set_list[static_cast<std::size_t>(s)];
        current += problem.linear[i];
    }
    for (const QuadTerm& term : problem.quad)
        if (x[static_cast<std::size_t>(term.i)] && x[static_cast<std::size_t>(term.j)])
            current += term.value;

    RestartOutcome out;
    out.x = x;
    out.objective = current;
    if (tracing) out.visited.push_back(current);

    const int sweeps = std::max(1, schedule.sweeps);
    const double cooling =
        sweeps > 1 ? std::pow(schedule.t_final / t_init, 1.0 / static_cast<double>(sweeps - 1))
                   : 1.0;
    double temperature = t_init;
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        for (int move = 0; move < n; ++move) {
            const int sa = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(k)));
            const int sb = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n - k)));
            const int a = set_list[static_cast<std::size_t>(sa)];    // leaves the set
            const int b = unset_list[static_cast<std::size_t>(sb)];  // joins the set
            const double delta = problem.linear[b] - problem.linear[a] + fields[b] - fields[a] -
                                 couplings(a, b);
            if (delta > 0.0 && rng.next_double() >= std::exp(-delta / temperature)) continue;

            set_list[static_cast<std::size_t>(sa)] = b;
            unset_list[static_cast<std::size_t>(sb)] = a;
            x[static_cast<std::size_t>(a)] = 0;
            x[static_cast<std::size_t>(b)] = 1;
            fields += couplings.col(b) - couplings.col(a);
            current += delta;
            if (tracing) out.visited.push_back(current);
            if (current < out.objective) {
                out.objective = current;
                out.x = x;
            }
        }
        temperature *= cooling;
    }
    return out;
}

}  // namespace

SolveResult solve_csa(const QcboProblem& problem, const SaSchedule& schedule, int threads,
                      SolveTrace* trace) {
    if (problem.n < 1) throw std::invalid_argument("solve_csa: empty problem");
    if (problem.k <= 0 || problem.k >= problem.n)
        throw std::invalid_argument("solve_csa: infeasible cardinality k=" +
                                    std::to_string(problem.k) + " (need 0 < k < n)");
    if (schedule.restarts < 1) throw std::invalid_argument("solve_csa: restarts must be >= 1");
    if (schedule.t_final <= 0.0) throw std::invalid_argument("solve_csa: t_final must be > 0");

    const double auto_t = max_abs_coefficient(problem);
    const double t_init = schedule.t_init > 0.0 ? schedule.t_init
                                                : (auto_t > 0.0 ? auto_t : 1.0);
    if (t_init < schedule.t_final)
        throw std::invalid_argument("solve_csa: t_init below t_final");

    const Eigen::MatrixXd couplings = dense_couplings(problem);
    std::vector<RestartOutcome> outcomes(static_cast<std::size_t>(schedule.restarts));
    const bool tracing = trace != nullptr;

    auto run_one = [&](int ordinal) {
        outcomes[static_cast<std::size_t>(ordinal)] =
            run_restart(problem, couplings, schedule, t_init, ordinal, tracing);
    };

    if (threads <= 1 || schedule.restarts == 1) {
        for (int r = 0; r < schedule.restarts; ++r) run_one(r);
    } else {
        std::vector<std::thread> pool;
        const int workers = std::min(threads, schedule.restarts);
        std::atomic<int> next{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    const int r = next.fetch_add(1);
                    if (r >= schedule.restarts) return;
                    run_one(r);
                }
            });
        for (auto& t : pool) t.join();
    }

    // Ordinal-order reduction: strict < keeps the lowest restart on ties.
    SolveResult best;
    best.x = outcomes[0].x;
    best.objective = outcomes[0].objective;
    best.restart = 0;
    for (int r = 1; r < schedule.restarts; ++r) {
        if (outcomes[static_cast<std::size_t>(r)].objective < best.objective) {
            best.objective = outcomes[static_cast<std::size_t>(r)].objective;
            best.x = outcomes[static_cast<std::size_t>(r)].x;
            best.restart = r;
        }
    }
    if (trace)
        for (const auto& outcome : outcomes)
            trace->visited.insert(trace->visited.end(), outcome.visited.begin(),
                                  outcome.visited.end());
    return best;
}

SolveResult brute_force(const QcboProblem& problem) {
    const int n = problem.n;
    if (n < 1) throw std::invalid_argument("brute_force: empty problem");
    if (n > 24)
        throw std::invalid_argument("brute_force: n=" + std::to_string(n) +
                                    " exceeds the n<=24 enumeration bound");
    if (problem.k < 0 || problem.k > n)
        throw std::invalid_argument("brute_force: infeasible cardinality");

    SolveResult best;
    bool have = false;
    std::vector<std::uint8_t> x(static_cast<std::size_t>(n), 0);
    // Mapping bit (n-1-i) -> x_i makes ascending mask order lexicographic in
    // the assignment vector, so the first optimum found is the lex-smallest.
    // Evaluation goes through objective() so values are bit-identical to
    // every other evaluation path in the library.
    for (std::uint32_t bits = 0; bits < (1u << n); ++bits) {
        if (std::popcount(bits) != problem.k) continue;
        for (int i = 0; i < n; ++i)
            x[static_cast<std::size_t>(i)] = (bits >> (n - 1 - i)) & 1u;
        const double value = objective(problem, x);
        if (!have || value < best.objective) {
            have = true;
            best.objective = value;
            best.x = x;
        }
    }
    best.restart = 0;
    return best;
}

double QuboProblem::objective(std::span<const std::uint8_t> x) const {
    std::int64_t total = 0;
    for (std::uint8_t bit : x) total += bit ? 1 : 0;
    const double violation = static_cast<double>(total - base.k);
    return icbs::objective(base, x) + penalty * violation * violation;
}

Eigen::VectorXd QuboProblem::linear_expanded() const {
    return base.linear.array() + penalty * (1.0 - 2.0 * static_cast<double>(base.k));
}

std::vector<QuadTerm> QuboProblem::quad_expanded() const {
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(base.n, base.n);
    for (const QuadTerm& term : base.quad) dense(term.i, term.j) = term.value;
    std::vector<QuadTerm> out;
    out.reserve(static_cast<std::size_t>(base.n) * (base.n - 1) / 2);
    for (int i = 0; i < base.n; ++i)
        for (int j = i + 1; j < base.n; ++j)
            out.push_back({i, j, dense(i, j) + 2.0 * penalty});
    return out;
}

QuboProblem to_qubo(const QcboProblem& problem, double penalty) {
    if (penalty <= 0.0) throw std::invalid_argument("to_qubo: penalty must be > 0");
    return QuboProblem{problem, penalty};
}

}  // namespace icbs
