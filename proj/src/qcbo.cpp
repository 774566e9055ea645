#include "icbs/qcbo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "icbs/parallel.hpp"

namespace icbs {

std::vector<std::int64_t> select_block(const PruneState& state, const Mlp& model,
                                       const ScoreVector& scores, int tensor, std::int64_t n,
                                       std::int64_t k) {
    if (n < 2 || k < 1 || k >= n) throw std::invalid_argument("select_block: need 0 < k < n");
    const std::int64_t offset = model.tensor_offset(tensor);
    const std::int64_t count = model.tensor_weight_count(tensor);

    std::vector<std::int64_t> pruned_free;
    std::vector<std::int64_t> kept_free;
    for (std::int64_t g = offset; g < offset + count; ++g) {
        if (state.is_fixed(g) || state.is_tabu(g)) continue;
        (state.is_pruned(g) ? pruned_free : kept_free).push_back(g);
    }

    std::int64_t want_pruned = k;
    std::int64_t want_kept = n - k;
    if (static_cast<std::int64_t>(pruned_free.size()) < want_pruned ||
        static_cast<std::int64_t>(kept_free.size()) < want_kept) {
        // Exhaustion rule: shrink symmetrically around the scarcer side.
        const std::int64_t half = std::min<std::int64_t>(
            static_cast<std::int64_t>(pruned_free.size()),
            static_cast<std::int64_t>(kept_free.size()));
        if (2 * half < 2) return {};
        want_pruned = half;
        want_kept = half;
    }

    std::vector<std::int64_t> block = highest_k(scores, want_pruned, pruned_free);
    std::vector<std::int64_t> kept_sel = lowest_k(scores, want_kept, kept_free);
    block.insert(block.end(), kept_sel.begin(), kept_sel.end());
    std::sort(block.begin(), block.end());
    return block;
}

Eigen::MatrixXd estimate_hessian(const Eigen::MatrixXd& per_sample_grads, int threads) {
    const std::int64_t m = per_sample_grads.rows();
    if (m < 1) throw std::invalid_argument("estimate_hessian: need at least one sample");
    const std::int64_t width = per_sample_grads.cols();

    constexpr std::int64_t kShard = 512;
    const int num_shards = static_cast<int>((m + kShard - 1) / kShard);
    std::vector<Eigen::MatrixXd> partials(static_cast<std::size_t>(num_shards));
    parallel_shards(m, kShard, threads, [&](int s, std::int64_t begin, std::int64_t end) {
        const auto rows = per_sample_grads.middleRows(begin, end - begin);
        partials[static_cast<std::size_t>(s)].noalias() = rows.transpose() * rows;
    });
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(width, width);
    for (const auto& partial : partials) hess += partial;
    return hess / static_cast<double>(m);
}

Block assemble_block(const Mlp& model, const PruneState& state,
                     std::vector<std::int64_t> indices, const Batch& batch, int threads) {
    Block block;
    block.indices = std::move(indices);
    const std::int64_t n = block.size();
    block.w0.resize(n);
    block.dw.resize(n);
    block.k = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t g = block.indices[static_cast<std::size_t>(i)];
        block.w0[i] = model.original_weight(g);
        block.dw[i] = model.current_weight(g) - block.w0[i];
        block.k += state.is_pruned(g) ? 1 : 0;
    }
    block.grad = grad_mean(model, batch, block.indices, threads);
    block.hess = estimate_hessian(grad_per_sample(model, batch, block.indices, threads), threads);
    return block;
}

void qcbo_coefficients(const Block& block, double alpha, double lambda, Eigen::VectorXd& linear,
                       Eigen::MatrixXd& quad_upper) {
    const std::int64_t n = block.size();
    linear.resize(n);
    quad_upper = Eigen::MatrixXd::Zero(n, n);
    for (std::int64_t i = 0; i < n; ++i) {
        double cross = 0.0;
        for (std::int64_t j = 0; j < n; ++j) cross += block.hess(i, j) * block.dw[j];
        linear[i] = -alpha * block.w0[i] * block.grad[i] + block.w0[i] * cross +
                    lambda * (2.0 * block.dw[i] * block.w0[i] + block.w0[i] * block.w0[i]) +
                    0.5 * block.hess(i, i) * block.w0[i] * block.w0[i];
        for (std::int64_t j = i + 1; j < n; ++j)
            quad_upper(i, j) = block.w0[i] * block.hess(i, j) * block.w0[j];
    }
}

QcboProblem build_qcbo(const Block& block, double alpha, double lambda) {
    Eigen::VectorXd linear;
    Eigen::MatrixXd quad_upper;
    qcbo_coefficients(block, alpha, lambda, linear, quad_upper);

    const std::int64_t n = block.size();
    double abs_sum = 0.0;
    std::int64_t nonzero = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (linear[i] != 0.0) {
            abs_sum += std::abs(linear[i]);
            ++nonzero;
        }
        for (std::int64_t j = i + 1; j < n; ++j)
            if (quad_upper(i, j) != 0.0) {
                abs_sum += std::abs(quad_upper(i, j));
                ++nonzero;
            }
    }

    QcboProblem problem;
    problem.n = static_cast<int>(n);
    problem.k = static_cast<int>(block.k);
    problem.scale = (nonzero > 0 && abs_sum > 0.0) ? static_cast<double>(nonzero) / abs_sum : 1.0;
    problem.linear.setZero(n);
    std::int64_t stored = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double value = linear[i] * problem.scale;
        if (std::abs(value) > kCoefficientDropThreshold) {
            problem.linear[i] = value;
            ++stored;
        }
        for (std::int64_t j = i + 1; j < n; ++j) {
            const double q = quad_upper(i, j) * problem.scale;
            if (std::abs(q) > kCoefficientDropThreshold) {
                problem.quad.push_back({static_cast<int>(i), static_cast<int>(j), q});
                ++stored;
            }
        }
    }
    problem.degenerate = (stored == 0);
    return problem;
}

double objective(const QcboProblem& problem, std::span<const std::uint8_t> x) {
    if (static_cast<int>(x.size()) != problem.n)
        throw std::invalid_argument("objective: assignment size mismatch");
    double value = 0.0;
    for (int i = 0; i < problem.n; ++i)
        if (x[static_cast<std::size_t>(i)]) value += problem.linear[i];
    for (const QuadTerm& term : problem.quad)
        if (x[static_cast<std::size_t>(term.i)] && x[static_cast<std::size_t>(term.j)])
            value += term.value;
    return value;
}

void write_problem(std::ostream& out, const QcboProblem& problem) {
    out.precision(17);
    out << problem.n << ' ' << problem.k << ' ' << problem.scale << '\n';
    for (int i = 0; i < problem.n; ++i)
        if (problem.linear[i] != 0.0) out << i << ' ' << i << ' ' << problem.linear[i] << '\n';
    for (const QuadTerm& term : problem.quad)
        out << term.i << ' ' << term.j << ' ' << term.value << '\n';
}

void write_problem_file(const std::string& path, const QcboProblem& problem) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open problem dump for writing: " + path);
    write_problem(out, problem);
}

QcboProblem read_problem(std::istream& in) {
    QcboProblem problem;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("problem dump: missing header");
    {
        std::istringstream header(line);
        if (!(header >> problem.n >> problem.k >> problem.scale))
            throw std::runtime_error("problem dump: malformed header '" + line + "'");
    }
    if (problem.n < 1 || problem.k < 0 || problem.k > problem.n)
        throw std::runtime_error("problem dump: invalid n/k in header");
    problem.linear.setZero(problem.n);
    std::int64_t stored = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        int i = 0;
        int j = 0;
        double value = 0.0;
        if (!(row >> i >> j >> value))
            throw std::runtime_error("problem dump: malformed row '" + line + "'");
        if (i < 0 || j < 0 || i >= problem.n || j >= problem.n || i > j)
            throw std::runtime_error("problem dump: bad indices in row '" + line + "'");
        if (i == j)
            problem.linear[i] = value;
        else
            problem.quad.push_back({i, j, value});
        ++stored;
    }
    problem.degenerate = (stored == 0);
    return problem;
}

QcboProblem read_problem_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open problem dump: " + path);
    return read_problem(in);
}

}  // namespace icbs
