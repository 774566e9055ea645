#pragma once

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "icbs/qcbo.hpp"
#include "icbs/rng.hpp"
#include "icbs/solver.hpp"

namespace icbs::testing {

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0;
    double va = 0.0;
    double vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

// Random dense QCBO instance with uniform(-1, 1) coefficients.
inline QcboProblem random_instance(int n, int k, Rng& rng) {
    QcboProblem problem;
    problem.n = n;
    problem.k = k;
    problem.linear.resize(n);
    for (int i = 0; i < n; ++i) problem.linear[i] = 2.0 * rng.next_double() - 1.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            problem.quad.push_back({i, j, 2.0 * rng.next_double() - 1.0});
    return problem;
}

// Unconstrained exhaustive QUBO minimizer (oracle for the penalty check);
// ties resolve to the lexicographically smallest assignment.
inline std::pair<std::vector<std::uint8_t>, double> brute_force_qubo(const QuboProblem& qubo) {
    const int n = qubo.base.n;
    std::vector<std::uint8_t> x(static_cast<std::size_t>(n), 0);
    std::vector<std::uint8_t> best_x;
    double best = 0.0;
    bool have = false;
    for (std::uint32_t bits = 0; bits < (1u << n); ++bits) {
        for (int i = 0; i < n; ++i)
            x[static_cast<std::size_t>(i)] = (bits >> (n - 1 - i)) & 1u;
        const double value = qubo.objective(x);
        if (!have || value < best) {
            have = true;
            best = value;
            best_x = x;
        }
    }
    return {best_x, best};
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Least-squares-free logistic regression fit by plain gradient descent; an
// independent linear-separability oracle for tiny 2-class problems.
inline double logistic_fit_accuracy(const Eigen::MatrixXd& features,
                                    const std::vector<int>& labels, int iters = 500,
                                    double lr = 0.5) {
    const Eigen::Index m = features.rows();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(features.cols());
    double b = 0.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXd z = features * w;
        z.array() += b;
        Eigen::VectorXd p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
        Eigen::VectorXd err(m);
        for (Eigen::Index s = 0; s < m; ++s)
            err[s] = p[s] - static_cast<double>(labels[static_cast<std::size_t>(s)]);
        w -= (lr / static_cast<double>(m)) * (features.transpose() * err);
        b -= (lr / static_cast<double>(m)) * err.sum();
    }
    Eigen::VectorXd z = features * w;
    z.array() += b;
    std::int64_t correct = 0;
    for (Eigen::Index s = 0; s < m; ++s)
        if ((z[s] > 0.0 ? 1 : 0) == labels[static_cast<std::size_t>(s)]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(m);
}

// Nearest-centroid classifier accuracy (centroids from train, scored on
// valid): a lower bound oracle for attainable accuracy on blob data.
inline double nearest_centroid_accuracy(const Eigen::MatrixXd& train_x,
                                        const std::vector<int>& train_y,
                                        const Eigen::MatrixXd& valid_x,
                                        const std::vector<int>& valid_y, int n_classes) {
    Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(n_classes, train_x.cols());
    std::vector<std::int64_t> counts(static_cast<std::size_t>(n_classes), 0);
    for (Eigen::Index s = 0; s < train_x.rows(); ++s) {
        centroids.row(train_y[static_cast<std::size_t>(s)]) += train_x.row(s);
        ++counts[static_cast<std::size_t>(train_y[static_cast<std::size_t>(s)])];
    }
    for (int c = 0; c < n_classes; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0)
            centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    std::int64_t correct = 0;
    for (Eigen::Index s = 0; s < valid_x.rows(); ++s) {
        int arg = 0;
        double best = (valid_x.row(s) - centroids.row(0)).squaredNorm();
        for (int c = 1; c < n_classes; ++c) {
            const double dist = (valid_x.row(s) - centroids.row(c)).squaredNorm();
            if (dist < best) {
                best = dist;
                arg = c;
            }
        }
        if (arg == valid_y[static_cast<std::size_t>(s)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(valid_x.rows());
}

}  // namespace icbs::testing
