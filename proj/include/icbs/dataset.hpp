#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "icbs/rng.hpp"

namespace icbs {

// One minibatch: m feature rows plus class labels.
struct Batch {
    Eigen::MatrixXd features;  // m x in_dim
    std::vector<int> labels;   // m entries, each < num_classes

    Eigen::Index size() const { return features.rows(); }
};

struct Dataset {
    Eigen::MatrixXd features;  // n_samples x dim, values in [0, 1]
    std::vector<int> labels;
    std::string split_tag;  // "train" or "valid"

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
    int num_classes() const;
};

// Reads an IDX image/label file pair (the Fashion-MNIST on-disk format).
// Headers are big-endian; pixels are unsigned bytes and get scaled by 1/255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split_tag = "train");

// Gaussian class blobs for dataset-free runs. Class c is centered on a unit
// coordinate vector (distinct coordinate per class, so all means sit on the
// unit hypersphere), with isotropic noise of the given sigma, clamped to
// [0, 1]. Deterministic for a fixed seed.
Dataset synthetic_blobs(std::uint64_t seed, std::int64_t n_samples, int n_classes, int dim,
                        double sigma = 0.3, const std::string& split_tag = "train");

// Uniform sample of `size` distinct rows; a full-size draw is a permutation.
Batch sample_batch(const Dataset& dataset, std::int64_t size, Rng& rng);

}  // namespace icbs
