#include "icbs/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace icbs {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be_u32(std::ifstream& in, const std::string& field) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) throw std::runtime_error("idx: truncated header while reading " + field);
    return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
           (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

std::ifstream open_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("idx: cannot open " + path);
    return in;
}

}  // namespace

int Dataset::num_classes() const {
    int max_label = -1;
    for (int label : labels) max_label = std::max(max_label, label);
    return max_label + 1;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split_tag) {
    auto images = open_binary(images_path);
    auto labels = open_binary(labels_path);

    const std::uint32_t images_magic = read_be_u32(images, "images magic");
    if (images_magic != kImagesMagic)
        throw std::runtime_error("idx: bad images magic (got " + std::to_string(images_magic) +
                                 ", want " + std::to_string(kImagesMagic) + ")");
    const std::uint32_t labels_magic = read_be_u32(labels, "labels magic");
    if (labels_magic != kLabelsMagic)
        throw std::runtime_error("idx: bad labels magic (got " + std::to_string(labels_magic) +
                                 ", want " + std::to_string(kLabelsMagic) + ")");

    const std::uint32_t n_images = read_be_u32(images, "images count");
    const std::uint32_t rows = read_be_u32(images, "images rows");
    const std::uint32_t cols = read_be_u32(images, "images cols");
    const std::uint32_t n_labels = read_be_u32(labels, "labels count");
    if (n_images != n_labels)
        throw std::runtime_error("idx: count mismatch (images count " + std::to_string(n_images) +
                                 " vs labels count " + std::to_string(n_labels) + ")");

    const std::int64_t dim = std::int64_t(rows) * std::int64_t(cols);
    Dataset out;
    out.split_tag = split_tag;
    out.features.resize(n_images, dim);
    out.labels.resize(n_images);

    std::vector<unsigned char> pixel_row(static_cast<std::size_t>(dim));
    for (std::uint32_t s = 0; s < n_images; ++s) {
        images.read(reinterpret_cast<char*>(pixel_row.data()), dim);
        if (!images) throw std::runtime_error("idx: truncated images payload at sample " +
                                              std::to_string(s));
        for (std::int64_t p = 0; p < dim; ++p)
            out.features(s, p) = static_cast<double>(pixel_row[static_cast<std::size_t>(p)]) / 255.0;
        char label = 0;
        labels.read(&label, 1);
        if (!labels) throw std::runtime_error("idx: truncated labels payload at sample " +
                                              std::to_string(s));
        out.labels[s] = static_cast<unsigned char>(label);
    }
    return out;
}

Dataset synthetic_blobs(std::uint64_t seed, std::int64_t n_samples, int n_classes, int dim,
                        double sigma, const std::string& split_tag) {
    if (n_classes < 2) throw std::invalid_argument("synthetic_blobs: n_classes must be >= 2");
    if (dim < n_classes)
        throw std::invalid_argument("synthetic_blobs: dim must be >= n_classes");
    if (n_samples < 1) throw std::invalid_argument("synthetic_blobs: n_samples must be >= 1");

    // Class means are fixed by (n_classes, dim) alone: class c sits on unit
    // coordinate c * (dim / n_classes).
    std::vector<int> mean_coord(static_cast<std::size_t>(n_classes));
    const int stride = dim / n_classes;
    for (int c = 0; c < n_classes; ++c) mean_coord[static_cast<std::size_t>(c)] = c * stride;

    Rng rng(derive_seed(seed, 0x626c6f62));  // "blob"
    Dataset out;
    out.split_tag = split_tag;
    out.features.resize(n_samples, dim);
    out.labels.resize(static_cast<std::size_t>(n_samples));
    for (std::int64_t s = 0; s < n_samples; ++s) {
        const int label = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n_classes)));
        out.labels[static_cast<std::size_t>(s)] = label;
        for (int p = 0; p < dim; ++p) {
            const double mean = (p == mean_coord[static_cast<std::size_t>(label)]) ? 1.0 : 0.0;
            const double value = mean + sigma * rng.next_normal();
            out.features(s, p) = std::clamp(value, 0.0, 1.0);
        }
    }
    return out;
}

Batch sample_batch(const Dataset& dataset, std::int64_t size, Rng& rng) {
    const std::int64_t n = dataset.size();
    if (size < 1) throw std::invalid_argument("sample_batch: size must be >= 1");
    if (size > n) throw std::invalid_argument("sample_batch: size exceeds dataset size");

    // Partial Fisher-Yates: the first `size` slots are a uniform
    // without-replacement draw.
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (std::int64_t i = 0; i < size; ++i) {
        const std::int64_t j =
            i + static_cast<std::int64_t>(rng.bounded(static_cast<std::uint64_t>(n - i)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }

    Batch batch;
    batch.features.resize(size, dataset.dim());
    batch.labels.resize(static_cast<std::size_t>(size));
    for (std::int64_t i = 0; i < size; ++i) {
        const std::int64_t row = order[static_cast<std::size_t>(i)];
        batch.features.row(i) = dataset.features.row(row);
        batch.labels[static_cast<std::size_t>(i)] = dataset.labels[static_cast<std::size_t>(row)];
    }
    return batch;
}

}  // namespace icbs
