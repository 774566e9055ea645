#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icbs/mlp.hpp"

namespace icbs {

using OrderedJson = nlohmann::ordered_json;

struct TrainingMeta {
    std::uint64_t seed = 0;
    int epochs = 0;
    double lr = 0.0;
    std::int64_t batch_size = 0;
    double final_train_loss = 0.0;
    std::int64_t train_samples = 0;
    std::string dataset;
};

// Checkpoint layout: manifest.json plus one little-endian float64 row-major
// blob per tensor, plus an optional bit-packed prune mask. The manifest is
// the source of truth for shapes, blob names and byte counts.
void save_checkpoint(const std::string& dir, const Mlp& model, const TrainingMeta& meta,
                     const std::vector<std::uint8_t>* mask = nullptr,
                     const OrderedJson* pruning_info = nullptr);

struct LoadedCheckpoint {
    Mlp model;
    TrainingMeta meta;
    std::optional<std::vector<std::uint8_t>> mask;
    OrderedJson manifest;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace icbs
