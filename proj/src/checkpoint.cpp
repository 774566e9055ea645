#include "icbs/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "icbs/prune_state.hpp"

namespace icbs {

namespace {

namespace fs = std::filesystem;

std::uint64_t bswap64(std::uint64_t v) {
    v = ((v & 0x00ff00ff00ff00ffull) << 8) | ((v >> 8) & 0x00ff00ff00ff00ffull);
    v = ((v & 0x0000ffff0000ffffull) << 16) | ((v >> 16) & 0x0000ffff0000ffffull);
    return (v << 32) | (v >> 32);
}

void write_le_doubles(const fs::path& path, const std::vector<double>& values) {
    std::vector<std::uint8_t> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &values[i], 8);
        if constexpr (std::endian::native == std::endian::big) bits = bswap64(bits);
        std::memcpy(bytes.data() + i * 8, &bits, 8);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> read_le_doubles(const fs::path& path, std::size_t expected_bytes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    std::vector<std::uint8_t> bytes(expected_bytes);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(expected_bytes));
    if (static_cast<std::size_t>(in.gcount()) != expected_bytes)
        throw std::runtime_error("checkpoint: blob " + path.string() + " shorter than manifest");
    std::vector<double> values(expected_bytes / 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, bytes.data() + i * 8, 8);
        if constexpr (std::endian::native == std::endian::big) bits = bswap64(bits);
        std::memcpy(&values[i], &bits, 8);
    }
    return values;
}

std::vector<double> matrix_row_major(const Eigen::MatrixXd& m) {
    std::vector<double> flat(static_cast<std::size_t>(m.size()));
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat[i++] = m(r, c);
    return flat;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Mlp& model, const TrainingMeta& meta,
                     const std::vector<std::uint8_t>* mask, const OrderedJson* pruning_info) {
    const fs::path root(dir);
    fs::create_directories(root);

    OrderedJson manifest;
    manifest["format"] = "icbs-checkpoint-v1";

    OrderedJson topology;
    topology["input_dim"] = model.input_dim();
    OrderedJson layers = OrderedJson::array();
    for (int l = 0; l < model.num_layers(); ++l) {
        const DenseLayer& layer = model.layer(l);
        layers.push_back({{"out", layer.weights.rows()},
                          {"activation", layer.relu ? "relu" : "identity"}});
    }
    topology["layers"] = layers;
    manifest["topology"] = topology;

    manifest["training"] = {{"seed", meta.seed},
                            {"epochs", meta.epochs},
                            {"lr", meta.lr},
                            {"batch_size", meta.batch_size},
                            {"final_train_loss", meta.final_train_loss},
                            {"train_samples", meta.train_samples},
                            {"dataset", meta.dataset}};
    manifest["prunable"] = model.prunable();

    OrderedJson tensors = OrderedJson::array();
    for (int l = 0; l < model.num_layers(); ++l) {
        const DenseLayer& layer = model.layer(l);
        const std::string weight_file = "layer" + std::to_string(l) + ".weight.bin";
        const std::string bias_file = "layer" + std::to_string(l) + ".bias.bin";
        write_le_doubles(root / weight_file, matrix_row_major(layer.weights));
        std::vector<double> bias(layer.bias.data(), layer.bias.data() + layer.bias.size());
        write_le_doubles(root / bias_file, bias);
        tensors.push_back({{"name", "layer" + std::to_string(l) + ".weight"},
                           {"rows", layer.weights.rows()},
                           {"cols", layer.weights.cols()},
                           {"file", weight_file},
                           {"bytes", layer.weights.size() * 8}});
        tensors.push_back({{"name", "layer" + std::to_string(l) + ".bias"},
                           {"rows", layer.bias.size()},
                           {"cols", 1},
                           {"file", bias_file},
                           {"bytes", layer.bias.size() * 8}});
    }
    manifest["tensors"] = tensors;

    if (mask != nullptr) {
        const auto packed = pack_mask(*mask);
        std::ofstream mask_out(root / "mask.bin", std::ios::binary | std::ios::trunc);
        if (!mask_out) throw std::runtime_error("checkpoint: cannot write mask.bin");
        mask_out.write(reinterpret_cast<const char*>(packed.data()),
                       static_cast<std::streamsize>(packed.size()));
        std::int64_t pruned = 0;
        for (std::uint8_t bit : *mask) pruned += bit ? 1 : 0;
        manifest["mask"] = {{"file", "mask.bin"},
                            {"bits", mask->size()},
                            {"bytes", packed.size()},
                            {"pruned", pruned}};
    }
    if (pruning_info != nullptr) manifest["pruning"] = *pruning_info;

    std::ofstream out(root / "manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write manifest.json");
    out << manifest.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream in(root / "manifest.json");
    if (!in) throw std::runtime_error("checkpoint: cannot open " + (root / "manifest.json").string());
    OrderedJson manifest;
    try {
        in >> manifest;
    } catch (const std::exception& err) {
        throw std::runtime_error("checkpoint: manifest.json parse error: " +
                                 std::string(err.what()));
    }
    if (manifest.value("format", "") != "icbs-checkpoint-v1")
        throw std::runtime_error("checkpoint: unknown format field");

    const auto& topology = manifest.at("topology");
    const int num_layers = static_cast<int>(topology.at("layers").size());
    std::vector<DenseLayer> layers(static_cast<std::size_t>(num_layers));
    for (int l = 0; l < num_layers; ++l)
        layers[static_cast<std::size_t>(l)].relu =
            topology.at("layers").at(static_cast<std::size_t>(l)).at("activation") == "relu";

    for (const auto& tensor : manifest.at("tensors")) {
        const std::string name = tensor.at("name");
        const std::int64_t rows = tensor.at("rows");
        const std::int64_t cols = tensor.at("cols");
        const std::size_t bytes = tensor.at("bytes");
        if (bytes != static_cast<std::size_t>(rows * cols) * 8)
            throw std::runtime_error("checkpoint: bytes/shape mismatch for tensor " + name);
        const auto flat = read_le_doubles(root / std::string(tensor.at("file")), bytes);

        const auto dot = name.find('.');
        const int layer_id = std::stoi(name.substr(5, dot - 5));
        if (layer_id < 0 || layer_id >= num_layers)
            throw std::runtime_error("checkpoint: tensor " + name + " references missing layer");
        DenseLayer& layer = layers[static_cast<std::size_t>(layer_id)];
        if (name.ends_with(".weight")) {
            layer.weights.resize(rows, cols);
            std::size_t i = 0;
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t c = 0; c < cols; ++c) layer.weights(r, c) = flat[i++];
        } else if (name.ends_with(".bias")) {
            layer.bias.resize(rows);
            for (std::int64_t r = 0; r < rows; ++r)
                layer.bias[r] = flat[static_cast<std::size_t>(r)];
        } else {
            throw std::runtime_error("checkpoint: unrecognized tensor name " + name);
        }
    }
    for (int l = 0; l < num_layers; ++l) {
        const auto& layer = layers[static_cast<std::size_t>(l)];
        if (layer.weights.size() == 0 || layer.bias.size() != layer.weights.rows())
            throw std::runtime_error("checkpoint: incomplete tensors for layer " +
                                     std::to_string(l));
    }

    LoadedCheckpoint loaded{
        Mlp::from_layers(std::move(layers), manifest.at("prunable").get<std::vector<int>>()),
        TrainingMeta{}, std::nullopt, manifest};
    loaded.model.snapshot_original();

    const auto& training = manifest.at("training");
    loaded.meta.seed = training.at("seed");
    loaded.meta.epochs = training.at("epochs");
    loaded.meta.lr = training.at("lr");
    loaded.meta.batch_size = training.at("batch_size");
    loaded.meta.final_train_loss = training.at("final_train_loss");
    loaded.meta.train_samples = training.at("train_samples");
    loaded.meta.dataset = training.at("dataset");

    if (manifest.contains("mask")) {
        const auto& mask_info = manifest.at("mask");
        const std::int64_t bits = mask_info.at("bits");
        const std::size_t bytes = mask_info.at("bytes");
        std::ifstream mask_in(root / std::string(mask_info.at("file")), std::ios::binary);
        if (!mask_in) throw std::runtime_error("checkpoint: cannot open mask blob");
        std::vector<std::uint8_t> packed(bytes);
        mask_in.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(bytes));
        if (static_cast<std::size_t>(mask_in.gcount()) != bytes)
            throw std::runtime_error("checkpoint: mask blob shorter than manifest");
        loaded.mask = unpack_mask(packed, bits);
    }
    return loaded;
}

}  // namespace icbs
