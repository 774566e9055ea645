#include <doctest.h>

#include <filesystem>

#include "icbs/checkpoint.hpp"
#include "icbs/prune_state.hpp"
#include "support.hpp"

using namespace icbs;

namespace {

std::string fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "icbs_ckpt" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace

TEST_CASE("checkpoints round-trip weights, biases and metadata bitwise") {
    Mlp model = Mlp::feedforward({6, 9, 4}, 21);
    model.layer(0).bias.setConstant(0.25);
    model.snapshot_original();
    TrainingMeta meta;
    meta.seed = 21;
    meta.epochs = 17;
    meta.lr = 0.05;
    meta.batch_size = 32;
    meta.final_train_loss = 0.123456789;
    meta.train_samples = 999;
    meta.dataset = "synthetic";

    const std::string dir = fresh_dir("roundtrip");
    save_checkpoint(dir, model, meta);
    const LoadedCheckpoint loaded = load_checkpoint(dir);
    REQUIRE(loaded.model.num_layers() == 2);
    for (int l = 0; l < 2; ++l) {
        CHECK(loaded.model.layer(l).weights == model.layer(l).weights);
        CHECK(loaded.model.layer(l).bias == model.layer(l).bias);
        CHECK(loaded.model.layer(l).relu == model.layer(l).relu);
    }
    CHECK(loaded.meta.epochs == 17);
    CHECK(loaded.meta.lr == 0.05);
    CHECK(loaded.meta.final_train_loss == 0.123456789);
    CHECK(loaded.meta.dataset == "synthetic");
    CHECK_FALSE(loaded.mask.has_value());
    // loaded checkpoints snapshot w0 := wc
    CHECK(loaded.model.original_weight(3) == model.original_weight(3));
}

TEST_CASE("pruned checkpoints carry the mask blob") {
    Mlp model = Mlp::feedforward({4, 6, 3}, 5);
    model.snapshot_original();
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(model.num_prunable()), 0);
    for (std::size_t i = 0; i < mask.size(); i += 3) mask[i] = 1;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) model.set_current_weight(static_cast<std::int64_t>(i), 0.0);

    OrderedJson pruning_info;
    pruning_info["method"] = "magnitude";
    const std::string dir = fresh_dir("mask");
    save_checkpoint(dir, model, TrainingMeta{}, &mask, &pruning_info);
    const LoadedCheckpoint loaded = load_checkpoint(dir);
    REQUIRE(loaded.mask.has_value());
    CHECK(*loaded.mask == mask);
    CHECK(loaded.manifest.at("pruning").at("method") == "magnitude");
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) CHECK(loaded.model.current_weight(static_cast<std::int64_t>(i)) == 0.0);
}

TEST_CASE("saving twice produces byte-identical artifacts") {
    Mlp model = Mlp::feedforward({5, 7, 2}, 9);
    model.snapshot_original();
    TrainingMeta meta;
    meta.final_train_loss = 1.0 / 3.0;
    const std::string a = fresh_dir("bytes_a");
    const std::string b = fresh_dir("bytes_b");
    save_checkpoint(a, model, meta);
    save_checkpoint(b, model, meta);
    for (const char* file :
         {"manifest.json", "layer0.weight.bin", "layer0.bias.bin", "layer1.weight.bin"}) {
        CHECK(testing::read_file_bytes(a + "/" + file) == testing::read_file_bytes(b + "/" + file));
    }
}

TEST_CASE("corrupted manifests are rejected with named errors") {
    const std::string dir = fresh_dir("corrupt");
    CHECK_THROWS_AS(load_checkpoint(dir), std::runtime_error);
    {
        std::ofstream out(dir + "/manifest.json");
        out << "{\"format\": \"other\"}";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(dir), doctest::Contains("format"), std::runtime_error);
}

TEST_CASE("blob shorter than the manifest promises is an error") {
    Mlp model = Mlp::feedforward({3, 4, 2}, 2);
    model.snapshot_original();
    const std::string dir = fresh_dir("short");
    save_checkpoint(dir, model, TrainingMeta{});
    std::filesystem::resize_file(std::filesystem::path(dir) / "layer0.weight.bin", 8);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir), doctest::Contains("shorter"), std::runtime_error);
}
