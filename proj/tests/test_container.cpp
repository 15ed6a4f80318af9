#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vitq/container.hpp"
#include "vitq/synthetic.hpp"

using namespace vitq;
using nlohmann::json;

namespace {

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "vitq_container_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

ViTModel model_fixture(std::uint64_t seed) {
    ViTConfig cfg;
    cfg.image_height = 8;
    cfg.image_width = 8;
    cfg.channels = 2;
    cfg.patch_size = 4;
    cfg.embed_dim = 8;
    cfg.num_layers = 2;
    cfg.num_heads = 2;
    cfg.mlp_dim = 12;
    cfg.num_classes = 3;
    return make_toy_model(cfg, seed);
}

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Hand-built container with an arbitrary manifest, for negative tests.
std::string craft(const json& manifest, const std::string& blob) {
    const std::string m = manifest.dump();
    std::string out = "VITQ";
    const std::uint32_t version = 1;
    const std::uint64_t len = m.size();
    out.append(reinterpret_cast<const char*>(&version), 4);
    out.append(reinterpret_cast<const char*>(&len), 8);
    out += m;
    out += blob;
    return out;
}

} // namespace

TEST_CASE("model round-trip is bit-exact") {
    const auto path = (temp_dir() / "roundtrip.vitm").string();
    const ViTModel m = model_fixture(42);
    save_model(m, path);
    const ViTModel loaded = load_model(path);
    CHECK(loaded == m);

    // saving the loaded model reproduces identical bytes
    const auto path2 = (temp_dir() / "roundtrip2.vitm").string();
    save_model(loaded, path2);
    CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("truncated blob is a length error") {
    const auto path = (temp_dir() / "trunc.vitm").string();
    save_model(model_fixture(1), path);
    std::string bytes = read_bytes(path);
    bytes.resize(bytes.size() - 12);
    write_bytes(path, bytes);
    CHECK_THROWS_AS(load_model(path), BlobLengthError);
}

TEST_CASE("manifest/blob conflicts are shape errors") {
    const std::string blob(16, '\0'); // four floats

    SUBCASE("offset disagrees with preceding shapes") {
        const json manifest{{"format", "vitq-container"},
                            {"kind", "tensors"},
                            {"tensors",
                             json::array({json{{"name", "a"}, {"shape", {2}}, {"offset", 0}},
                                          json{{"name", "b"}, {"shape", {2}}, {"offset", 12}}})}};
        const auto path = (temp_dir() / "conflict.vitt").string();
        write_bytes(path, craft(manifest, blob));
        CHECK_THROWS_AS(load_tensors(path), ManifestShapeError);
    }

    SUBCASE("directory shorter than the blob") {
        const json manifest{{"format", "vitq-container"},
                            {"kind", "tensors"},
                            {"tensors",
                             json::array({json{{"name", "a"}, {"shape", {2}}, {"offset", 0}}})}};
        const auto path = (temp_dir() / "short.vitt").string();
        write_bytes(path, craft(manifest, blob));
        CHECK_THROWS_AS(load_tensors(path), BlobLengthError);
    }

    SUBCASE("directory shape disagrees with tensor offsets") {
        const auto path = (temp_dir() / "badnumel.vitm").string();
        save_model(model_fixture(2), path);
        std::string bytes = read_bytes(path);
        // same-length patch (framing must stay intact): class_token [8] -> [9]
        const auto name_pos = bytes.find("\"name\":\"class_token\"");
        REQUIRE(name_pos != std::string::npos);
        const auto pos = bytes.find("\"shape\":[8]", name_pos);
        REQUIRE(pos != std::string::npos);
        std::string patched = bytes;
        patched.replace(pos + 9, 1, "9");
        REQUIRE(patched.size() == bytes.size());
        write_bytes(path, patched);
        CHECK_THROWS_AS(load_model(path), ManifestShapeError);
    }

    SUBCASE("tensor shape breaks the model contract") {
        const auto path = (temp_dir() / "badshape.vitm").string();
        save_model(model_fixture(2), path);
        std::string bytes = read_bytes(path);
        // transposed pos_embed keeps the element count, violates the config
        const auto name_pos = bytes.find("\"name\":\"pos_embed\"");
        REQUIRE(name_pos != std::string::npos);
        const auto pos = bytes.find("\"shape\":[5,8]", name_pos);
        REQUIRE(pos != std::string::npos);
        std::string patched = bytes;
        patched.replace(pos + 8, 5, "[8,5]");
        REQUIRE(patched.size() == bytes.size());
        write_bytes(path, patched);
        CHECK_THROWS_AS(load_model(path), ManifestShapeError);
    }
}

TEST_CASE("non-finite payloads are rejected") {
    const auto path = (temp_dir() / "nan.vitt").string();
    Tensor t({2}, {1.0f, 2.0f});
    save_tensors({{"a", t}}, path);
    std::string bytes = read_bytes(path);
    const std::uint32_t nan_bits = 0x7FC00000u;
    std::memcpy(bytes.data() + bytes.size() - 8, &nan_bits, 4);
    write_bytes(path, bytes);
    CHECK_THROWS_AS(load_tensors(path), NonFiniteError);
}

TEST_CASE("wrong magic and missing files") {
    const auto path = (temp_dir() / "garbage.vitm").string();
    write_bytes(path, "not a container at all");
    CHECK_THROWS_AS(load_model(path), ContainerError);
    CHECK_THROWS_AS(load_model((temp_dir() / "does_not_exist.vitm").string()), IoError);
}

TEST_CASE("calibration containers") {
    const auto path = (temp_dir() / "samples.vitt").string();
    Rng rng(9);
    std::vector<Tensor> samples;
    for (int i = 0; i < 3; ++i) samples.push_back(rng.normal_tensor({4, 4, 2}, 1.0));
    save_calibration(samples, path);
    const std::vector<Tensor> loaded = load_calibration(path);
    REQUIRE(loaded.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(loaded[i] == samples[i]);

    // mixed shapes are rejected
    std::vector<std::pair<std::string, Tensor>> bad;
    bad.emplace_back("sample_000000", Tensor({2, 2}));
    bad.emplace_back("sample_000001", Tensor({3, 2}));
    const auto bad_path = (temp_dir() / "mixed.vitt").string();
    save_tensors(bad, bad_path);
    CHECK_THROWS_AS(load_calibration(bad_path), ManifestShapeError);

    // an empty sample set is an explicit error
    const auto empty_path = (temp_dir() / "empty.vitt").string();
    save_tensors({}, empty_path);
    CHECK_THROWS_AS(load_calibration(empty_path), ContainerError);
}

TEST_CASE("hooks sidecar round-trip") {
    const auto path = (temp_dir() / "hooks.json").string();
    QuantHooks hooks;
    hooks["embed.w"] = QuantParams{0.015625f, 8};
    hooks["layer0.msa.q.in"] = QuantParams{0.1234567f, 4};
    save_hooks(hooks, path);
    const QuantHooks loaded = load_hooks(path);
    CHECK(loaded == hooks);

    write_bytes(path, "{\"format\": \"something-else\"}");
    CHECK_THROWS_AS(load_hooks(path), ContainerError);
}
