#include "vitq/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace vitq {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'V', 'I', 'T', 'Q'};
constexpr std::uint32_t kVersion = 1;

void append_le32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void append_le64(std::string& out, std::uint64_t v) {
    append_le32(out, static_cast<std::uint32_t>(v & 0xffffffffull));
    append_le32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t read_le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t read_le64(const unsigned char* p) {
    return static_cast<std::uint64_t>(read_le32(p)) |
           (static_cast<std::uint64_t>(read_le32(p + 4)) << 32);
}

void append_blob(std::string& out, const Tensor& t) {
    for (float v : t.values()) {
        append_le32(out, std::bit_cast<std::uint32_t>(v));
    }
}

json config_to_json(const ViTConfig& c) {
    return json{{"image_height", c.image_height},
                {"image_width", c.image_width},
                {"channels", c.channels},
                {"patch_size", c.patch_size},
                {"embed_dim", c.embed_dim},
                {"num_layers", c.num_layers},
                {"num_heads", c.num_heads},
                {"mlp_dim", c.mlp_dim},
                {"num_classes", c.num_classes},
                {"layer_norm_eps", static_cast<double>(c.layer_norm_eps)},
                {"scale_per_head", c.scale_per_head}};
}

ViTConfig config_from_json(const json& j) {
    ViTConfig c;
    c.image_height = j.at("image_height").get<std::size_t>();
    c.image_width = j.at("image_width").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.patch_size = j.at("patch_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.mlp_dim = j.at("mlp_dim").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.layer_norm_eps = static_cast<float>(j.at("layer_norm_eps").get<double>());
    c.scale_per_head = j.at("scale_per_head").get<bool>();
    return c;
}

void write_container(const std::string& path, const std::string& kind, const json& extra,
                     const std::vector<std::pair<std::string, const Tensor*>>& directory) {
    json manifest = extra;
    manifest["format"] = "vitq-container";
    manifest["kind"] = kind;
    json dir = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : directory) {
        dir.push_back(json{{"name", name}, {"shape", tensor->shape()}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(tensor->numel()) * 4;
    }
    manifest["tensors"] = dir;
    const std::string mtext = manifest.dump();

    std::string out;
    out.append(kMagic, 4);
    append_le32(out, kVersion);
    append_le64(out, mtext.size());
    out += mtext;
    for (const auto& [name, tensor] : directory) append_blob(out, *tensor);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing '" + path + "'");
}

struct LoadedContainer {
    json manifest;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

LoadedContainer read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw ContainerError("'" + path + "' is not a vitq container");
    }
    const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t version = read_le32(p + 4);
    if (version != kVersion) {
        throw ContainerError("unsupported container version " + std::to_string(version));
    }
    const std::uint64_t mlen = read_le64(p + 8);
    if (16 + mlen > bytes.size()) throw ContainerError("manifest extends past end of file");

    json manifest;
    try {
        manifest = json::parse(bytes.substr(16, mlen));
    } catch (const json::exception& e) {
        throw ContainerError("bad manifest in '" + path + "': " + e.what());
    }

    const std::size_t blob_begin = 16 + static_cast<std::size_t>(mlen);
    const std::size_t blob_size = bytes.size() - blob_begin;

    LoadedContainer out;
    std::uint64_t expected_offset = 0;
    for (const json& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        if (offset != expected_offset) {
            throw ManifestShapeError("tensor '" + name + "' offset " + std::to_string(offset) +
                                     " conflicts with directory shapes (expected " +
                                     std::to_string(expected_offset) + ")");
        }
        const std::size_t numel = Tensor::shape_numel(shape);
        expected_offset += static_cast<std::uint64_t>(numel) * 4;
        if (expected_offset > blob_size) {
            throw BlobLengthError("blob of '" + path + "' is " + std::to_string(blob_size) +
                                  " bytes, directory needs at least " +
                                  std::to_string(expected_offset));
        }
        std::vector<float> data(numel);
        const unsigned char* src = p + blob_begin + offset;
        for (std::size_t i = 0; i < numel; ++i) {
            data[i] = std::bit_cast<float>(read_le32(src + i * 4));
        }
        Tensor t(shape, std::move(data));
        if (!t.all_finite()) {
            throw NonFiniteError("tensor '" + name + "' in '" + path +
                                 "' contains non-finite values");
        }
        out.tensors.emplace_back(name, std::move(t));
    }
    if (expected_offset != blob_size) {
        throw BlobLengthError("blob of '" + path + "' is " + std::to_string(blob_size) +
                              " bytes, directory accounts for " +
                              std::to_string(expected_offset));
    }
    out.manifest = std::move(manifest);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> model_directory(const ViTModel& m) {
    std::vector<std::pair<std::string, const Tensor*>> dir;
    dir.emplace_back("patch_embed", &m.patch_embed_w);
    dir.emplace_back("pos_embed", &m.pos_embed);
    dir.emplace_back("class_token", &m.class_token);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const LayerWeights& lw = m.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        dir.emplace_back(p + "wq", &lw.wq);
        dir.emplace_back(p + "wk", &lw.wk);
        dir.emplace_back(p + "wv", &lw.wv);
        dir.emplace_back(p + "wo", &lw.wo);
        dir.emplace_back(p + "w1", &lw.w1);
        dir.emplace_back(p + "b1", &lw.b1);
        dir.emplace_back(p + "w2", &lw.w2);
        dir.emplace_back(p + "b2", &lw.b2);
        dir.emplace_back(p + "ln1.gamma", &lw.ln1_gamma);
        dir.emplace_back(p + "ln1.beta", &lw.ln1_beta);
        dir.emplace_back(p + "ln2.gamma", &lw.ln2_gamma);
        dir.emplace_back(p + "ln2.beta", &lw.ln2_beta);
    }
    dir.emplace_back("head.w", &m.head_w);
    dir.emplace_back("head.b", &m.head_b);
    return dir;
}

} // namespace

void save_model(const ViTModel& m, const std::string& path) {
    m.validate();
    write_container(path, "model", json{{"config", config_to_json(m.config)}},
                    model_directory(m));
}

ViTModel load_model(const std::string& path) {
    LoadedContainer c = read_container(path);
    if (c.manifest.value("kind", "") != "model") {
        throw ContainerError("'" + path + "' is not a model container");
    }
    ViTModel m;
    try {
        m.config = config_from_json(c.manifest.at("config"));
    } catch (const json::exception& e) {
        throw ContainerError("bad model config in '" + path + "': " + e.what());
    }

    std::map<std::string, Tensor> by_name;
    for (auto& [name, tensor] : c.tensors) by_name.emplace(name, std::move(tensor));
    auto take = [&](const std::string& name) -> Tensor {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw ManifestShapeError("model container is missing tensor '" + name + "'");
        }
        Tensor t = std::move(it->second);
        by_name.erase(it);
        return t;
    };

    m.patch_embed_w = take("patch_embed");
    m.pos_embed = take("pos_embed");
    m.class_token = take("class_token");
    m.layers.resize(m.config.num_layers);
    for (std::size_t l = 0; l < m.config.num_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        LayerWeights& lw = m.layers[l];
        lw.wq = take(p + "wq");
        lw.wk = take(p + "wk");
        lw.wv = take(p + "wv");
        lw.wo = take(p + "wo");
        lw.w1 = take(p + "w1");
        lw.b1 = take(p + "b1");
        lw.w2 = take(p + "w2");
        lw.b2 = take(p + "b2");
        lw.ln1_gamma = take(p + "ln1.gamma");
        lw.ln1_beta = take(p + "ln1.beta");
        lw.ln2_gamma = take(p + "ln2.gamma");
        lw.ln2_beta = take(p + "ln2.beta");
    }
    m.head_w = take("head.w");
    m.head_b = take("head.b");
    if (!by_name.empty()) {
        throw ManifestShapeError("model container has unexpected tensor '" +
                                 by_name.begin()->first + "'");
    }
    m.validate();
    return m;
}

void save_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors,
                  const std::string& path) {
    std::vector<std::pair<std::string, const Tensor*>> dir;
    dir.reserve(tensors.size());
    for (const auto& [name, tensor] : tensors) dir.emplace_back(name, &tensor);
    write_container(path, "tensors", json::object(), dir);
}

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path) {
    LoadedContainer c = read_container(path);
    if (c.manifest.value("kind", "") != "tensors") {
        throw ContainerError("'" + path + "' is not a tensor container");
    }
    return std::move(c.tensors);
}

void save_calibration(const std::vector<Tensor>& samples, const std::string& path) {
    std::vector<std::pair<std::string, Tensor>> entries;
    entries.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%06zu", i);
        entries.emplace_back(name, samples[i]);
    }
    save_tensors(entries, path);
}

std::vector<Tensor> load_calibration(const std::string& path) {
    std::vector<std::pair<std::string, Tensor>> entries = load_tensors(path);
    if (entries.empty()) throw ContainerError("calibration set in '" + path + "' is empty");
    std::vector<Tensor> samples;
    samples.reserve(entries.size());
    for (auto& [name, tensor] : entries) {
        if (!samples.empty() && !samples.front().same_shape(tensor)) {
            throw ManifestShapeError("calibration sample '" + name +
                                     "' shape differs from the first sample");
        }
        samples.push_back(std::move(tensor));
    }
    return samples;
}

void save_hooks(const QuantHooks& hooks, const std::string& path) {
    json sites = json::object();
    for (const auto& [id, params] : hooks) {
        sites[id] = json{{"delta", static_cast<double>(params.delta)}, {"bits", params.bits}};
    }
    const json doc{{"format", "vitq-hooks"}, {"sites", sites}};
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << doc.dump(2) << "\n";
    if (!f) throw IoError("failed writing '" + path + "'");
}

QuantHooks load_hooks(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::exception& e) {
        throw ContainerError("bad hooks file '" + path + "': " + e.what());
    }
    if (doc.value("format", "") != "vitq-hooks") {
        throw ContainerError("'" + path + "' is not a hooks file");
    }
    QuantHooks hooks;
    for (const auto& [id, entry] : doc.at("sites").items()) {
        QuantParams p;
        p.delta = static_cast<float>(entry.at("delta").get<double>());
        p.bits = entry.at("bits").get<int>();
        validate(p);
        hooks[id] = p;
    }
    return hooks;
}

} // namespace vitq
