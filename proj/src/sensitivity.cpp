#include "vitq/sensitivity.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "vitq/kernels.hpp"
#include "vitq/svd.hpp"

namespace vitq {

using nlohmann::json;

std::string ModuleRef::id() const {
    return "layer" + std::to_string(layer) + (kind == Kind::MSA ? ".msa" : ".mlp");
}

std::vector<ModuleRef> enumerate_modules(const ViTConfig& cfg) {
    std::vector<ModuleRef> out;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        out.push_back({l, ModuleRef::Kind::MSA});
        out.push_back({l, ModuleRef::Kind::MLP});
    }
    return out;
}

ModuleRef parse_module_id(const std::string& id) {
    const auto dot = id.find('.');
    if (dot == std::string::npos || id.substr(0, 5) != "layer") {
        throw ValueError("bad module id '" + id + "'");
    }
    ModuleRef m;
    m.layer = static_cast<std::size_t>(std::stoul(id.substr(5, dot - 5)));
    const std::string kind = id.substr(dot + 1);
    if (kind == "msa") {
        m.kind = ModuleRef::Kind::MSA;
    } else if (kind == "mlp") {
        m.kind = ModuleRef::Kind::MLP;
    } else {
        throw ValueError("bad module id '" + id + "'");
    }
    return m;
}

std::uint64_t module_param_count(const ViTConfig& cfg, ModuleRef::Kind kind) {
    const std::uint64_t d = cfg.embed_dim, df = cfg.mlp_dim;
    return kind == ModuleRef::Kind::MSA ? 4 * d * d : 2 * d * df;
}

std::uint64_t module_weight_bytes(const ViTConfig& cfg, ModuleRef::Kind kind, int bits) {
    const std::uint64_t params = module_param_count(cfg, kind);
    return (params * static_cast<std::uint64_t>(bits) + 7) / 8;
}

namespace {

struct ProbeCache {
    ModuleRef module;
    std::vector<std::string> act_sites;
    std::vector<std::pair<std::string, const Tensor*>> weight_sites;
    std::string y_tap;
    bool per_head = false;
    std::size_t heads = 1;

    std::vector<Tensor> y;                 // per sample
    std::map<std::string, float> act_max;  // per activation site
    std::vector<std::vector<double>> nuc;  // per sample, per head (one entry for MLP)
    double mean_nuclear = 0.0;
};

ProbeCache probe_full_precision(const ViTModel& model, const std::vector<Tensor>& calib,
                                const ModuleRef& module) {
    if (calib.empty()) throw ValueError("sensitivity probe needs calibration samples");
    if (module.layer >= model.config.num_layers) {
        throw ValueError("unknown module '" + module.id() + "'");
    }
    const std::size_t l = module.layer;
    ProbeCache pc;
    pc.module = module;
    if (module.kind == ModuleRef::Kind::MSA) {
        pc.per_head = true;
        pc.heads = model.config.num_heads;
        pc.y_tap = scores_tap_id(l); // raw per-head score maps, {h, T, T}
        for (const char* leaf : {"q.in", "k.in", "v.in", "qk.q", "qk.k", "av.s", "av.v", "o.in"}) {
            pc.act_sites.push_back(site::msa(l, leaf));
        }
        const LayerWeights& lw = model.layers[l];
        pc.weight_sites = {{site::msa(l, "q.w"), &lw.wq},
                           {site::msa(l, "k.w"), &lw.wk},
                           {site::msa(l, "v.w"), &lw.wv},
                           {site::msa(l, "o.w"), &lw.wo}};
    } else {
        pc.y_tap = mlp_out_tap_id(l);
        pc.act_sites = {site::mlp(l, "fc1.in"), site::mlp(l, "fc2.in")};
        const LayerWeights& lw = model.layers[l];
        pc.weight_sites = {{site::mlp(l, "fc1.w"), &lw.w1}, {site::mlp(l, "fc2.w"), &lw.w2}};
    }

    ActivationTap tap;
    tap.wanted.insert(pc.act_sites.begin(), pc.act_sites.end());
    tap.wanted.insert(pc.y_tap);

    double nuclear_sum = 0.0;
    std::size_t nuclear_count = 0;
    for (const Tensor& image : calib) {
        tap.captured.clear();
        model_forward(image, model, nullptr, &tap);
        Tensor y = tap.captured.at(pc.y_tap);
        for (const std::string& s : pc.act_sites) {
            const float m = max_abs(tap.captured.at(s));
            auto it = pc.act_max.find(s);
            if (it == pc.act_max.end()) {
                pc.act_max[s] = m;
            } else {
                it->second = std::max(it->second, m);
            }
        }
        std::vector<double> per_head;
        if (pc.per_head) {
            for (std::size_t h = 0; h < pc.heads; ++h) {
                per_head.push_back(nuclear_norm(slice_first(y, h)));
            }
        } else {
            per_head.push_back(nuclear_norm(y));
        }
        for (double v : per_head) {
            nuclear_sum += v;
            ++nuclear_count;
        }
        pc.nuc.push_back(std::move(per_head));
        pc.y.push_back(std::move(y));
    }
    pc.mean_nuclear = nuclear_sum / static_cast<double>(nuclear_count);
    return pc;
}

double squared_error(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return s;
}

double omega_at(const ViTModel& model, const std::vector<Tensor>& calib, const ProbeCache& pc,
                int bits) {
    QuantHooks hooks;
    for (const auto& [id, w] : pc.weight_sites) {
        hooks[id] = QuantParams{max_init_delta(*w, bits), bits};
    }
    for (const auto& [id, m] : pc.act_max) {
        hooks[id] = QuantParams{max_init_delta(m, bits), bits};
    }

    ActivationTap tap;
    tap.wanted.insert(pc.y_tap);
    double total = 0.0;
    for (std::size_t s = 0; s < calib.size(); ++s) {
        tap.captured.clear();
        model_forward(calib[s], model, &hooks, &tap, HookMode::Prefix);
        const Tensor& y_hat = tap.captured.at(pc.y_tap);
        if (pc.per_head) {
            double acc = 0.0;
            for (std::size_t h = 0; h < pc.heads; ++h) {
                acc += pc.nuc[s][h] * squared_error(slice_first(y_hat, h), slice_first(pc.y[s], h));
            }
            total += acc / static_cast<double>(pc.heads);
        } else {
            total += pc.nuc[s][0] * squared_error(y_hat, pc.y[s]);
        }
    }
    return total / static_cast<double>(calib.size());
}

} // namespace

SensitivityRecord module_sensitivity(const ViTModel& model, const std::vector<Tensor>& calib,
                                     const ModuleRef& module, int bits) {
    const ProbeCache pc = probe_full_precision(model, calib, module);
    SensitivityRecord r;
    r.module_id = module.id();
    r.bits = bits;
    r.omega = omega_at(model, calib, pc, bits);
    r.weight_bytes = module_weight_bytes(model.config, module.kind, bits);
    return r;
}

SensitivityTable compute_sensitivity(const ViTModel& model, const std::vector<Tensor>& calib,
                                     const std::vector<int>& bit_set) {
    if (bit_set.empty()) throw ValueError("bit set is empty");
    SensitivityTable table;
    for (const ModuleRef& module : enumerate_modules(model.config)) {
        const ProbeCache pc = probe_full_precision(model, calib, module);
        table.nuclear_norms.emplace_back(module.id(), pc.mean_nuclear);
        for (int bits : bit_set) {
            SensitivityRecord r;
            r.module_id = module.id();
            r.bits = bits;
            r.omega = omega_at(model, calib, pc, bits);
            r.weight_bytes = module_weight_bytes(model.config, module.kind, bits);
            table.records.push_back(std::move(r));
        }
    }
    return table;
}

void save_sensitivity(const SensitivityTable& table, const std::string& path) {
    json records = json::array();
    for (const SensitivityRecord& r : table.records) {
        records.push_back(json{{"module", r.module_id},
                               {"bits", r.bits},
                               {"omega", r.omega},
                               {"weight_bytes", r.weight_bytes}});
    }
    json norms = json::array();
    for (const auto& [id, value] : table.nuclear_norms) {
        norms.push_back(json{{"module", id}, {"value", value}});
    }
    const json doc{{"format", "vitq-sensitivity"}, {"records", records}, {"nuclear_norms", norms}};
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << doc.dump(2) << "\n";
    if (!f) throw IoError("failed writing '" + path + "'");
}

SensitivityTable load_sensitivity(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::exception& e) {
        throw ContainerError("bad sensitivity file '" + path + "': " + e.what());
    }
    if (doc.value("format", "") != "vitq-sensitivity") {
        throw ContainerError("'" + path + "' is not a sensitivity table");
    }
    SensitivityTable table;
    for (const json& r : doc.at("records")) {
        table.records.push_back(SensitivityRecord{r.at("module").get<std::string>(),
                                                  r.at("bits").get<int>(),
                                                  r.at("omega").get<double>(),
                                                  r.at("weight_bytes").get<std::uint64_t>()});
    }
    if (doc.contains("nuclear_norms")) {
        for (const json& r : doc.at("nuclear_norms")) {
            table.nuclear_norms.emplace_back(r.at("module").get<std::string>(),
                                             r.at("value").get<double>());
        }
    }
    return table;
}

} // namespace vitq
