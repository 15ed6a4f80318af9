#include "vitq/vit.hpp"

#include <cmath>

#include "vitq/kernels.hpp"

namespace vitq {

double ViTConfig::attn_scale() const {
    return 1.0 / std::sqrt(static_cast<double>(scale_per_head ? head_dim() : embed_dim));
}

void ViTConfig::validate() const {
    if (image_height == 0 || image_width == 0 || channels == 0 || patch_size == 0 ||
        embed_dim == 0 || num_layers == 0 || num_heads == 0 || mlp_dim == 0 ||
        num_classes == 0) {
        throw ValueError("all config dimensions must be positive");
    }
    if (image_height % patch_size != 0 || image_width % patch_size != 0) {
        throw ValueError("image size must be a multiple of the patch size");
    }
    if (embed_dim % num_heads != 0) {
        throw ValueError("embed_dim must be divisible by num_heads");
    }
    if (!(layer_norm_eps > 0.0f)) {
        throw ValueError("layer_norm_eps must be positive");
    }
}

namespace {

void require_shape(const Tensor& t, std::vector<std::size_t> shape, const std::string& name) {
    if (t.shape() != shape) {
        throw ManifestShapeError("tensor '" + name + "' has shape " +
                                 Tensor::shape_str(t.shape()) + ", expected " +
                                 Tensor::shape_str(shape));
    }
}

} // namespace

void ViTModel::validate() const {
    config.validate();
    const std::size_t d = config.embed_dim, df = config.mlp_dim;
    require_shape(patch_embed_w, {config.patch_dim(), d}, "patch_embed");
    require_shape(pos_embed, {config.seq_len(), d}, "pos_embed");
    require_shape(class_token, {d}, "class_token");
    if (layers.size() != config.num_layers) {
        throw ManifestShapeError("model has " + std::to_string(layers.size()) +
                                 " layers, config says " + std::to_string(config.num_layers));
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerWeights& lw = layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        require_shape(lw.wq, {d, d}, p + "wq");
        require_shape(lw.wk, {d, d}, p + "wk");
        require_shape(lw.wv, {d, d}, p + "wv");
        require_shape(lw.wo, {d, d}, p + "wo");
        require_shape(lw.w1, {d, df}, p + "w1");
        require_shape(lw.b1, {df}, p + "b1");
        require_shape(lw.w2, {df, d}, p + "w2");
        require_shape(lw.b2, {d}, p + "b2");
        require_shape(lw.ln1_gamma, {d}, p + "ln1.gamma");
        require_shape(lw.ln1_beta, {d}, p + "ln1.beta");
        require_shape(lw.ln2_gamma, {d}, p + "ln2.gamma");
        require_shape(lw.ln2_beta, {d}, p + "ln2.beta");
    }
    require_shape(head_w, {d, config.num_classes}, "head.w");
    require_shape(head_b, {config.num_classes}, "head.b");
}

namespace site {

std::string embed_in() { return "embed.in"; }
std::string embed_w() { return "embed.w"; }
std::string head_in() { return "head.in"; }
std::string head_w() { return "head.w"; }

std::string msa(std::size_t layer, const char* leaf) {
    return "layer" + std::to_string(layer) + ".msa." + leaf;
}

std::string mlp(std::size_t layer, const char* leaf) {
    return "layer" + std::to_string(layer) + ".mlp." + leaf;
}

} // namespace site

std::string scores_tap_id(std::size_t layer) {
    return "layer" + std::to_string(layer) + ".msa.scores";
}

std::string mlp_out_tap_id(std::size_t layer) {
    return "layer" + std::to_string(layer) + ".mlp.out";
}

std::vector<std::string> enumerate_sites(const ViTConfig& cfg) {
    std::vector<std::string> ids;
    ids.push_back(site::embed_in());
    ids.push_back(site::embed_w());
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        for (const char* leaf : {"q.in", "q.w", "k.in", "k.w", "v.in", "v.w", "qk.q", "qk.k",
                                 "av.s", "av.v", "o.in", "o.w"}) {
            ids.push_back(site::msa(l, leaf));
        }
        for (const char* leaf : {"fc1.in", "fc1.w", "fc2.in", "fc2.w"}) {
            ids.push_back(site::mlp(l, leaf));
        }
    }
    ids.push_back(site::head_in());
    ids.push_back(site::head_w());
    return ids;
}

void validate_hooks(const QuantHooks& hooks, const ViTConfig& cfg) {
    const std::vector<std::string> ids = enumerate_sites(cfg);
    const std::set<std::string> known(ids.begin(), ids.end());
    for (const auto& [id, params] : hooks) {
        if (!known.count(id)) {
            throw MissingSiteError("hook site '" + id + "' does not exist in this model");
        }
        validate(params);
    }
    for (const std::string& id : ids) {
        if (!hooks.count(id)) {
            throw MissingSiteError("hooks are missing site '" + id + "'");
        }
    }
}

namespace {

const QuantParams& require_site(const QuantHooks& hooks, const std::string& id) {
    auto it = hooks.find(id);
    if (it == hooks.end()) {
        throw MissingSiteError("no quantization parameters for site '" + id + "'");
    }
    return it->second;
}

// Tap the raw operand, then quantize-dequantize it when hooks are active.
Tensor pass_site(const Tensor& t, const std::string& id, const QuantHooks* hooks,
                 ActivationTap* tap, HookMode mode) {
    if (tap) tap->capture(id, t);
    if (!hooks) return t;
    if (mode == HookMode::Prefix) {
        auto it = hooks->find(id);
        if (it == hooks->end()) return t;
        return quant_dequant(t, it->second);
    }
    return quant_dequant(t, require_site(*hooks, id));
}

} // namespace

Tensor head_slice(const Tensor& x, std::size_t head, std::size_t head_dim) {
    const std::size_t rows = x.rows(), cols = x.cols();
    Tensor out({rows, head_dim});
    const std::size_t off = head * head_dim;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < head_dim; ++j) out[i * head_dim + j] = x[i * cols + off + j];
    }
    return out;
}

Tensor attention_scores(const Tensor& q, const Tensor& k, std::size_t heads) {
    require_same_shape(q, k, "attention_scores");
    const std::size_t t = q.rows(), d = q.cols();
    const std::size_t dh = d / heads;
    Tensor out({heads, t, t});
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor a = matmul(head_slice(q, h, dh), transpose(head_slice(k, h, dh)));
        std::copy(a.values().begin(), a.values().end(), out.data() + h * t * t);
    }
    return out;
}

Tensor attention_value_product(const Tensor& probs, const Tensor& v, std::size_t heads) {
    const std::size_t t = v.rows(), d = v.cols();
    const std::size_t dh = d / heads;
    Tensor out({heads, t, dh});
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor yh = matmul(slice_first(probs, h), head_slice(v, h, dh));
        std::copy(yh.values().begin(), yh.values().end(), out.data() + h * t * dh);
    }
    return out;
}

Tensor slice_first(const Tensor& stacked, std::size_t index) {
    if (stacked.ndim() != 3) {
        throw ShapeError("slice_first expects a 3-D tensor, got " +
                         Tensor::shape_str(stacked.shape()));
    }
    const std::size_t r = stacked.dim(1), c = stacked.dim(2);
    Tensor out({r, c});
    std::copy_n(stacked.data() + index * r * c, r * c, out.data());
    return out;
}

Tensor patch_matrix(const Tensor& image, const ViTConfig& cfg) {
    if (image.shape() !=
        std::vector<std::size_t>{cfg.image_height, cfg.image_width, cfg.channels}) {
        throw ShapeError("image shape " + Tensor::shape_str(image.shape()) +
                         " does not match config (" + std::to_string(cfg.image_height) + ", " +
                         std::to_string(cfg.image_width) + ", " + std::to_string(cfg.channels) +
                         ")");
    }
    const std::size_t p = cfg.patch_size, c = cfg.channels, w = cfg.image_width;
    const std::size_t grid_w = cfg.image_width / p, grid_h = cfg.image_height / p;
    Tensor out({grid_h * grid_w, cfg.patch_dim()});
    for (std::size_t pi = 0; pi < grid_h; ++pi) {
        for (std::size_t pj = 0; pj < grid_w; ++pj) {
            float* row = out.data() + (pi * grid_w + pj) * cfg.patch_dim();
            std::size_t idx = 0;
            for (std::size_t r = 0; r < p; ++r) {
                for (std::size_t cc = 0; cc < p; ++cc) {
                    const std::size_t base = ((pi * p + r) * w + (pj * p + cc)) * c;
                    for (std::size_t ch = 0; ch < c; ++ch) row[idx++] = image[base + ch];
                }
            }
        }
    }
    return out;
}

Tensor patch_embed(const Tensor& image, const ViTModel& m, const QuantHooks* hooks,
                   ActivationTap* tap, HookMode mode) {
    const ViTConfig& cfg = m.config;
    const Tensor patches = patch_matrix(image, cfg);
    const Tensor proj = matmul(pass_site(patches, site::embed_in(), hooks, tap, mode),
                               pass_site(m.patch_embed_w, site::embed_w(), hooks, tap, mode));
    const std::size_t n = cfg.num_patches(), d = cfg.embed_dim;
    Tensor out({n + 1, d});
    for (std::size_t j = 0; j < d; ++j) out[j] = m.class_token[j] + m.pos_embed[j];
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out[(i + 1) * d + j] = proj[i * d + j] + m.pos_embed[(i + 1) * d + j];
        }
    }
    return out;
}

Tensor msa_forward(const Tensor& x, const LayerWeights& lw, const ViTConfig& cfg,
                   std::size_t layer_index, const QuantHooks* hooks, ActivationTap* tap,
                   HookMode mode) {
    const std::size_t t = x.rows(), d = cfg.embed_dim, heads = cfg.num_heads;
    const std::size_t dh = cfg.head_dim();

    const Tensor q = matmul(pass_site(x, site::msa(layer_index, "q.in"), hooks, tap, mode),
                            pass_site(lw.wq, site::msa(layer_index, "q.w"), hooks, tap, mode));
    const Tensor k = matmul(pass_site(x, site::msa(layer_index, "k.in"), hooks, tap, mode),
                            pass_site(lw.wk, site::msa(layer_index, "k.w"), hooks, tap, mode));
    const Tensor v = matmul(pass_site(x, site::msa(layer_index, "v.in"), hooks, tap, mode),
                            pass_site(lw.wv, site::msa(layer_index, "v.w"), hooks, tap, mode));

    const Tensor qq = pass_site(q, site::msa(layer_index, "qk.q"), hooks, tap, mode);
    const Tensor kq = pass_site(k, site::msa(layer_index, "qk.k"), hooks, tap, mode);
    const Tensor scores = attention_scores(qq, kq, heads);
    if (tap) tap->capture(scores_tap_id(layer_index), scores);

    // Softmax stays in full precision.
    const float scale = static_cast<float>(cfg.attn_scale());
    Tensor probs({heads, t, t});
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor s({t, t});
        const float* src = scores.data() + h * t * t;
        for (std::size_t i = 0; i < t * t; ++i) s[i] = src[i] * scale;
        const Tensor p = softmax_rows(s);
        std::copy(p.values().begin(), p.values().end(), probs.data() + h * t * t);
    }

    const Tensor ps = pass_site(probs, site::msa(layer_index, "av.s"), hooks, tap, mode);
    const Tensor vs = pass_site(v, site::msa(layer_index, "av.v"), hooks, tap, mode);
    Tensor y({t, d});
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor yh = matmul(slice_first(ps, h), head_slice(vs, h, dh));
        for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t j = 0; j < dh; ++j) y[i * d + h * dh + j] = yh[i * dh + j];
        }
    }

    return matmul(pass_site(y, site::msa(layer_index, "o.in"), hooks, tap, mode),
                  pass_site(lw.wo, site::msa(layer_index, "o.w"), hooks, tap, mode));
}

Tensor mlp_forward(const Tensor& z, const LayerWeights& lw, const ViTConfig& cfg,
                   std::size_t layer_index, const QuantHooks* hooks, ActivationTap* tap,
                   HookMode mode) {
    (void)cfg;
    const Tensor h1 = matmul(pass_site(z, site::mlp(layer_index, "fc1.in"), hooks, tap, mode),
                             pass_site(lw.w1, site::mlp(layer_index, "fc1.w"), hooks, tap, mode));
    const Tensor g = gelu(add_rowwise(h1, lw.b1));
    const Tensor h2 = matmul(pass_site(g, site::mlp(layer_index, "fc2.in"), hooks, tap, mode),
                             pass_site(lw.w2, site::mlp(layer_index, "fc2.w"), hooks, tap, mode));
    const Tensor out = add_rowwise(h2, lw.b2);
    if (tap) tap->capture(mlp_out_tap_id(layer_index), out);
    return out;
}

Tensor layer_forward(const Tensor& x, const LayerWeights& lw, const ViTConfig& cfg,
                     std::size_t layer_index, const QuantHooks* hooks, ActivationTap* tap,
                     HookMode mode) {
    const Tensor z = layer_norm(add(x, msa_forward(x, lw, cfg, layer_index, hooks, tap, mode)),
                                lw.ln1_gamma, lw.ln1_beta, cfg.layer_norm_eps);
    return layer_norm(add(z, mlp_forward(z, lw, cfg, layer_index, hooks, tap, mode)),
                      lw.ln2_gamma, lw.ln2_beta, cfg.layer_norm_eps);
}

Tensor model_forward(const Tensor& image, const ViTModel& m, const QuantHooks* hooks,
                     ActivationTap* tap, HookMode mode) {
    Tensor x = patch_embed(image, m, hooks, tap, mode);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        x = layer_forward(x, m.layers[l], m.config, l, hooks, tap, mode);
    }
    const Tensor cls = x.row_block(0, 1);
    const Tensor logits = matmul(pass_site(cls, site::head_in(), hooks, tap, mode),
                                 pass_site(m.head_w, site::head_w(), hooks, tap, mode));
    Tensor out({m.config.num_classes});
    for (std::size_t j = 0; j < m.config.num_classes; ++j) out[j] = logits[j] + m.head_b[j];
    return out;
}

} // namespace vitq
