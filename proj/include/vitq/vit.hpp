#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "vitq/quant.hpp"
#include "vitq/tensor.hpp"

namespace vitq {

struct ViTConfig {
    std::size_t image_height = 0;
    std::size_t image_width = 0;
    std::size_t channels = 0;
    std::size_t patch_size = 0;
    std::size_t embed_dim = 0;
    std::size_t num_layers = 0;
    std::size_t num_heads = 0;
    std::size_t mlp_dim = 0;
    std::size_t num_classes = 0;
    float layer_norm_eps = 1e-6f;
    // true: scores scaled by 1/sqrt(d/h) per head; false: 1/sqrt(d) over the
    // whole embedding dimension.
    bool scale_per_head = true;

    std::size_t num_patches() const {
        return (image_height / patch_size) * (image_width / patch_size);
    }
    std::size_t seq_len() const { return num_patches() + 1; }
    std::size_t patch_dim() const { return patch_size * patch_size * channels; }
    std::size_t head_dim() const { return embed_dim / num_heads; }
    double attn_scale() const;

    void validate() const;
    bool operator==(const ViTConfig&) const = default;
};

struct LayerWeights {
    Tensor wq, wk, wv, wo;      // d x d
    Tensor w1, b1;              // d x d_f, d_f
    Tensor w2, b2;              // d_f x d, d
    Tensor ln1_gamma, ln1_beta; // d
    Tensor ln2_gamma, ln2_beta; // d

    bool operator==(const LayerWeights&) const = default;
};

struct ViTModel {
    ViTConfig config;
    Tensor patch_embed_w; // (P^2*C) x d
    Tensor pos_embed;     // (n+1) x d
    Tensor class_token;   // d
    std::vector<LayerWeights> layers;
    Tensor head_w; // d x num_classes
    Tensor head_b; // num_classes

    void validate() const;
    bool operator==(const ViTModel&) const = default;
};

// Quantization parameters per site. Site ids name every weight tensor and
// every activation operand of a matrix multiply, including both operands of
// the two attention products.
using QuantHooks = std::map<std::string, QuantParams>;

// Strict: every site the pass touches must be present in the hooks.
// Prefix: missing sites pass through unquantized; calibration uses this
// while the table is still being filled front to back.
enum class HookMode { Strict, Prefix };

namespace site {
std::string embed_in();
std::string embed_w();
std::string head_in();
std::string head_w();
std::string msa(std::size_t layer, const char* leaf); // "layer{l}.msa.{leaf}"
std::string mlp(std::size_t layer, const char* leaf); // "layer{l}.mlp.{leaf}"
} // namespace site

// Every site id for this architecture, in forward-pass order.
std::vector<std::string> enumerate_sites(const ViTConfig& cfg);

// Hooks must cover exactly the enumerated sites with valid parameters.
void validate_hooks(const QuantHooks& hooks, const ViTConfig& cfg);

// Records the raw operand arriving at selected sites during a forward pass,
// before any quantization of that operand. The pseudo-site from
// scores_tap_id() additionally exposes the per-head attention score maps the
// pass actually used (stacked {heads, T, T}).
struct ActivationTap {
    std::set<std::string> wanted;
    std::map<std::string, Tensor> captured;

    bool wants(const std::string& id) const { return wanted.count(id) != 0; }
    void capture(const std::string& id, const Tensor& t) {
        if (wants(id)) captured[id] = t;
    }
};

std::string scores_tap_id(std::size_t layer);

// Rows of the flattened patch matrix, shape (n, P^2*C); patches and pixels
// are traversed row-major.
Tensor patch_matrix(const Tensor& image, const ViTConfig& cfg);

// Patch projection plus class token and positional embedding, (n+1) x d.
Tensor patch_embed(const Tensor& image, const ViTModel& m, const QuantHooks* hooks = nullptr,
                   ActivationTap* tap = nullptr, HookMode mode = HookMode::Strict);

Tensor msa_forward(const Tensor& x, const LayerWeights& lw, const ViTConfig& cfg,
                   std::size_t layer_index, const QuantHooks* hooks = nullptr,
                   ActivationTap* tap = nullptr, HookMode mode = HookMode::Strict);

Tensor mlp_forward(const Tensor& z, const LayerWeights& lw, const ViTConfig& cfg,
                   std::size_t layer_index, const QuantHooks* hooks = nullptr,
                   ActivationTap* tap = nullptr, HookMode mode = HookMode::Strict);

Tensor layer_forward(const Tensor& x, const LayerWeights& lw, const ViTConfig& cfg,
                     std::size_t layer_index, const QuantHooks* hooks = nullptr,
                     ActivationTap* tap = nullptr, HookMode mode = HookMode::Strict);

// Full pass: logits of the class token, shape {num_classes}.
Tensor model_forward(const Tensor& image, const ViTModel& m, const QuantHooks* hooks = nullptr,
                     ActivationTap* tap = nullptr, HookMode mode = HookMode::Strict);

// Columns [h*dh, (h+1)*dh) of a (T, d) matrix.
Tensor head_slice(const Tensor& x, std::size_t head, std::size_t head_dim);

// Per-head raw score maps q_h k_h^T, stacked {heads, T, T}.
Tensor attention_scores(const Tensor& q, const Tensor& k, std::size_t heads);

// Per-head products probs_h v_h, stacked {heads, T, d/heads}. probs is a
// stacked {heads, T, T} map set, v a (T, d) matrix.
Tensor attention_value_product(const Tensor& probs, const Tensor& v, std::size_t heads);

// 2-D slice [index, :, :] of a 3-D tensor.
Tensor slice_first(const Tensor& stacked, std::size_t index);

// Observation id for the MLP module output (after the second bias).
std::string mlp_out_tap_id(std::size_t layer);

} // namespace vitq
