#include "vitq/synthetic.hpp"

#include <cmath>

namespace vitq {

std::uint64_t Rng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double mul = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * mul;
    has_spare_ = true;
    return u * mul;
}

Tensor Rng::normal_tensor(std::vector<std::size_t> shape, double stddev, double mean) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) {
        t[i] = static_cast<float>(mean + stddev * normal());
    }
    return t;
}

ViTModel make_toy_model(const ViTConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const std::size_t d = cfg.embed_dim, df = cfg.mlp_dim;

    ViTModel m;
    m.config = cfg;
    m.patch_embed_w =
        rng.normal_tensor({cfg.patch_dim(), d}, 1.0 / std::sqrt(static_cast<double>(cfg.patch_dim())));
    m.pos_embed = rng.normal_tensor({cfg.seq_len(), d}, 0.3);
    m.class_token = rng.normal_tensor({d}, 0.3);
    m.layers.resize(cfg.num_layers);
    const double ws = 1.0 / std::sqrt(static_cast<double>(d));
    for (LayerWeights& lw : m.layers) {
        lw.wq = rng.normal_tensor({d, d}, ws);
        lw.wk = rng.normal_tensor({d, d}, ws);
        lw.wv = rng.normal_tensor({d, d}, ws);
        lw.wo = rng.normal_tensor({d, d}, ws);
        lw.w1 = rng.normal_tensor({d, df}, ws);
        lw.b1 = rng.normal_tensor({df}, 0.05);
        lw.w2 = rng.normal_tensor({df, d}, 1.0 / std::sqrt(static_cast<double>(df)));
        lw.b2 = rng.normal_tensor({d}, 0.05);
        lw.ln1_gamma = rng.normal_tensor({d}, 0.05, 1.0);
        lw.ln1_beta = rng.normal_tensor({d}, 0.02);
        lw.ln2_gamma = rng.normal_tensor({d}, 0.05, 1.0);
        lw.ln2_beta = rng.normal_tensor({d}, 0.02);
    }
    m.head_w = rng.normal_tensor({d, cfg.num_classes}, 1.5 * ws);
    m.head_b = rng.normal_tensor({cfg.num_classes}, 0.05);
    m.validate();
    return m;
}

std::vector<Tensor> make_calibration(const ViTConfig& cfg, std::size_t count,
                                     std::uint64_t seed) {
    cfg.validate();
    if (count == 0) throw ValueError("calibration sample count must be positive");
    Rng rng(seed ^ 0xC1A55E5ull);

    // Class mean patterns first, then per-sample noise on top.
    std::vector<Tensor> means;
    means.reserve(cfg.num_classes);
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        means.push_back(
            rng.normal_tensor({cfg.image_height, cfg.image_width, cfg.channels}, 0.7));
    }
    std::vector<Tensor> samples;
    samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Tensor& mu = means[i % cfg.num_classes];
        Tensor img(mu.shape());
        for (std::size_t j = 0; j < img.numel(); ++j) {
            img[j] = mu[j] + static_cast<float>(0.3 * rng.normal());
        }
        samples.push_back(std::move(img));
    }
    return samples;
}

void scale_layer_weights(ViTModel& model, std::size_t layer, float factor) {
    if (layer >= model.layers.size()) throw ValueError("layer index out of range");
    LayerWeights& lw = model.layers[layer];
    for (Tensor* t : {&lw.wq, &lw.wk, &lw.wv, &lw.wo, &lw.w1, &lw.w2}) {
        for (float& v : t->values()) v *= factor;
    }
}

} // namespace vitq
