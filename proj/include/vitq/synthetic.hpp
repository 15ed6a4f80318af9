#pragma once

#include <cstdint>
#include <vector>

#include "vitq/vit.hpp"

namespace vitq {

// Deterministic generator independent of the standard library's distribution
// implementations, so identical seeds give identical bytes everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    double uniform(); // [0, 1)
    double normal();  // standard normal, Box-Muller

    Tensor normal_tensor(std::vector<std::size_t> shape, double stddev, double mean = 0.0);

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// A small model with activation scales close to one and a classification
// head with usable logit margins.
ViTModel make_toy_model(const ViTConfig& cfg, std::uint64_t seed);

// Synthetic images: per-class Gaussian mean patterns plus pixel noise.
// Sample i belongs to class i % num_classes.
std::vector<Tensor> make_calibration(const ViTConfig& cfg, std::size_t count,
                                     std::uint64_t seed);

// Multiplies every weight matrix of one layer (not its LN parameters) so the
// layer dominates the residual stream; used to construct heterogeneous
// sensitivity.
void scale_layer_weights(ViTModel& model, std::size_t layer, float factor);

} // namespace vitq
