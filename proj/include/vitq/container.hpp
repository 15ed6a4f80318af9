#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vitq/vit.hpp"

namespace vitq {

// Container layout: "VITQ" magic, u32 version, u64 manifest length, JSON
// manifest (kind, config, ordered tensor directory with name/shape/offset),
// then one raw blob of little-endian float32 values concatenated in
// directory order. Models use extension .vitm, tensor sets .vitt.

void save_model(const ViTModel& m, const std::string& path);
ViTModel load_model(const std::string& path);

void save_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors,
                  const std::string& path);
std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path);

// Calibration sets are tensor containers with entries sample_000000, ...
void save_calibration(const std::vector<Tensor>& samples, const std::string& path);
std::vector<Tensor> load_calibration(const std::string& path);

// Per-site quantization parameters, JSON sidecar.
void save_hooks(const QuantHooks& hooks, const std::string& path);
QuantHooks load_hooks(const std::string& path);

} // namespace vitq
