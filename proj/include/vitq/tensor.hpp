#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vitq/errors.hpp"

namespace vitq {

// Dense row-major float32 tensor. The data length always equals the product
// of the shape; 2-D helpers are provided because almost everything in the
// pipeline is a matrix.
class Tensor {
public:
    Tensor() = default;

    // Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<std::size_t> shape);

    Tensor(std::vector<std::size_t> shape, std::vector<float> data);

    static Tensor full(std::vector<std::size_t> shape, float value);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t i) const;

    // 2-D accessors; throw ShapeError when the tensor is not a matrix.
    std::size_t rows() const;
    std::size_t cols() const;
    float& at(std::size_t r, std::size_t c);
    float at(std::size_t r, std::size_t c) const;

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<const float> values() const { return {data_.data(), data_.size()}; }
    std::span<float> values() { return {data_.data(), data_.size()}; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    // Matrix with the given rows copied out, shape {count, cols}.
    Tensor row_block(std::size_t first, std::size_t count) const;

    // Same data under a new shape with equal element count.
    Tensor reshaped(std::vector<std::size_t> new_shape) const;

    bool operator==(const Tensor& other) const = default;

    static std::size_t shape_numel(const std::vector<std::size_t>& shape);
    static std::string shape_str(const std::vector<std::size_t>& shape);

private:
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

// Throws ShapeError with a readable message when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

} // namespace vitq
