#include "vitq/tensor.hpp"

#include <cmath>
#include <sstream>

namespace vitq {

std::size_t Tensor::shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) {
            throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
        }
        n *= d;
    }
    return n;
}

std::string Tensor::shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
        throw ShapeError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::full(std::vector<std::size_t> shape, float value) {
    Tensor t(std::move(shape));
    for (float& v : t.data_) v = value;
    return t;
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape_.size()) {
        throw ShapeError("dimension index " + std::to_string(i) + " out of range for " +
                         shape_str(shape_));
    }
    return shape_[i];
}

std::size_t Tensor::rows() const {
    if (ndim() != 2) throw ShapeError("expected a matrix, got " + shape_str(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (ndim() != 2) throw ShapeError("expected a matrix, got " + shape_str(shape_));
    return shape_[1];
}

float& Tensor::at(std::size_t r, std::size_t c) {
    return data_[r * cols() + c];
}

float Tensor::at(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::row_block(std::size_t first, std::size_t count) const {
    const std::size_t c = cols();
    if (first + count > rows()) {
        throw ShapeError("row block [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") out of range for " +
                         shape_str(shape_));
    }
    std::vector<float> out(data_.begin() + static_cast<std::ptrdiff_t>(first * c),
                           data_.begin() + static_cast<std::ptrdiff_t>((first + count) * c));
    return Tensor({count, c}, std::move(out));
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes " + Tensor::shape_str(a.shape()) +
                         " and " + Tensor::shape_str(b.shape()) + " differ");
    }
}

} // namespace vitq
