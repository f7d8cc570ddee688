#include "flowvae/tensor.hpp"

#include <cmath>
#include <utility>

#include "flowvae/errors.hpp"

namespace flowvae {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

namespace {

void check_extents(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
    for (std::size_t e : shape) {
        if (e == 0) throw DimensionError("tensor extents must be positive");
    }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    check_extents(shape_);
    if (data_.size() != shape_product(shape_)) {
        throw DimensionError("tensor data length does not match shape product");
    }
    require_finite("tensor construction");
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw DimensionError("from_rows: no rows");
    const std::size_t cols = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw DimensionError("from_rows: ragged rows");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(flat));
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) throw DimensionError("tensor axis out of range");
    return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
}
double Tensor::at(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
    check_extents(new_shape);
    if (shape_product(new_shape) != data_.size()) {
        throw DimensionError("reshape changes element count");
    }
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
}

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void Tensor::require_finite(const char* what) const {
    if (!all_finite()) {
        throw ArgumentError(std::string("non-finite value in ") + what);
    }
}

void Tensor::add(const Tensor& other) {
    if (!same_shape(other)) throw DimensionError("tensor add: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Tensor::scale(double factor) {
    for (double& x : data_) x *= factor;
}

}  // namespace flowvae
