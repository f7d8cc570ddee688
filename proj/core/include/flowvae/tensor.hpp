#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace flowvae {

/// Dense multi-dimensional array of 64-bit floats, row-major.
///
/// This is the substrate for every layer, loss, and gradient in the
/// library. Rank is small (1..3 in practice) and extents are fixed after
/// construction; reshape() is a metadata-only view change.
class Tensor {
public:
    Tensor() = default;

    // Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<std::size_t> shape);

    // Tensor initialized from values. Length must equal the product of the
    // extents and every value must be finite (NaN/Inf rejected).
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor scalar(double v);

    // [rows x cols] tensor from nested rows; all rows must agree in length.
    static Tensor from_rows(const std::vector<std::vector<double>>& rows);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const;

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;
    double& at(std::size_t i, std::size_t j, std::size_t k);
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void fill(double v);

    // Metadata-only reshape; new extents must multiply to size().
    Tensor reshaped(std::vector<std::size_t> new_shape) const;

    bool all_finite() const;

    // Throws ArgumentError naming `what` if any value is NaN/Inf.
    void require_finite(const char* what) const;

    // Elementwise in-place accumulate; shapes must match.
    void add(const Tensor& other);
    void scale(double factor);

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

}  // namespace flowvae
