#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fineprune {

// Extents of a dense tensor, row-major (last index fastest). Every extent
// is >= 1 and there is at least one.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> extents);
    explicit Shape(std::vector<std::size_t> extents);

    std::size_t rank() const noexcept { return extents_.size(); }
    std::size_t operator[](std::size_t axis) const { return extents_.at(axis); }
    std::size_t numel() const noexcept;
    const std::vector<std::size_t>& extents() const noexcept { return extents_; }

    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    std::vector<std::size_t> extents_;
};

// Dense float32 tensor. Value type; copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    // 1-D convenience constructor.
    static Tensor vector(std::initializer_list<float> values);
    // 2-D convenience constructor, rows must be equally long.
    static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float& at(std::size_t i, std::size_t j);
    float at(std::size_t i, std::size_t j) const;
    float& at(std::size_t c, std::size_t i, std::size_t j);
    float at(std::size_t c, std::size_t i, std::size_t j) const;

    // Same data, new extents; numel must match.
    Tensor reshaped(Shape shape) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

// Bitwise comparison (distinguishes -0.0f from 0.0f, NaN payloads).
bool bit_equal(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Primitives. All pure; reductions accumulate in double.
// ---------------------------------------------------------------------------

// [m x k] x [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

// Matrix [m x n] times vector [n] -> [m]
Tensor matvec(const Tensor& a, const Tensor& x);

// Cross-correlation (no kernel flip) with zero padding.
// input [C_in x H x W], kernels [C_out x C_in x kH x kW] -> [C_out x H' x W'],
// H' = (H + 2p - kH) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
              std::size_t padding);

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

Tensor relu(const Tensor& x);

// 2x2 max pooling with stride 2 over [C x H x W]. Odd extents are padded
// with -inf on the bottom/right, so the output is ceil(H/2) x ceil(W/2).
Tensor maxpool2(const Tensor& x);

// Adds b per leading-axis slice: for a [C x ...] tensor b has length C;
// for a 1-D tensor b has the same length.
Tensor add_bias(const Tensor& x, const Tensor& b);

// Max-subtracted softmax over a 1-D tensor.
Tensor softmax(const Tensor& logits);

// Index of the largest element; ties resolve to the lowest index.
std::size_t argmax(const Tensor& x);

} // namespace fineprune
