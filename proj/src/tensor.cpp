#include "fineprune/tensor.hpp"

#include "fineprune/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace fineprune {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::dimension: return "dimension error";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::empty_input: return "empty input";
    case ErrorCode::structure_mismatch: return "structure mismatch";
    case ErrorCode::version_mismatch: return "version mismatch";
    case ErrorCode::truncated_blob: return "truncated blob";
    case ErrorCode::offset_overlap: return "offset overlap";
    case ErrorCode::bad_magic: return "bad magic";
    case ErrorCode::count_mismatch: return "count mismatch";
    case ErrorCode::unsupported_format: return "unsupported format";
    case ErrorCode::parse: return "parse error";
    case ErrorCode::io: return "i/o error";
    }
    return "error";
}

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

Shape::Shape(std::initializer_list<std::size_t> extents)
    : Shape(std::vector<std::size_t>(extents)) {}

Shape::Shape(std::vector<std::size_t> extents) : extents_(std::move(extents)) {
    if (extents_.empty())
        fail(ErrorCode::dimension, "shape must have at least one extent");
    for (std::size_t e : extents_)
        if (e == 0) fail(ErrorCode::dimension, "zero extent in shape " + str());
}

std::size_t Shape::numel() const noexcept {
    if (extents_.empty()) return 0;
    std::size_t n = 1;
    for (std::size_t e : extents_) n *= e;
    return n;
}

std::string Shape::str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < extents_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(extents_[i]);
    }
    return s + "]";
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
        fail(ErrorCode::dimension, "data length " + std::to_string(data_.size()) +
                                       " does not match shape " + shape_.str());
}

Tensor Tensor::vector(std::initializer_list<float> values) {
    return Tensor(Shape{values.size()}, std::vector<float>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<float>> rows) {
    if (rows.size() == 0) fail(ErrorCode::dimension, "matrix needs at least one row");
    const std::size_t cols = rows.begin()->size();
    std::vector<float> data;
    data.reserve(rows.size() * cols);
    for (const auto& row : rows) {
        if (row.size() != cols) fail(ErrorCode::dimension, "ragged matrix rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{rows.size(), cols}, std::move(data));
}

float& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
float Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

float& Tensor::at(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
}
float Tensor::at(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape.numel() != data_.size())
        fail(ErrorCode::dimension, "cannot reshape " + shape_.str() + " to " + shape.str());
    return Tensor(std::move(shape), data_);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.shape()[1] != b.shape()[0])
        fail(ErrorCode::dimension,
             "matmul of " + a.shape().str() + " and " + b.shape().str());
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out(Shape{m, n});
    std::vector<double> row(n);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const float* brow = b.data().data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = static_cast<float>(row[j]);
    }
    return out;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
    if (a.shape().rank() != 2 || x.shape().rank() != 1 || a.shape()[1] != x.shape()[0])
        fail(ErrorCode::dimension,
             "matvec of " + a.shape().str() + " and " + x.shape().str());
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    Tensor out(Shape{m});
    for (std::size_t i = 0; i < m; ++i) {
        const float* row = a.data().data() + i * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(row[j]) * x[j];
        out[i] = static_cast<float>(acc);
    }
    return out;
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
    if (stride == 0) fail(ErrorCode::invalid_argument, "conv stride must be positive");
    if (kernel > in + 2 * padding)
        fail(ErrorCode::dimension, "kernel extent " + std::to_string(kernel) +
                                       " exceeds padded input extent " +
                                       std::to_string(in + 2 * padding));
    return (in + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
              std::size_t padding) {
    if (input.shape().rank() != 3 || kernels.shape().rank() != 4 ||
        kernels.shape()[1] != input.shape()[0])
        fail(ErrorCode::dimension,
             "conv2d of input " + input.shape().str() + " with kernels " + kernels.shape().str());
    const std::size_t cin = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    const std::size_t cout = kernels.shape()[0], kh = kernels.shape()[2], kw = kernels.shape()[3];
    const std::size_t oh = conv_output_extent(h, kh, stride, padding);
    const std::size_t ow = conv_output_extent(w, kw, stride, padding);

    Tensor out(Shape{cout, oh, ow});
    const auto ih = static_cast<std::ptrdiff_t>(h), iw = static_cast<std::ptrdiff_t>(w);
    const auto pad = static_cast<std::ptrdiff_t>(padding);
    for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const auto y = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
                        if (y < 0 || y >= ih) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const auto x = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
                            if (x < 0 || x >= iw) continue;
                            acc += static_cast<double>(kernels[((co * cin + ci) * kh + ky) * kw + kx]) *
                                   input[(ci * h + static_cast<std::size_t>(y)) * w +
                                         static_cast<std::size_t>(x)];
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = static_cast<float>(acc);
            }
        }
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor maxpool2(const Tensor& x) {
    if (x.shape().rank() != 3)
        fail(ErrorCode::dimension, "maxpool2 expects [C x H x W], got " + x.shape().str());
    const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
    Tensor out(Shape{c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                float best = -std::numeric_limits<float>::infinity();
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t y = 2 * oy + dy, xx = 2 * ox + dx;
                        if (y < h && xx < w) best = std::max(best, x.at(ch, y, xx));
                    }
                out.at(ch, oy, ox) = best;
            }
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
    const std::size_t lead = x.shape()[0];
    if (b.shape().rank() != 1 || b.shape()[0] != lead)
        fail(ErrorCode::dimension, "bias " + b.shape().str() + " for tensor " + x.shape().str());
    Tensor out = x;
    const std::size_t inner = x.size() / lead;
    for (std::size_t c = 0; c < lead; ++c)
        for (std::size_t i = 0; i < inner; ++i) out[c * inner + i] += b[c];
    return out;
}

Tensor softmax(const Tensor& logits) {
    if (logits.shape().rank() != 1)
        fail(ErrorCode::dimension, "softmax expects a 1-D tensor, got " + logits.shape().str());
    const float top = *std::max_element(logits.data().begin(), logits.data().end());
    std::vector<double> e(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        e[i] = std::exp(static_cast<double>(logits[i]) - top);
        total += e[i];
    }
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<float>(e[i] / total);
    return out;
}

std::size_t argmax(const Tensor& x) {
    if (x.empty()) fail(ErrorCode::empty_input, "argmax of an empty tensor");
    std::size_t best = 0;
    for (std::size_t i = 1; i < x.size(); ++i)
        if (x[i] > x[best]) best = i;
    return best;
}

} // namespace fineprune
