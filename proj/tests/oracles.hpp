#pragma once

// Independent reference implementations for tests. Nothing here calls the
// library's numeric kernels.

#include "fineprune/network.hpp"
#include "fineprune/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace oracle {

using fineprune::Shape;
using fineprune::Tensor;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> u(lo, hi);
    Tensor t(shape);
    for (float& v : t.data()) v = u(rng);
    return t;
}

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor c(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += double(a[i * k + p]) * double(b[p * n + j]);
            c[i * n + j] = static_cast<float>(s);
        }
    return c;
}

// Direct seven-loop cross-correlation; out-of-range taps read zero.
inline Tensor naive_conv(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
    const std::size_t ci = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
    const std::size_t co = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
    Tensor y(Shape{co, oh, ow});
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < ci; ++c)
                    for (std::size_t a = 0; a < kh; ++a)
                        for (std::size_t b = 0; b < kw; ++b) {
                            const long r = long(i * stride + a) - long(pad);
                            const long q = long(j * stride + b) - long(pad);
                            if (r < 0 || q < 0 || r >= long(h) || q >= long(wd)) continue;
                            s += double(x[(c * h + r) * wd + q]) * double(w[((o * ci + c) * kh + a) * kw + b]);
                        }
                y[(o * oh + i) * ow + j] = static_cast<float>(s);
            }
    return y;
}

inline std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> s = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * std::numbers::pi * double(k * t % n) / double(n);
            s += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = s;
    }
    return out;
}

// -log softmax(z)[label] in long double.
inline double xent(std::span<const double> z, std::size_t label) {
    long double mx = z[0];
    for (double v : z) mx = std::max<long double>(mx, v);
    long double s = 0.0L;
    for (double v : z) s += std::exp(static_cast<long double>(v) - mx);
    return static_cast<double>(std::log(s) + mx - static_cast<long double>(z[label]));
}

inline double xent(const Tensor& z, std::size_t label) {
    std::vector<double> d(z.data().begin(), z.data().end());
    return xent(d, label);
}

// Parameters of one network copied to double so a single entry can be
// nudged without float rounding.
struct DoubleParams {
    std::vector<std::vector<double>> weight, bias;

    explicit DoubleParams(const fineprune::Network& net) {
        for (const auto& l : net.layers()) {
            weight.emplace_back(l.weight.data().begin(), l.weight.data().end());
            bias.emplace_back(l.bias.data().begin(), l.bias.data().end());
        }
    }
};

// Straight-line double-precision forward pass written from the layer
// definitions (activations kept as flat [C][H][W] arrays).
inline std::vector<double> forward_double(const fineprune::Network& net, const DoubleParams& p, const Tensor& x) {
    using fineprune::LayerKind;
    std::vector<double> a(x.data().begin(), x.data().end());
    std::vector<std::size_t> shape = x.shape().extents();
    for (std::size_t li = 0; li < net.layer_count(); ++li) {
        const auto& s = net.layer(li).spec;
        const auto& w = p.weight[li];
        const auto& b = p.bias[li];
        std::vector<double> out;
        switch (s.kind) {
        case LayerKind::dense:
            out.assign(s.out_features, 0.0);
            for (std::size_t o = 0; o < s.out_features; ++o) {
                double acc = b[o];
                for (std::size_t i = 0; i < s.in_features; ++i) acc += w[o * s.in_features + i] * a[i];
                out[o] = acc;
            }
            shape = {s.out_features};
            break;
        case LayerKind::conv2d: {
            const std::size_t h = shape[1], wd = shape[2], k = s.kernel_h, st = s.stride, pad = s.padding;
            const std::size_t oh = (h + 2 * pad - k) / st + 1, ow = (wd + 2 * pad - k) / st + 1;
            out.assign(s.out_channels * oh * ow, 0.0);
            for (std::size_t o = 0; o < s.out_channels; ++o)
                for (std::size_t i = 0; i < oh; ++i)
                    for (std::size_t j = 0; j < ow; ++j) {
                        double acc = b[o];
                        for (std::size_t c = 0; c < s.in_channels; ++c)
                            for (std::size_t u = 0; u < k; ++u)
                                for (std::size_t v = 0; v < k; ++v) {
                                    const long r = long(i * st + u) - long(pad), q = long(j * st + v) - long(pad);
                                    if (r < 0 || q < 0 || r >= long(h) || q >= long(wd)) continue;
                                    acc += w[((o * s.in_channels + c) * k + u) * k + v] * a[(c * h + r) * wd + q];
                                }
                        out[(o * oh + i) * ow + j] = acc;
                    }
            shape = {s.out_channels, oh, ow};
            break;
        }
        case LayerKind::relu:
            out = a;
            for (double& v : out) v = std::max(v, 0.0);
            break;
        case LayerKind::maxpool2: {
            const std::size_t c = shape[0], h = shape[1], wd = shape[2], oh = (h + 1) / 2, ow = (wd + 1) / 2;
            out.assign(c * oh * ow, 0.0);
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < oh; ++i)
                    for (std::size_t j = 0; j < ow; ++j) {
                        double m = -std::numeric_limits<double>::infinity();
                        for (std::size_t u = 2 * i; u < std::min(h, 2 * i + 2); ++u)
                            for (std::size_t v = 2 * j; v < std::min(wd, 2 * j + 2); ++v)
                                m = std::max(m, a[(ch * h + u) * wd + v]);
                        out[(ch * oh + i) * ow + j] = m;
                    }
            shape = {c, oh, ow};
            break;
        }
        case LayerKind::flatten:
            out = a;
            shape = {a.size()};
            break;
        case LayerKind::softmax: // logits are the output
            out = a;
            break;
        }
        a = std::move(out);
    }
    return a;
}

// Central difference of the loss with respect to one parameter, in double.
inline double finite_difference(const fineprune::Network& net, std::size_t layer, bool bias, std::size_t index,
                                const Tensor& x, std::size_t label, double h = 1e-6) {
    DoubleParams p(net);
    double& slot = bias ? p.bias[layer][index] : p.weight[layer][index];
    const double orig = slot;
    slot = orig + h;
    const double up = xent(forward_double(net, p, x), label);
    slot = orig - h;
    const double down = xent(forward_double(net, p, x), label);
    return (up - down) / (2.0 * h);
}

} // namespace oracle
