#include "fineprune/network.hpp"

#include "fineprune/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace fineprune {

// ---------------------------------------------------------------------------
// PruneMask
// ---------------------------------------------------------------------------

PruneMask::PruneMask(const std::vector<std::size_t>& unit_counts) {
    keep_.reserve(unit_counts.size());
    for (std::size_t n : unit_counts) keep_.emplace_back(n, std::uint8_t{1});
}

std::size_t PruneMask::dropped_units() const noexcept {
    std::size_t n = 0;
    for (const auto& row : keep_) n += static_cast<std::size_t>(std::count(row.begin(), row.end(), 0));
    return n;
}

std::size_t PruneMask::dropped_units(std::size_t layer) const {
    const auto& row = keep_.at(layer);
    return static_cast<std::size_t>(std::count(row.begin(), row.end(), 0));
}

PruneMask PruneMask::combined_with(const PruneMask& other) const {
    if (other.keep_.size() != keep_.size())
        fail(ErrorCode::structure_mismatch, "masks cover different layer counts");
    PruneMask out = *this;
    for (std::size_t l = 0; l < keep_.size(); ++l) {
        if (other.keep_[l].size() != keep_[l].size())
            fail(ErrorCode::structure_mismatch, "masks differ at layer " + std::to_string(l));
        for (std::size_t u = 0; u < keep_[l].size(); ++u)
            out.keep_[l][u] = keep_[l][u] & other.keep_[l][u];
    }
    return out;
}

bool PruneMask::dropped_subset_of(const PruneMask& other) const {
    if (other.keep_.size() != keep_.size()) return false;
    for (std::size_t l = 0; l < keep_.size(); ++l) {
        if (other.keep_[l].size() != keep_[l].size()) return false;
        for (std::size_t u = 0; u < keep_[l].size(); ++u)
            if (!keep_[l][u] && other.keep_[l][u]) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// LayerSpec
// ---------------------------------------------------------------------------

const char* to_string(LayerKind kind) noexcept {
    switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2: return "maxpool2";
    case LayerKind::flatten: return "flatten";
    case LayerKind::softmax: return "softmax";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
    for (LayerKind k : {LayerKind::dense, LayerKind::conv2d, LayerKind::relu, LayerKind::maxpool2,
                        LayerKind::flatten, LayerKind::softmax})
        if (name == to_string(k)) return k;
    fail(ErrorCode::parse, "unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
    LayerSpec s{LayerKind::dense};
    s.in_features = in;
    s.out_features = out;
    return s;
}

LayerSpec LayerSpec::conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride, std::size_t padding) {
    LayerSpec s{LayerKind::conv2d};
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kernel_h = kernel;
    s.kernel_w = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

std::size_t LayerSpec::unit_count() const noexcept {
    switch (kind) {
    case LayerKind::dense: return out_features;
    case LayerKind::conv2d: return out_channels;
    default: return 0;
    }
}

std::size_t LayerSpec::weights_per_unit() const noexcept {
    switch (kind) {
    case LayerKind::dense: return in_features;
    case LayerKind::conv2d: return in_channels * kernel_h * kernel_w;
    default: return 0;
    }
}

Shape LayerSpec::weight_shape() const {
    if (kind == LayerKind::dense) return Shape{out_features, in_features};
    if (kind == LayerKind::conv2d) return Shape{out_channels, in_channels, kernel_h, kernel_w};
    fail(ErrorCode::invalid_argument, std::string(to_string(kind)) + " has no weights");
}

Shape LayerSpec::bias_shape() const { return Shape{unit_count()}; }

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

namespace {

Shape infer_output(const LayerSpec& s, const Shape& in, std::size_t index) {
    const std::string where = "layer " + std::to_string(index) + " (" + to_string(s.kind) + ")";
    switch (s.kind) {
    case LayerKind::dense:
        if (s.in_features == 0 || s.out_features == 0)
            fail(ErrorCode::dimension, where + ": zero-width dense layer");
        if (in.rank() != 1 || in[0] != s.in_features)
            fail(ErrorCode::dimension, where + ": expects [" + std::to_string(s.in_features) +
                                           "], receives " + in.str());
        return Shape{s.out_features};
    case LayerKind::conv2d: {
        if (s.out_channels == 0 || s.kernel_h == 0 || s.kernel_w == 0 || s.stride == 0)
            fail(ErrorCode::dimension, where + ": degenerate conv geometry");
        if (in.rank() != 3 || in[0] != s.in_channels)
            fail(ErrorCode::dimension, where + ": expects " + std::to_string(s.in_channels) +
                                           " input channels, receives " + in.str());
        if (s.kernel_h > in[1] + 2 * s.padding || s.kernel_w > in[2] + 2 * s.padding)
            fail(ErrorCode::dimension, where + ": kernel larger than padded input " + in.str());
        return Shape{s.out_channels, conv_output_extent(in[1], s.kernel_h, s.stride, s.padding),
                     conv_output_extent(in[2], s.kernel_w, s.stride, s.padding)};
    }
    case LayerKind::maxpool2:
        if (in.rank() != 3) fail(ErrorCode::dimension, where + ": expects [C x H x W], receives " + in.str());
        return Shape{in[0], (in[1] + 1) / 2, (in[2] + 1) / 2};
    case LayerKind::flatten:
        return Shape{in.numel()};
    case LayerKind::relu:
        return in;
    case LayerKind::softmax:
        if (in.rank() != 1) fail(ErrorCode::dimension, where + ": expects a 1-D input, receives " + in.str());
        return in;
    }
    return in;
}

} // namespace

Network::Network(Shape input_shape, std::vector<LayerSpec> specs)
    : input_shape_(std::move(input_shape)) {
    if (input_shape_.rank() == 0) fail(ErrorCode::dimension, "network input shape is empty");
    if (specs.empty()) fail(ErrorCode::invalid_argument, "network has no layers");
    Shape current = input_shape_;
    bool any_params = false;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].kind == LayerKind::softmax && i + 1 != specs.size())
            fail(ErrorCode::invalid_argument, "softmax is only supported as the last layer");
        current = infer_output(specs[i], current, i);
        output_shapes_.push_back(current);
        Layer layer{specs[i], {}, {}};
        if (specs[i].has_parameters()) {
            layer.weight = Tensor(specs[i].weight_shape());
            layer.bias = Tensor(specs[i].bias_shape());
            any_params = true;
        }
        layers_.push_back(std::move(layer));
    }
    if (!any_params) fail(ErrorCode::invalid_argument, "network has no parameterised layer");
    if (output_shapes_.back().rank() != 1)
        fail(ErrorCode::dimension, "network output must be 1-D, got " + output_shapes_.back().str());
    mask_ = PruneMask(unit_counts());
}

Network Network::mlp(const std::vector<std::size_t>& widths) {
    if (widths.size() < 2) fail(ErrorCode::invalid_argument, "mlp needs at least input and output widths");
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        specs.push_back(LayerSpec::dense(widths[i], widths[i + 1]));
        if (i + 2 < widths.size()) specs.push_back(LayerSpec::relu_layer());
    }
    return Network(Shape{widths.front()}, std::move(specs));
}

void Network::init_he_uniform(std::uint64_t seed) {
    seed_ = seed;
    std::mt19937_64 rng(seed);
    for (Layer& layer : layers_) {
        if (!layer.spec.has_parameters()) continue;
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.spec.weights_per_unit()));
        std::uniform_real_distribution<float> dist(static_cast<float>(-limit), static_cast<float>(limit));
        for (float& w : layer.weight.data()) w = dist(rng);
        std::fill(layer.bias.data().begin(), layer.bias.data().end(), 0.0f);
    }
    apply_mask();
}

std::size_t Network::class_count() const { return output_shapes_.back()[0]; }

std::size_t Network::classifier_index() const {
    for (std::size_t i = layers_.size(); i-- > 0;)
        if (layers_[i].spec.has_parameters()) return i;
    fail(ErrorCode::invalid_argument, "network has no parameterised layer");
}

bool Network::is_prunable(std::size_t layer) const {
    if (!layers_.at(layer).spec.has_parameters()) return false;
    return classifier_prunable_ || layer != classifier_index();
}

std::vector<std::size_t> Network::unit_counts() const {
    std::vector<std::size_t> counts;
    counts.reserve(layers_.size());
    for (const Layer& l : layers_) counts.push_back(l.spec.unit_count());
    return counts;
}

void Network::set_mask(PruneMask mask) {
    if (mask.layer_count() != layers_.size())
        fail(ErrorCode::structure_mismatch, "mask covers " + std::to_string(mask.layer_count()) +
                                                " layers, network has " + std::to_string(layers_.size()));
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (mask.unit_count(i) != layers_[i].spec.unit_count())
            fail(ErrorCode::structure_mismatch, "mask unit count differs at layer " + std::to_string(i));
    mask_ = std::move(mask);
    apply_mask();
}

void Network::apply_mask() {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        Layer& layer = layers_[i];
        const std::size_t units = layer.spec.unit_count();
        const std::size_t per_unit = layer.spec.weights_per_unit();
        for (std::size_t u = 0; u < units; ++u) {
            if (mask_.keeps(i, u)) continue;
            auto w = layer.weight.data().subspan(u * per_unit, per_unit);
            std::fill(w.begin(), w.end(), 0.0f);
            layer.bias[u] = 0.0f;
        }
    }
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

Tensor apply_layer(const Layer& layer, const Tensor& input) {
    const LayerSpec& s = layer.spec;
    switch (s.kind) {
    case LayerKind::dense: {
        Tensor z = matvec(layer.weight, input);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];
        return z;
    }
    case LayerKind::conv2d:
        return add_bias(conv2d(input, layer.weight, s.stride, s.padding), layer.bias);
    case LayerKind::relu: return relu(input);
    case LayerKind::maxpool2: return maxpool2(input);
    case LayerKind::flatten: return input.reshaped(Shape{input.size()});
    case LayerKind::softmax: return softmax(input);
    }
    return input;
}

Tensor forward(const Network& net, const Tensor& x, std::vector<Tensor>* trace) {
    if (x.shape() != net.input_shape())
        fail(ErrorCode::dimension, "layer 0: input " + x.shape().str() + " does not match declared " +
                                       net.input_shape().str());
    if (trace) {
        trace->clear();
        trace->reserve(net.layer_count());
    }
    Tensor current = x;
    Tensor logits;
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const Layer& layer = net.layer(i);
        if (layer.spec.kind == LayerKind::softmax) logits = current;
        current = apply_layer(layer, current);
        if (current.shape() != net.output_shape(i))
            fail(ErrorCode::dimension, "layer " + std::to_string(i) + ": produced " +
                                           current.shape().str() + ", expected " +
                                           net.output_shape(i).str());
        if (trace) trace->push_back(current);
    }
    if (net.layers().back().spec.kind != LayerKind::softmax) logits = std::move(current);
    return logits;
}

Tensor predict_proba(const Network& net, const Tensor& x) { return softmax(forward(net, x)); }

std::size_t predict(const Network& net, const Tensor& x) { return argmax(forward(net, x)); }

double cross_entropy_loss(const Tensor& logits, std::size_t label) {
    if (logits.shape().rank() != 1 || logits.empty())
        fail(ErrorCode::dimension, "cross-entropy expects non-empty 1-D logits");
    if (label >= logits.size())
        fail(ErrorCode::invalid_argument, "label " + std::to_string(label) + " out of range for " +
                                              std::to_string(logits.size()) + " classes");
    double top = logits[0];
    for (float v : logits.data()) top = std::max(top, static_cast<double>(v));
    double total = 0.0;
    for (float v : logits.data()) total += std::exp(static_cast<double>(v) - top);
    return std::max(0.0, std::log(total) - (static_cast<double>(logits[label]) - top));
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

GradientSet GradientSet::zeros_like(const Network& net) {
    GradientSet g;
    g.layers.reserve(net.layer_count());
    for (const Layer& l : net.layers()) {
        ParamGrad p;
        if (l.spec.has_parameters()) {
            p.weight = Tensor(l.weight.shape());
            p.bias = Tensor(l.bias.shape());
        }
        g.layers.push_back(std::move(p));
    }
    return g;
}

void GradientSet::accumulate(const GradientSet& other) {
    if (other.layers.size() != layers.size())
        fail(ErrorCode::structure_mismatch, "gradient sets of different depth");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto add = [&](Tensor& into, const Tensor& from) {
            if (into.size() != from.size())
                fail(ErrorCode::structure_mismatch, "gradient shapes differ at layer " + std::to_string(i));
            for (std::size_t k = 0; k < into.size(); ++k) into[k] += from[k];
        };
        add(layers[i].weight, other.layers[i].weight);
        add(layers[i].bias, other.layers[i].bias);
    }
}

void GradientSet::scale(float factor) {
    for (ParamGrad& p : layers) {
        for (float& v : p.weight.data()) v *= factor;
        for (float& v : p.bias.data()) v *= factor;
    }
}

double GradientSet::max_abs() const {
    double m = 0.0;
    for (const ParamGrad& p : layers) {
        for (float v : p.weight.data()) m = std::max(m, static_cast<double>(std::fabs(v)));
        for (float v : p.bias.data()) m = std::max(m, static_cast<double>(std::fabs(v)));
    }
    return m;
}

namespace {

std::size_t first_parameter_layer(const Network& net) {
    for (std::size_t i = 0; i < net.layer_count(); ++i)
        if (net.layer(i).spec.has_parameters()) return i;
    return net.layer_count();
}

// Gradient of one layer given its input, output and upstream gradient.
// Parameter gradients are accumulated into `pg`; the input gradient is
// returned unless `need_input_grad` is false.
Tensor layer_backward(const Layer& layer, const PruneMask& mask, std::size_t index, const Tensor& in,
                      const Tensor& out, const Tensor& grad_out, ParamGrad& pg, bool need_input_grad) {
    const LayerSpec& s = layer.spec;
    switch (s.kind) {
    case LayerKind::dense: {
        const std::size_t rows = s.out_features, cols = s.in_features;
        for (std::size_t r = 0; r < rows; ++r) {
            if (!mask.keeps(index, r)) continue;
            const float g = grad_out[r];
            pg.bias[r] += g;
            float* wrow = pg.weight.data().data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) wrow[c] += g * in[c];
        }
        if (!need_input_grad) return {};
        Tensor grad_in(in.shape());
        std::vector<double> acc(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double g = grad_out[r];
            const float* wrow = layer.weight.data().data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) acc[c] += g * wrow[c];
        }
        for (std::size_t c = 0; c < cols; ++c) grad_in[c] = static_cast<float>(acc[c]);
        return grad_in;
    }
    case LayerKind::conv2d: {
        const std::size_t cin = s.in_channels, cout = s.out_channels, kh = s.kernel_h, kw = s.kernel_w;
        const std::size_t h = in.shape()[1], w = in.shape()[2];
        const std::size_t oh = out.shape()[1], ow = out.shape()[2];
        const auto ih = static_cast<std::ptrdiff_t>(h), iw = static_cast<std::ptrdiff_t>(w);
        const auto pad = static_cast<std::ptrdiff_t>(s.padding);
        std::vector<double> grad_in_acc(need_input_grad ? in.size() : 0, 0.0);
        for (std::size_t co = 0; co < cout; ++co) {
            const bool kept = mask.keeps(index, co);
            double bias_acc = 0.0;
            for (std::size_t ci = 0; ci < cin; ++ci)
                for (std::size_t ky = 0; ky < kh; ++ky)
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const std::size_t widx = ((co * cin + ci) * kh + ky) * kw + kx;
                        const double kval = layer.weight[widx];
                        double wacc = 0.0;
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const auto y = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - pad;
                            if (y < 0 || y >= ih) continue;
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                const auto x = static_cast<std::ptrdiff_t>(ox * s.stride + kx) - pad;
                                if (x < 0 || x >= iw) continue;
                                const double g = grad_out[(co * oh + oy) * ow + ox];
                                const std::size_t iidx = (ci * h + static_cast<std::size_t>(y)) * w +
                                                         static_cast<std::size_t>(x);
                                wacc += g * in[iidx];
                                if (need_input_grad) grad_in_acc[iidx] += g * kval;
                            }
                        }
                        if (kept) pg.weight[widx] += static_cast<float>(wacc);
                    }
            for (std::size_t k = 0; k < oh * ow; ++k) bias_acc += grad_out[co * oh * ow + k];
            if (kept) pg.bias[co] += static_cast<float>(bias_acc);
        }
        if (!need_input_grad) return {};
        Tensor grad_in(in.shape());
        for (std::size_t k = 0; k < in.size(); ++k) grad_in[k] = static_cast<float>(grad_in_acc[k]);
        return grad_in;
    }
    case LayerKind::relu: {
        Tensor grad_in = grad_out;
        for (std::size_t k = 0; k < grad_in.size(); ++k)
            if (!(out[k] > 0.0f)) grad_in[k] = 0.0f;
        return grad_in;
    }
    case LayerKind::maxpool2: {
        Tensor grad_in(in.shape());
        const std::size_t c = in.shape()[0], h = in.shape()[1], w = in.shape()[2];
        const std::size_t oh = out.shape()[1], ow = out.shape()[2];
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    // Route to the first window position holding the max.
                    const float target = out.at(ch, oy, ox);
                    bool routed = false;
                    for (std::size_t dy = 0; dy < 2 && !routed; ++dy)
                        for (std::size_t dx = 0; dx < 2 && !routed; ++dx) {
                            const std::size_t y = 2 * oy + dy, x = 2 * ox + dx;
                            if (y < h && x < w && in.at(ch, y, x) == target) {
                                grad_in.at(ch, y, x) += grad_out.at(ch, oy, ox);
                                routed = true;
                            }
                        }
                }
        return grad_in;
    }
    case LayerKind::flatten:
        return grad_out.reshaped(in.shape());
    case LayerKind::softmax:
        break;
    }
    fail(ErrorCode::invalid_argument, "softmax is folded into the loss and has no standalone backward");
}

} // namespace

double accumulate_gradients(const Network& net, const Tensor& x, std::size_t label, GradientSet& into) {
    if (into.layers.size() != net.layer_count())
        fail(ErrorCode::structure_mismatch, "gradient set does not mirror the network");
    std::vector<Tensor> trace;
    const Tensor logits = forward(net, x, &trace);
    const double loss = cross_entropy_loss(logits, label);

    // d(loss)/d(logits) = softmax(logits) - onehot(label)
    Tensor grad = softmax(logits);
    grad[label] -= 1.0f;

    std::size_t top = net.layer_count();
    if (net.layers().back().spec.kind == LayerKind::softmax) --top;
    const std::size_t first_param = first_parameter_layer(net);
    for (std::size_t i = top; i-- > 0;) {
        const Tensor& in = i == 0 ? x : trace[i - 1];
        const bool need_input_grad = i > first_param;
        grad = layer_backward(net.layer(i), net.mask(), i, in, trace[i], grad, into.layers[i], need_input_grad);
        if (!need_input_grad) break;
    }
    return loss;
}

GradientSet backward(const Network& net, const Tensor& x, std::size_t label, double* loss) {
    GradientSet g = GradientSet::zeros_like(net);
    const double l = accumulate_gradients(net, x, label, g);
    if (loss) *loss = l;
    return g;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState::AdamState(const Network& net, AdamConfig cfg) : config(cfg) {
    const GradientSet zeros = GradientSet::zeros_like(net);
    first_moment = zeros.layers;
    second_moment = zeros.layers;
}

void adam_step(Network& net, const GradientSet& grads, AdamState& state, double learning_rate) {
    if (grads.layers.size() != net.layer_count() || state.first_moment.size() != net.layer_count())
        fail(ErrorCode::structure_mismatch, "optimizer state does not mirror the network");
    const AdamConfig& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);

    auto update = [&](Tensor& param, const Tensor& g, Tensor& m, Tensor& v) {
        if (param.size() != g.size())
            fail(ErrorCode::structure_mismatch, "gradient shape differs from parameter shape");
        for (std::size_t k = 0; k < param.size(); ++k) {
            const double gk = g[k];
            const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
            const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
            m[k] = static_cast<float>(mk);
            v[k] = static_cast<float>(vk);
            const double step = learning_rate * (mk / correction1) / (std::sqrt(vk / correction2) + c.epsilon);
            param[k] = static_cast<float>(param[k] - step);
        }
    };
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        Layer& layer = net.mutable_layer(i);
        if (!layer.spec.has_parameters()) continue;
        update(layer.weight, grads.layers[i].weight, state.first_moment[i].weight, state.second_moment[i].weight);
        update(layer.bias, grads.layers[i].bias, state.first_moment[i].bias, state.second_moment[i].bias);
    }
    net.apply_mask();
}

} // namespace fineprune
