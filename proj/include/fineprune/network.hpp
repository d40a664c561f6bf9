#pragma once

#include "fineprune/mask.hpp"
#include "fineprune/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace fineprune {

enum class LayerKind { dense, conv2d, relu, maxpool2, flatten, softmax };

const char* to_string(LayerKind kind) noexcept;
LayerKind layer_kind_from_string(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    // dense
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    // conv2d
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    static LayerSpec dense(std::size_t in, std::size_t out);
    static LayerSpec conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0);
    static LayerSpec relu_layer() { return {LayerKind::relu}; }
    static LayerSpec maxpool() { return {LayerKind::maxpool2}; }
    static LayerSpec flatten() { return {LayerKind::flatten}; }
    static LayerSpec softmax_layer() { return {LayerKind::softmax}; }

    bool has_parameters() const noexcept {
        return kind == LayerKind::dense || kind == LayerKind::conv2d;
    }
    // Output neurons (dense) or output channels (conv); zero otherwise.
    std::size_t unit_count() const noexcept;
    // Weights feeding one unit: one row of W (dense) or one C_in x kH x kW filter.
    std::size_t weights_per_unit() const noexcept;
    Shape weight_shape() const;
    Shape bias_shape() const;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
    LayerSpec spec;
    Tensor weight; // empty for parameter-free layers
    Tensor bias;
};

// Ordered layer stack with per-unit prune mask. A trailing softmax layer is
// treated as the probability head: forward() returns the logits feeding it.
class Network {
public:
    Network() = default;
    // Validates that layer shapes compose from `input_shape`; parameters
    // start at zero, mask at all-keep.
    Network(Shape input_shape, std::vector<LayerSpec> specs);

    // Dense ReLU stack: widths = {in, h1, ..., classes}.
    static Network mlp(const std::vector<std::size_t>& widths);

    // He-uniform weights (limit sqrt(6 / fan_in)), zero biases.
    void init_he_uniform(std::uint64_t seed);

    const Shape& input_shape() const noexcept { return input_shape_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::size_t layer_count() const noexcept { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return layers_.at(i); }
    // Mutable access; call apply_mask() afterwards to restore the mask invariant.
    Layer& mutable_layer(std::size_t i) { return layers_.at(i); }

    // Output shape of layer i (after it runs).
    const Shape& output_shape(std::size_t i) const { return output_shapes_.at(i); }
    std::size_t class_count() const;

    // Index of the last parameterised layer.
    std::size_t classifier_index() const;
    bool classifier_prunable() const noexcept { return classifier_prunable_; }
    void set_classifier_prunable(bool v) noexcept { classifier_prunable_ = v; }
    // Parameterised and, for the classifier, only when explicitly allowed.
    bool is_prunable(std::size_t layer) const;

    std::vector<std::size_t> unit_counts() const;

    const PruneMask& mask() const noexcept { return mask_; }
    // Replaces the mask and zeroes the covered parameters.
    void set_mask(PruneMask mask);
    // Zero weights and bias of every dropped unit.
    void apply_mask();

    std::uint64_t seed() const noexcept { return seed_; }
    void set_seed(std::uint64_t s) noexcept { seed_ = s; }

    std::size_t parameter_count() const;

private:
    Shape input_shape_;
    std::vector<Layer> layers_;
    std::vector<Shape> output_shapes_;
    PruneMask mask_;
    bool classifier_prunable_ = false;
    std::uint64_t seed_ = 0;
};

// Evaluates one layer.
Tensor apply_layer(const Layer& layer, const Tensor& input);

// Logits of the network on x. When `trace` is given it receives every
// layer's output in order (trace->size() == layer_count()).
Tensor forward(const Network& net, const Tensor& x, std::vector<Tensor>* trace = nullptr);

// Softmax probabilities of the network on x.
Tensor predict_proba(const Network& net, const Tensor& x);

std::size_t predict(const Network& net, const Tensor& x);

// -log softmax(logits)[label], computed in double with max subtraction.
double cross_entropy_loss(const Tensor& logits, std::size_t label);

struct ParamGrad {
    Tensor weight;
    Tensor bias;
};

// Per-layer gradients mirroring Network parameter shapes (empty for
// parameter-free layers).
struct GradientSet {
    std::vector<ParamGrad> layers;

    static GradientSet zeros_like(const Network& net);
    void accumulate(const GradientSet& other);
    void scale(float factor);
    double max_abs() const;
};

// Exact cross-entropy gradients for one sample. Dropped units get exactly
// zero gradient. Returns the loss through `loss` when non-null.
GradientSet backward(const Network& net, const Tensor& x, std::size_t label,
                     double* loss = nullptr);

// Adds one sample's gradients into `into`; returns the sample loss.
double accumulate_gradients(const Network& net, const Tensor& x, std::size_t label,
                            GradientSet& into);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    explicit AdamState(const Network& net, AdamConfig config = {});

    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<ParamGrad> first_moment;
    std::vector<ParamGrad> second_moment;
};

// One bias-corrected Adam update. Dropped units stay exactly zero.
void adam_step(Network& net, const GradientSet& grads, AdamState& state, double learning_rate);

} // namespace fineprune
