#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "carenet/labels.hpp"

namespace carenet::nn {

// ============================================================================
// Minimal deterministic tensor engine: exactly the layers, losses and
// optimizer the dual-path network needs. Double precision throughout so
// finite-difference gradient checks have headroom.
// ============================================================================

struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> shape_);

    static Tensor zeros(std::vector<int> shape);

    std::size_t size() const { return v.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    void fill(double value);
};

std::size_t shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// HeNormal: N(0, sqrt(2/fan_in)) elements, deterministic per seed.
Tensor he_normal_init(const std::vector<int>& shape, int fan_in, std::uint64_t seed);

// --------------------------------------------------------------------------
// Layers. forward() caches whatever backward() needs; backward() accumulates
// parameter gradients and returns the gradient w.r.t. the layer input.
// --------------------------------------------------------------------------

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& input) = 0;
    virtual Tensor backward(const Tensor& grad_output) = 0;
    virtual std::vector<Tensor*> params() { return {}; }
    virtual std::vector<Tensor*> grads() { return {}; }
    virtual std::string name() const = 0;
    virtual std::vector<int> output_shape(const std::vector<int>& input) const = 0;
};

// Same-padded stride-1 convolution on (H, W, C) channel-last input.
// Kernels are 1x1 or 3x3 in this artifact.
class Conv2D : public Layer {
public:
    Conv2D(int kernel_h, int kernel_w, int in_channels, int filters, std::uint64_t seed,
           std::string label = "conv");

    Tensor forward(const Tensor& input) override;
    Tensor backward(const Tensor& grad_output) override;
    std::vector<Tensor*> params() override { return {&kernel_, &bias_}; }
    std::vector<Tensor*> grads() override { return {&kernel_grad_, &bias_grad_}; }
    std::string name() const override { return label_; }
    std::vector<int> output_shape(const std::vector<int>& input) const override;

    Tensor& kernel() { return kernel_; }
    const Tensor& kernel() const { return kernel_; }
    Tensor& bias() { return bias_; }
    int filters() const { return filters_; }
    int in_channels() const { return in_channels_; }
    int kernel_h() const { return kh_; }
    int kernel_w() const { return kw_; }

private:
    int kh_, kw_, in_channels_, filters_;
    std::string label_;
    Tensor kernel_;  // (kh, kw, Cin, F)
    Tensor bias_;    // (F)
    Tensor kernel_grad_, bias_grad_;
    Tensor input_;  // cached
    std::vector<double> cols_;  // im2col scratch, cached for backward
};

// 2x2 stride-2 max pooling, odd sizes zero-padded (ceil semantics). Gradient
// routes to the first maximal element in row-major window order; gradient to
// a padded cell is dropped.
class MaxPool2D : public Layer {
public:
    explicit MaxPool2D(std::string label = "maxpool") : label_(std::move(label)) {}

    Tensor forward(const Tensor& input) override;
    Tensor backward(const Tensor& grad_output) override;
    std::string name() const override { return label_; }
    std::vector<int> output_shape(const std::vector<int>& input) const override;

private:
    std::string label_;
    std::vector<int> in_shape_;
    std::vector<long> argmax_;  // flat input index per output cell, -1 if padded zero won
};

// (H, W, F) -> (F) arithmetic mean per feature map.
class GlobalAvgPool : public Layer {
public:
    explicit GlobalAvgPool(std::string label = "gap") : label_(std::move(label)) {}

    Tensor forward(const Tensor& input) override;
    Tensor backward(const Tensor& grad_output) override;
    std::string name() const override { return label_; }
    std::vector<int> output_shape(const std::vector<int>& input) const override;

private:
    std::string label_;
    std::vector<int> in_shape_;
};

class Dense : public Layer {
public:
    Dense(int in_dim, int out_dim, std::uint64_t seed, std::string label = "dense");

    Tensor forward(const Tensor& input) override;
    Tensor backward(const Tensor& grad_output) override;
    std::vector<Tensor*> params() override { return {&weights_, &bias_}; }
    std::vector<Tensor*> grads() override { return {&weights_grad_, &bias_grad_}; }
    std::string name() const override { return label_; }
    std::vector<int> output_shape(const std::vector<int>& input) const override;

    Tensor& weights() { return weights_; }
    const Tensor& weights() const { return weights_; }
    Tensor& bias() { return bias_; }
    int in_dim() const { return in_; }
    int out_dim() const { return out_; }

private:
    int in_, out_;
    std::string label_;
    Tensor weights_;  // (in, out)
    Tensor bias_;     // (out)
    Tensor weights_grad_, bias_grad_;
    Tensor input_;
};

enum class Activation { Relu, Sigmoid, Softmax, Linear };

class ActivationLayer : public Layer {
public:
    explicit ActivationLayer(Activation kind, std::string label = "activation")
        : kind_(kind), label_(std::move(label)) {}

    Tensor forward(const Tensor& input) override;
    Tensor backward(const Tensor& grad_output) override;
    std::string name() const override { return label_; }
    std::vector<int> output_shape(const std::vector<int>& input) const override { return input; }

    Activation kind() const { return kind_; }

private:
    Activation kind_;
    std::string label_;
    Tensor output_;  // cached activation values
};

// Sequential chain with optional per-layer activation/gradient recording
// (used by Grad-CAM to read an interior feature map and its gradient).
class Sequential {
public:
    Sequential() = default;

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    std::size_t depth() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }

    Tensor forward(const Tensor& input, bool record = false);
    Tensor backward(const Tensor& grad_output, bool record = false);

    std::vector<Tensor*> params();
    std::vector<Tensor*> grads();

    // Valid after forward/backward with record=true.
    const Tensor& recorded_output(std::size_t i) const { return outputs_[i]; }
    const Tensor& recorded_output_grad(std::size_t i) const { return output_grads_[i]; }

    std::vector<int> output_shape(std::vector<int> input) const;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<Tensor> outputs_;
    std::vector<Tensor> output_grads_;
};

// --------------------------------------------------------------------------
// Losses on head logits. The head activation (sigmoid / softmax / identity)
// is folded into the loss so gradients stay numerically exact.
// --------------------------------------------------------------------------

// binary: w * BCE(sigmoid(z), y)       one-hot: w * CCE(softmax(z), y)
// ordinal: w * sum_i (sigmoid(z_i)-y_i)^2      regression: (z-y)^2, no weight
double compute_loss(TaskKind kind, const std::vector<double>& logits,
                    const std::vector<double>& target, double class_weight);
std::vector<double> loss_grad(TaskKind kind, const std::vector<double>& logits,
                              const std::vector<double>& target, double class_weight);

// Head activation applied at inference time.
std::vector<double> head_activation(TaskKind kind, const std::vector<double>& logits);

// --------------------------------------------------------------------------
// Adam + cosine-decay-with-restarts schedule
// --------------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class AdamState {
public:
    AdamState(const std::vector<Tensor*>& params, AdamConfig config = {});

    // Standard bias-corrected update; increments the step counter once.
    void step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads, double lr);

    long steps() const { return t_; }

private:
    AdamConfig config_;
    long t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

struct ScheduleConfig {
    double initial_lr = 1e-3;
    double first_decay_steps = 1.0;
    double t_mul = 1.5;
    double m_mul = 1.0;
    double alpha = 1e-5;

    void validate() const;
};

// Within cycle i of length T_i = first_decay_steps * t_mul^i and peak
// eta_i = initial_lr * m_mul^i:
//   lr = alpha + (eta_i - alpha) * (1 + cos(pi * t / T_i)) / 2
double lr_at_step(const ScheduleConfig& config, double step);

// --------------------------------------------------------------------------
// Weight checkpoint: "CNW1" header + layer-ordered f64 LE blobs, with a JSON
// shape manifest sidecar written alongside.
// --------------------------------------------------------------------------

void save_weights(const std::vector<Tensor*>& params, const std::filesystem::path& path);
void load_weights(const std::vector<Tensor*>& params, const std::filesystem::path& path);

std::vector<double> snapshot_params(const std::vector<Tensor*>& params);
void restore_params(const std::vector<Tensor*>& params, const std::vector<double>& snapshot);

}  // namespace carenet::nn
