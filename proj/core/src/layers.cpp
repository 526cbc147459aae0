#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "carenet/autonn.hpp"
#include "carenet/error.hpp"

namespace carenet::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void check_image(const std::vector<int>& shape, const std::string& layer) {
    require(shape.size() == 3, ErrorKind::Graph, layer + ": expected (H, W, C) input, got " +
                                                     shape_str(shape));
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2D (stride 1, zero same-padding), im2col + GEMM
// ---------------------------------------------------------------------------

Conv2D::Conv2D(int kernel_h, int kernel_w, int in_channels, int filters, std::uint64_t seed,
               std::string label)
    : kh_(kernel_h), kw_(kernel_w), in_channels_(in_channels), filters_(filters),
      label_(std::move(label)) {
    require(kh_ >= 1 && kw_ >= 1 && in_channels_ >= 1 && filters_ >= 1, ErrorKind::Graph,
            "conv dimensions must be positive");
    kernel_ = he_normal_init({kh_, kw_, in_channels_, filters_}, kh_ * kw_ * in_channels_, seed);
    bias_ = Tensor::zeros({filters_});
    kernel_grad_ = Tensor::zeros({kh_, kw_, in_channels_, filters_});
    bias_grad_ = Tensor::zeros({filters_});
}

std::vector<int> Conv2D::output_shape(const std::vector<int>& input) const {
    check_image(input, label_);
    require(input[2] == in_channels_, ErrorKind::Graph,
            label_ + ": channel mismatch, input " + shape_str(input) + " expects " +
                std::to_string(in_channels_));
    return {input[0], input[1], filters_};
}

Tensor Conv2D::forward(const Tensor& input) {
    output_shape(input.shape);  // validates
    input_ = input;
    const int h = input.shape[0], w = input.shape[1];
    const int patch = kh_ * kw_ * in_channels_;
    const int ph = kh_ / 2, pw = kw_ / 2;

    // im2col: one row per output pixel, zero padding outside the image.
    cols_.assign(static_cast<std::size_t>(h) * w * patch, 0.0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double* row = cols_.data() + (static_cast<std::size_t>(r) * w + c) * patch;
            for (int dr = 0; dr < kh_; ++dr) {
                const int ir = r + dr - ph;
                if (ir < 0 || ir >= h) continue;
                for (int dc = 0; dc < kw_; ++dc) {
                    const int ic = c + dc - pw;
                    if (ic < 0 || ic >= w) continue;
                    const double* src =
                        input.v.data() + (static_cast<std::size_t>(ir) * w + ic) * in_channels_;
                    std::copy(src, src + in_channels_,
                              row + (static_cast<std::size_t>(dr) * kw_ + dc) * in_channels_);
                }
            }
        }
    }

    Tensor out({h, w, filters_});
    ConstMapMat cols(cols_.data(), static_cast<Eigen::Index>(h) * w, patch);
    ConstMapMat kernel(kernel_.v.data(), patch, filters_);
    MapMat result(out.v.data(), static_cast<Eigen::Index>(h) * w, filters_);
    result.noalias() = cols * kernel;
    for (Eigen::Index i = 0; i < result.rows(); ++i)
        for (int f = 0; f < filters_; ++f) result(i, f) += bias_.v[static_cast<std::size_t>(f)];
    return out;
}

Tensor Conv2D::backward(const Tensor& grad_output) {
    const int h = input_.shape[0], w = input_.shape[1];
    const int patch = kh_ * kw_ * in_channels_;
    const int ph = kh_ / 2, pw = kw_ / 2;
    require(grad_output.shape == std::vector<int>({h, w, filters_}), ErrorKind::Graph,
            label_ + ": gradient shape mismatch");

    ConstMapMat dout(grad_output.v.data(), static_cast<Eigen::Index>(h) * w, filters_);
    ConstMapMat cols(cols_.data(), static_cast<Eigen::Index>(h) * w, patch);

    MapMat dkernel(kernel_grad_.v.data(), patch, filters_);
    dkernel.noalias() += cols.transpose() * dout;
    for (Eigen::Index i = 0; i < dout.rows(); ++i)
        for (int f = 0; f < filters_; ++f) bias_grad_.v[static_cast<std::size_t>(f)] += dout(i, f);

    // dcols = dout * K^T, then col2im accumulates into the input gradient.
    RowMat dcols = dout * ConstMapMat(kernel_.v.data(), patch, filters_).transpose();
    Tensor dinput({h, w, in_channels_});
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double* row = dcols.data() + (static_cast<std::size_t>(r) * w + c) * patch;
            for (int dr = 0; dr < kh_; ++dr) {
                const int ir = r + dr - ph;
                if (ir < 0 || ir >= h) continue;
                for (int dc = 0; dc < kw_; ++dc) {
                    const int ic = c + dc - pw;
                    if (ic < 0 || ic >= w) continue;
                    double* dst =
                        dinput.v.data() + (static_cast<std::size_t>(ir) * w + ic) * in_channels_;
                    const double* src = row + (static_cast<std::size_t>(dr) * kw_ + dc) * in_channels_;
                    for (int ch = 0; ch < in_channels_; ++ch) dst[ch] += src[ch];
                }
            }
        }
    }
    return dinput;
}

// ---------------------------------------------------------------------------
// MaxPool2D (2x2, stride 2, ceil with zero padding)
// ---------------------------------------------------------------------------

std::vector<int> MaxPool2D::output_shape(const std::vector<int>& input) const {
    check_image(input, label_);
    return {(input[0] + 1) / 2, (input[1] + 1) / 2, input[2]};
}

Tensor MaxPool2D::forward(const Tensor& input) {
    check_image(input.shape, label_);
    in_shape_ = input.shape;
    const int h = input.shape[0], w = input.shape[1], ch = input.shape[2];
    const int oh = (h + 1) / 2, ow = (w + 1) / 2;

    Tensor out({oh, ow, ch});
    argmax_.assign(out.v.size(), -1);
    for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
            for (int f = 0; f < ch; ++f) {
                // Padded cells hold zero; ties keep the first window cell in
                // row-major order, padded or not.
                double best = 0.0;
                long best_idx = -1;
                bool seen = false;
                for (int dr = 0; dr < 2; ++dr) {
                    for (int dc = 0; dc < 2; ++dc) {
                        const int ir = 2 * r + dr, ic = 2 * c + dc;
                        const bool inside = ir < h && ic < w;
                        const double value =
                            inside ? input.v[(static_cast<std::size_t>(ir) * w + ic) * ch + f] : 0.0;
                        if (!seen || value > best) {
                            best = value;
                            best_idx = inside ? (static_cast<long>(ir) * w + ic) * ch + f : -1;
                            seen = true;
                        }
                    }
                }
                const std::size_t out_idx = (static_cast<std::size_t>(r) * ow + c) * ch + f;
                out.v[out_idx] = best;
                argmax_[out_idx] = best_idx;
            }
        }
    }
    return out;
}

Tensor MaxPool2D::backward(const Tensor& grad_output) {
    Tensor dinput(in_shape_);
    require(grad_output.v.size() == argmax_.size(), ErrorKind::Graph,
            label_ + ": gradient shape mismatch");
    for (std::size_t i = 0; i < argmax_.size(); ++i) {
        if (argmax_[i] >= 0) dinput.v[static_cast<std::size_t>(argmax_[i])] += grad_output.v[i];
    }
    return dinput;
}

// ---------------------------------------------------------------------------
// GlobalAvgPool
// ---------------------------------------------------------------------------

std::vector<int> GlobalAvgPool::output_shape(const std::vector<int>& input) const {
    check_image(input, label_);
    return {input[2]};
}

Tensor GlobalAvgPool::forward(const Tensor& input) {
    check_image(input.shape, label_);
    in_shape_ = input.shape;
    const int h = input.shape[0], w = input.shape[1], ch = input.shape[2];
    Tensor out({ch});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int f = 0; f < ch; ++f)
                out.v[static_cast<std::size_t>(f)] +=
                    input.v[(static_cast<std::size_t>(r) * w + c) * ch + f];
    const double scale = 1.0 / (static_cast<double>(h) * w);
    for (double& x : out.v) x *= scale;
    return out;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_output) {
    const int h = in_shape_[0], w = in_shape_[1], ch = in_shape_[2];
    require(grad_output.shape == std::vector<int>({ch}), ErrorKind::Graph,
            label_ + ": gradient shape mismatch");
    Tensor dinput(in_shape_);
    const double scale = 1.0 / (static_cast<double>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int f = 0; f < ch; ++f)
                dinput.v[(static_cast<std::size_t>(r) * w + c) * ch + f] =
                    grad_output.v[static_cast<std::size_t>(f)] * scale;
    return dinput;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

Dense::Dense(int in_dim, int out_dim, std::uint64_t seed, std::string label)
    : in_(in_dim), out_(out_dim), label_(std::move(label)) {
    require(in_ >= 1 && out_ >= 1, ErrorKind::Graph, "dense dimensions must be positive");
    weights_ = he_normal_init({in_, out_}, in_, seed);
    bias_ = Tensor::zeros({out_});
    weights_grad_ = Tensor::zeros({in_, out_});
    bias_grad_ = Tensor::zeros({out_});
}

std::vector<int> Dense::output_shape(const std::vector<int>& input) const {
    require(input.size() == 1 && input[0] == in_, ErrorKind::Graph,
            label_ + ": expected (" + std::to_string(in_) + ") input, got " + shape_str(input));
    return {out_};
}

Tensor Dense::forward(const Tensor& input) {
    output_shape(input.shape);
    input_ = input;
    Tensor out({out_});
    ConstMapMat w(weights_.v.data(), in_, out_);
    Eigen::Map<const Eigen::VectorXd> x(input.v.data(), in_);
    Eigen::Map<Eigen::VectorXd> y(out.v.data(), out_);
    y.noalias() = w.transpose() * x;
    for (int j = 0; j < out_; ++j) out.v[static_cast<std::size_t>(j)] += bias_.v[static_cast<std::size_t>(j)];
    return out;
}

Tensor Dense::backward(const Tensor& grad_output) {
    require(grad_output.shape == std::vector<int>({out_}), ErrorKind::Graph,
            label_ + ": gradient shape mismatch");
    Eigen::Map<const Eigen::VectorXd> x(input_.v.data(), in_);
    Eigen::Map<const Eigen::VectorXd> dy(grad_output.v.data(), out_);

    MapMat dw(weights_grad_.v.data(), in_, out_);
    dw.noalias() += x * dy.transpose();
    for (int j = 0; j < out_; ++j) bias_grad_.v[static_cast<std::size_t>(j)] += dy(j);

    Tensor dinput({in_});
    Eigen::Map<Eigen::VectorXd> dx(dinput.v.data(), in_);
    ConstMapMat w(weights_.v.data(), in_, out_);
    dx.noalias() = w * dy;
    return dinput;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor ActivationLayer::forward(const Tensor& input) {
    Tensor out = input;
    switch (kind_) {
        case Activation::Relu:
            for (double& x : out.v) x = x > 0.0 ? x : 0.0;
            break;
        case Activation::Sigmoid:
            for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
            break;
        case Activation::Softmax: {
            double peak = out.v[0];
            for (double x : out.v) peak = std::max(peak, x);
            double sum = 0.0;
            for (double& x : out.v) {
                x = std::exp(x - peak);
                sum += x;
            }
            for (double& x : out.v) x /= sum;
            break;
        }
        case Activation::Linear:
            break;
    }
    output_ = out;
    return out;
}

Tensor ActivationLayer::backward(const Tensor& grad_output) {
    require(grad_output.v.size() == output_.v.size(), ErrorKind::Graph,
            label_ + ": gradient shape mismatch");
    Tensor dinput = grad_output;
    switch (kind_) {
        case Activation::Relu:
            for (std::size_t i = 0; i < dinput.v.size(); ++i)
                if (output_.v[i] <= 0.0) dinput.v[i] = 0.0;
            break;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < dinput.v.size(); ++i)
                dinput.v[i] *= output_.v[i] * (1.0 - output_.v[i]);
            break;
        case Activation::Softmax: {
            // J^T g = s .* (g - <g, s>)
            double dot = 0.0;
            for (std::size_t i = 0; i < output_.v.size(); ++i) dot += grad_output.v[i] * output_.v[i];
            for (std::size_t i = 0; i < dinput.v.size(); ++i)
                dinput.v[i] = output_.v[i] * (grad_output.v[i] - dot);
            break;
        }
        case Activation::Linear:
            break;
    }
    return dinput;
}

// ---------------------------------------------------------------------------
// Sequential
// ---------------------------------------------------------------------------

Tensor Sequential::forward(const Tensor& input, bool record) {
    if (record) outputs_.assign(layers_.size(), Tensor{});
    Tensor x = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        x = layers_[i]->forward(x);
        if (record) outputs_[i] = x;
    }
    return x;
}

Tensor Sequential::backward(const Tensor& grad_output, bool record) {
    if (record) output_grads_.assign(layers_.size(), Tensor{});
    Tensor g = grad_output;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        if (record) output_grads_[i] = g;
        g = layers_[i]->backward(g);
    }
    return g;
}

std::vector<Tensor*> Sequential::params() {
    std::vector<Tensor*> all;
    for (auto& layer : layers_)
        for (Tensor* p : layer->params()) all.push_back(p);
    return all;
}

std::vector<Tensor*> Sequential::grads() {
    std::vector<Tensor*> all;
    for (auto& layer : layers_)
        for (Tensor* g : layer->grads()) all.push_back(g);
    return all;
}

std::vector<int> Sequential::output_shape(std::vector<int> input) const {
    for (const auto& layer : layers_) input = layer->output_shape(input);
    return input;
}

}  // namespace carenet::nn
