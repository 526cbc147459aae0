#include <algorithm>
#include <cmath>

#include "carenet/explain.hpp"

namespace carenet {

namespace {

// Bilinear upsample of an (h, w) map to (out_h, out_w).
std::vector<double> upsample_bilinear(const std::vector<double>& src, int h, int w, int out_h,
                                      int out_w) {
    std::vector<double> dst(static_cast<std::size_t>(out_h) * out_w);
    const double ry = static_cast<double>(h) / out_h;
    const double rx = static_cast<double>(w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const double sy = std::min(static_cast<double>(h - 1), y * ry);
            const double sx = std::min(static_cast<double>(w - 1), x * rx);
            const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
            const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
            const double fy = sy - y0, fx = sx - x0;
            const double v00 = src[static_cast<std::size_t>(y0) * w + x0];
            const double v01 = src[static_cast<std::size_t>(y0) * w + x1];
            const double v10 = src[static_cast<std::size_t>(y1) * w + x0];
            const double v11 = src[static_cast<std::size_t>(y1) * w + x1];
            dst[static_cast<std::size_t>(y) * out_w + x] =
                (v00 * (1 - fx) + v01 * fx) * (1 - fy) + (v10 * (1 - fx) + v11 * fx) * fy;
        }
    }
    return dst;
}

}  // namespace

Heatmap grad_cam(DualPathNetwork& net, const Patch& patch, int class_index) {
    const TaskSchema& schema = net.schema();
    require(class_index >= 0 && class_index < schema.output_dim, ErrorKind::Graph,
            "class index out of range for the task head");

    // Forward with recording, then backprop d(logit_class) = 1.
    const nn::Tensor logits = net.forward(patch_to_tensor(patch), /*record=*/true);
    net.zero_grads();
    nn::Tensor seed(logits.shape);
    seed.v[static_cast<std::size_t>(class_index)] = 1.0;
    net.backward(seed, /*record=*/true);

    const std::size_t target = net.spatial_target_layer();
    const nn::Tensor& maps = net.spatial_activation(target);
    const nn::Tensor& dmaps = net.spatial_activation_grad(target);
    require(maps.shape.size() == 3, ErrorKind::Graph, "grad-cam target layer is not spatial");

    const int h = maps.shape[0], w = maps.shape[1], k = maps.shape[2];
    const double inv_hw = 1.0 / (static_cast<double>(h) * w);

    // alpha_k = spatial mean of the gradient on map k.
    std::vector<double> alpha(static_cast<std::size_t>(k), 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int f = 0; f < k; ++f)
                alpha[static_cast<std::size_t>(f)] +=
                    dmaps.v[(static_cast<std::size_t>(r) * w + c) * k + f];
    for (double& a : alpha) a *= inv_hw;

    // ReLU(sum_k alpha_k A_k)
    std::vector<double> cam(static_cast<std::size_t>(h) * w, 0.0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double s = 0.0;
            for (int f = 0; f < k; ++f)
                s += alpha[static_cast<std::size_t>(f)] *
                     maps.v[(static_cast<std::size_t>(r) * w + c) * k + f];
            cam[static_cast<std::size_t>(r) * w + c] = s > 0.0 ? s : 0.0;
        }
    }

    Heatmap heat;
    heat.height = patch.size;
    heat.width = patch.size;
    heat.class_index = class_index;
    heat.source_layer = "spatial path conv " + std::to_string(target);
    heat.values = upsample_bilinear(cam, h, w, patch.size, patch.size);

    double peak = 0.0;
    for (double v : heat.values) peak = std::max(peak, v);
    if (peak > 0.0)
        for (double& v : heat.values) v /= peak;
    return heat;
}

ChannelImportance channel_importance(DualPathNetwork& net, const WavenumberAxis& axis, int top_n,
                                     bool signed_sum) {
    auto& first = net.spectral_path().layer(0);
    auto* conv = dynamic_cast<nn::Conv2D*>(&first);
    require(conv != nullptr && conv->kernel_h() == 1 && conv->kernel_w() == 1, ErrorKind::Graph,
            "spectral path must start with a 1x1 convolution");
    const int channels = conv->in_channels();
    require(channels == axis.n_points, ErrorKind::Input,
            "axis length does not match the network input channels");

    // kernel layout (1, 1, C, F): score_c = sum_f |K[c, f]|
    const int filters = conv->filters();
    ChannelImportance out;
    out.scores.assign(static_cast<std::size_t>(channels), 0.0);
    for (int c = 0; c < channels; ++c) {
        double s = 0.0;
        for (int f = 0; f < filters; ++f) {
            const double k = conv->kernel().v[static_cast<std::size_t>(c) * filters + f];
            s += signed_sum ? k : std::abs(k);
        }
        out.scores[static_cast<std::size_t>(c)] = s;
    }

    // Top-N channels grouped into contiguous index runs, scored by their sum.
    const int n = std::min(top_n, channels);
    std::vector<int> idx(static_cast<std::size_t>(channels));
    for (int i = 0; i < channels; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return out.scores[static_cast<std::size_t>(a)] > out.scores[static_cast<std::size_t>(b)];
    });
    std::vector<std::uint8_t> selected(static_cast<std::size_t>(channels), 0);
    for (int i = 0; i < n; ++i) selected[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;

    for (int c = 0; c < channels;) {
        if (!selected[static_cast<std::size_t>(c)]) {
            ++c;
            continue;
        }
        int last = c;
        double score = 0.0;
        while (last < channels && selected[static_cast<std::size_t>(last)]) {
            score += out.scores[static_cast<std::size_t>(last)];
            ++last;
        }
        ImportanceBand band;
        band.channel_first = c;
        band.channel_last = last - 1;
        band.wavenumber_hi = axis.at(c);
        band.wavenumber_lo = axis.at(last - 1);
        band.score = score;
        out.top_bands.push_back(band);
        c = last;
    }
    std::stable_sort(out.top_bands.begin(), out.top_bands.end(),
                     [](const ImportanceBand& a, const ImportanceBand& b) { return a.score > b.score; });
    return out;
}

PathContribution path_contribution(DualPathNetwork& net, const std::vector<Patch>& patches) {
    require(!patches.empty(), ErrorKind::Input, "path contribution needs at least one patch");
    auto* dense = dynamic_cast<nn::Dense*>(&net.fusion().layer(0));
    require(dense != nullptr, ErrorKind::Graph, "fusion stack must start with a dense layer");

    const int spectral_dim = net.spectral_gap_dim();
    const int concat_dim = dense->in_dim();
    const int out_dim = dense->out_dim();

    double spectral_total = 0.0, spatial_total = 0.0;
    for (const Patch& patch : patches) {
        net.forward(patch_to_tensor(patch), /*record=*/true);
        const nn::Tensor& concat = net.recorded_concat();
        double spectral = 0.0, spatial = 0.0;
        for (int i = 0; i < concat_dim; ++i) {
            const double g = concat.v[static_cast<std::size_t>(i)];
            double s = 0.0;
            for (int j = 0; j < out_dim; ++j)
                s += std::abs(g * dense->weights().v[static_cast<std::size_t>(i) * out_dim + j]);
            (i < spectral_dim ? spectral : spatial) += s;
        }
        const double total = spectral + spatial;
        if (total > 0.0) {
            spectral_total += spectral / total;
            spatial_total += spatial / total;
        } else {
            spectral_total += 0.5;
            spatial_total += 0.5;
        }
    }
    PathContribution out;
    out.spectral_fraction = spectral_total / static_cast<double>(patches.size());
    out.spatial_fraction = spatial_total / static_cast<double>(patches.size());
    return out;
}

}  // namespace carenet
