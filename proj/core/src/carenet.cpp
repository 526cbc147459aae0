#include <algorithm>
#include <cmath>

#include "carenet/carenet.hpp"
#include "carenet/rng.hpp"

namespace carenet {

void CaReNetConfig::validate() const {
    require(patch_size >= 2, ErrorKind::Config, "patch_size must be >= 2");
    require(in_channels >= 1, ErrorKind::Config, "in_channels must be >= 1");
    require(!spectral_filters.empty() && !spatial_filters.empty(), ErrorKind::Config,
            "both paths need at least one conv stage");
    for (int f : spectral_filters)
        require(f >= 1, ErrorKind::Config, "spectral filter counts must be positive");
    for (int f : spatial_filters)
        require(f >= 1, ErrorKind::Config, "spatial filter counts must be positive");
    require(fusion_units >= 1, ErrorKind::Config, "fusion_units must be >= 1");
}

namespace {

int head_dim(const TaskSchema& schema) { return schema.output_dim; }

}  // namespace

DualPathNetwork build_carenet(const CaReNetConfig& config, const TaskSchema& schema) {
    config.validate();
    DualPathNetwork net;
    net.config_ = config;
    net.schema_ = schema;

    std::uint64_t seed_stream = 0;
    const auto next_seed = [&] { return Rng::derive_seed(config.init_seed, seed_stream++); };

    // Spectral path: 1x1 convolutions, each stage conv -> relu -> maxpool.
    int channels = config.in_channels;
    for (std::size_t s = 0; s < config.spectral_filters.size(); ++s) {
        const int filters = config.spectral_filters[s];
        net.spectral_.add(std::make_unique<nn::Conv2D>(1, 1, channels, filters, next_seed(),
                                                       "spectral_conv" + std::to_string(s + 1)));
        net.spectral_.add(std::make_unique<nn::ActivationLayer>(
            nn::Activation::Relu, "spectral_relu" + std::to_string(s + 1)));
        net.spectral_.add(
            std::make_unique<nn::MaxPool2D>("spectral_pool" + std::to_string(s + 1)));
        channels = filters;
    }
    net.spectral_.add(std::make_unique<nn::GlobalAvgPool>("spectral_gap"));
    net.spectral_gap_dim_ = channels;

    // Spatial path: 3x3 convolutions.
    channels = config.in_channels;
    for (std::size_t s = 0; s < config.spatial_filters.size(); ++s) {
        const int filters = config.spatial_filters[s];
        net.spatial_.add(std::make_unique<nn::Conv2D>(3, 3, channels, filters, next_seed(),
                                                      "spatial_conv" + std::to_string(s + 1)));
        net.spatial_.add(std::make_unique<nn::ActivationLayer>(
            nn::Activation::Relu, "spatial_relu" + std::to_string(s + 1)));
        net.spatial_.add(std::make_unique<nn::MaxPool2D>("spatial_pool" + std::to_string(s + 1)));
        channels = filters;
    }
    // Grad-CAM target: the ReLU following the last spatial conv.
    net.spatial_target_ = net.spatial_.depth() - 2;
    net.spatial_.add(std::make_unique<nn::GlobalAvgPool>("spatial_gap"));
    net.spatial_gap_dim_ = channels;

    const int concat_dim = net.spectral_gap_dim_ + net.spatial_gap_dim_;
    net.fusion_.add(
        std::make_unique<nn::Dense>(concat_dim, config.fusion_units, next_seed(), "fusion_dense"));
    net.fusion_.add(std::make_unique<nn::ActivationLayer>(nn::Activation::Relu, "fusion_relu"));
    net.fusion_.add(std::make_unique<nn::Dense>(config.fusion_units, head_dim(schema), next_seed(),
                                                "head_dense"));

    // Shape check end to end.
    const std::vector<int> input_shape = {config.patch_size, config.patch_size,
                                          config.in_channels};
    net.spectral_.output_shape(input_shape);
    net.spatial_.output_shape(input_shape);
    net.fusion_.output_shape({concat_dim});
    return net;
}

nn::Tensor DualPathNetwork::forward(const nn::Tensor& input, bool record) {
    const nn::Tensor a = spectral_.forward(input, record);
    const nn::Tensor b = spatial_.forward(input, record);
    nn::Tensor concat({spectral_gap_dim_ + spatial_gap_dim_});
    std::copy(a.v.begin(), a.v.end(), concat.v.begin());
    std::copy(b.v.begin(), b.v.end(), concat.v.begin() + spectral_gap_dim_);
    if (record) concat_ = concat;
    return fusion_.forward(concat, record);
}

void DualPathNetwork::backward(const nn::Tensor& grad_logits, bool record) {
    const nn::Tensor dconcat = fusion_.backward(grad_logits, record);
    nn::Tensor da({spectral_gap_dim_});
    nn::Tensor db({spatial_gap_dim_});
    std::copy(dconcat.v.begin(), dconcat.v.begin() + spectral_gap_dim_, da.v.begin());
    std::copy(dconcat.v.begin() + spectral_gap_dim_, dconcat.v.end(), db.v.begin());
    spectral_.backward(da, record);
    spatial_.backward(db, record);
}

void DualPathNetwork::zero_grads() {
    for (nn::Tensor* g : grads()) g->fill(0.0);
}

std::vector<nn::Tensor*> DualPathNetwork::params() {
    std::vector<nn::Tensor*> all = spectral_.params();
    for (nn::Tensor* p : spatial_.params()) all.push_back(p);
    for (nn::Tensor* p : fusion_.params()) all.push_back(p);
    return all;
}

std::vector<nn::Tensor*> DualPathNetwork::grads() {
    std::vector<nn::Tensor*> all = spectral_.grads();
    for (nn::Tensor* g : spatial_.grads()) all.push_back(g);
    for (nn::Tensor* g : fusion_.grads()) all.push_back(g);
    return all;
}

std::vector<std::string> DualPathNetwork::param_names() const {
    std::vector<std::string> names;
    const auto collect = [&](const nn::Sequential& path) {
        for (std::size_t i = 0; i < path.depth(); ++i) {
            auto& layer = const_cast<nn::Sequential&>(path).layer(i);
            const std::size_t n_params = layer.params().size();
            if (n_params >= 1) names.push_back(layer.name() + ".kernel");
            if (n_params >= 2) names.push_back(layer.name() + ".bias");
        }
    };
    collect(spectral_);
    collect(spatial_);
    collect(fusion_);
    return names;
}

long DualPathNetwork::param_count() {
    long count = 0;
    for (const nn::Tensor* p : params()) count += static_cast<long>(p->v.size());
    return count;
}

long count_params(const CaReNetConfig& config, const TaskSchema& schema) {
    config.validate();
    long count = 0;
    int channels = config.in_channels;
    for (int f : config.spectral_filters) {
        count += static_cast<long>(channels) * f + f;  // 1x1 conv + bias
        channels = f;
    }
    const int spectral_out = channels;
    channels = config.in_channels;
    for (int f : config.spatial_filters) {
        count += 9L * channels * f + f;  // 3x3 conv + bias
        channels = f;
    }
    const int concat = spectral_out + channels;
    count += static_cast<long>(concat) * config.fusion_units + config.fusion_units;
    count += static_cast<long>(config.fusion_units) * schema.output_dim + schema.output_dim;
    return count;
}

// ---------------------------------------------------------------------------
// Dihedral augmentation
// ---------------------------------------------------------------------------

Patch apply_dihedral(const Patch& patch, int element) {
    require(patch.size >= 1 && patch.channels >= 1, ErrorKind::Input, "empty patch");
    require(element >= 0 && element < 8, ErrorKind::Input, "dihedral element out of range");
    if (element == 0) return patch;

    const int n = patch.size;
    Patch out = patch;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            int sr = r, sc = c;
            switch (element) {
                case 1: sr = n - 1 - c; sc = r; break;          // rot 90
                case 2: sr = n - 1 - r; sc = n - 1 - c; break;  // rot 180
                case 3: sr = c; sc = n - 1 - r; break;          // rot 270
                case 4: sr = r; sc = n - 1 - c; break;          // flip horizontal
                case 5: sr = n - 1 - r; sc = c; break;          // flip vertical
                case 6: sr = c; sc = r; break;                  // transpose
                case 7: sr = n - 1 - c; sc = n - 1 - r; break;  // anti-transpose
                default: break;
            }
            const float* src = patch.pixel(sr, sc);
            std::copy(src, src + patch.channels, out.pixel(r, c));
        }
    }
    return out;
}

Patch augment_patch(const Patch& patch, Rng& rng) {
    require(patch.size * patch.size * patch.channels == static_cast<int>(patch.data.size()),
            ErrorKind::Input, "patch buffer does not match its dimensions");
    return apply_dihedral(patch, static_cast<int>(rng.below(8)));
}

nn::Tensor patch_to_tensor(const Patch& patch) {
    nn::Tensor t({patch.size, patch.size, patch.channels});
    for (std::size_t i = 0; i < patch.data.size(); ++i) t.v[i] = patch.data[i];
    return t;
}

}  // namespace carenet
