#include <doctest.h>

#include <carenet/explain.hpp>
#include <carenet/rng.hpp>
#include <cmath>

using namespace carenet;

namespace {

// Single-stage dual-path micro network: the spatial target map stays at the
// patch resolution, so heatmaps compare directly against hand computation.
CaReNetConfig micro_config(int channels) {
    CaReNetConfig config;
    config.patch_size = 8;
    config.in_channels = channels;
    config.spectral_filters = {4};
    config.spatial_filters = {2};
    config.fusion_units = 6;
    config.init_seed = 21;
    return config;
}

Patch uniform_patch(int size, int channels, double value) {
    Patch p;
    p.size = size;
    p.channels = channels;
    p.data.assign(static_cast<std::size_t>(size) * size * channels,
                  static_cast<float>(value));
    return p;
}

}  // namespace

TEST_CASE("grad-cam heatmap is normalized and zero regions stay cold") {
    const int channels = 3;
    DualPathNetwork net = build_carenet(micro_config(channels), TaskSchema::type());
    // Positive fusion/head weights pin the class gradient positive, so the
    // CAM cannot be ReLU-killed outright.
    auto* fusion = dynamic_cast<nn::Dense*>(&net.fusion().layer(0));
    auto* head = dynamic_cast<nn::Dense*>(&net.fusion().layer(2));
    REQUIRE(fusion != nullptr);
    REQUIRE(head != nullptr);
    for (auto& w : fusion->weights().v) w = 0.3;
    for (auto& w : head->weights().v) w = 1.0;

    // Patch with a live left half and a zeroed right half.
    Patch p = uniform_patch(8, channels, 0.0);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 4; ++c)
            for (int ch = 0; ch < channels; ++ch) p.pixel(r, c)[ch] = 0.8f;

    const Heatmap heat = grad_cam(net, p, 0);
    REQUIRE(heat.height == 8);
    REQUIRE(heat.width == 8);
    double peak = 0.0;
    for (double v : heat.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        peak = std::max(peak, v);
    }
    CHECK(peak == doctest::Approx(1.0));

    double live = 0.0, dead = 0.0;
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 4; ++c) live += heat.at(r, c);
        for (int c = 5; c < 8; ++c) dead += heat.at(r, c);
    }
    CHECK(dead / (4.0 * 8.0) <= live / (4.0 * 8.0));
}

TEST_CASE("grad-cam matches the symbolic two-layer evaluation") {
    // Hand-set spatial conv so the analysis is closed-form. The micro network
    // keeps the target map at 8x8 (upsampling is the identity).
    const int channels = 2;
    DualPathNetwork net = build_carenet(micro_config(channels), TaskSchema::type());

    auto* conv = dynamic_cast<nn::Conv2D*>(&net.spatial_path().layer(0));
    REQUIRE(conv != nullptr);
    conv->kernel().fill(0.0);
    // filter 0 = center tap of channel 0; filter 1 = center tap of channel 1
    // kernel layout (kh, kw, Cin, F): center is (1,1)
    const int f_count = 2;
    conv->kernel().v[((1 * 3 + 1) * channels + 0) * f_count + 0] = 1.0;
    conv->kernel().v[((1 * 3 + 1) * channels + 1) * f_count + 1] = 1.0;
    conv->bias().fill(0.0);
    // Uniform positive tail keeps every fusion unit active and the alphas
    // positive, so the oracle exercises a non-trivial heatmap.
    auto* fusion_pin = dynamic_cast<nn::Dense*>(&net.fusion().layer(0));
    auto* head_pin = dynamic_cast<nn::Dense*>(&net.fusion().layer(2));
    REQUIRE(fusion_pin != nullptr);
    REQUIRE(head_pin != nullptr);
    for (auto& w : fusion_pin->weights().v) w = 0.5;
    for (auto& w : head_pin->weights().v) w = 1.0;

    Patch p = uniform_patch(8, channels, 0.0);
    // channel 0 carries a gradient left->right; channel 1 constant
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            p.pixel(r, c)[0] = static_cast<float>(c) / 7.0f;
            p.pixel(r, c)[1] = 0.5f;
        }

    const Heatmap heat = grad_cam(net, p, 0);

    // Oracle: A_0(r,c) = c/7, A_1 = 0.5 (the center-tap conv is an identity
    // and ReLU passes non-negative values). Only GAP and the dense stack
    // follow, so alpha_k has the closed form
    //   alpha_k = (1/64) sum_j W_fusion[spectral_dim + k, j]
    //                     * 1[z_j > 0] * W_head[j, 0]
    // evaluated at the fusion pre-activations z of this patch. The fusion
    // input values come from a recorded forward pass; the derivative itself
    // is assembled by hand from the weight matrices.
    net.forward(patch_to_tensor(p), true);
    const nn::Tensor& concat = net.recorded_concat();
    auto* fusion = dynamic_cast<nn::Dense*>(&net.fusion().layer(0));
    auto* head = dynamic_cast<nn::Dense*>(&net.fusion().layer(2));
    REQUIRE(fusion != nullptr);
    REQUIRE(head != nullptr);
    const int hidden = fusion->out_dim();
    std::vector<double> z(static_cast<std::size_t>(hidden), 0.0);
    for (int j = 0; j < hidden; ++j) {
        double s = fusion->bias().v[static_cast<std::size_t>(j)];
        for (int i = 0; i < fusion->in_dim(); ++i)
            s += concat.v[static_cast<std::size_t>(i)] *
                 fusion->weights().v[static_cast<std::size_t>(i) * hidden + j];
        z[static_cast<std::size_t>(j)] = s;
    }
    const int spectral_dim = net.spectral_gap_dim();
    double alpha0 = 0.0, alpha1 = 0.0;
    for (int j = 0; j < hidden; ++j) {
        if (z[static_cast<std::size_t>(j)] <= 0.0) continue;
        const double tail = head->weights().v[static_cast<std::size_t>(j) * head->out_dim() + 0];
        alpha0 += fusion->weights().v[static_cast<std::size_t>(spectral_dim) * hidden + j] * tail;
        alpha1 +=
            fusion->weights().v[static_cast<std::size_t>(spectral_dim + 1) * hidden + j] * tail;
    }
    alpha0 /= 64.0;
    alpha1 /= 64.0;

    std::vector<double> oracle(64);
    double peak = 0.0;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            const double a0 = static_cast<double>(p.pixel(r, c)[0]);
            const double v = std::max(0.0, alpha0 * a0 + alpha1 * 0.5);
            oracle[static_cast<std::size_t>(r) * 8 + c] = v;
            peak = std::max(peak, v);
        }
    REQUIRE(peak > 0.0);
    for (int i = 0; i < 64; ++i)
        CHECK(std::abs(heat.values[static_cast<std::size_t>(i)] -
                       oracle[static_cast<std::size_t>(i)] / peak) <= 1e-9);
}

TEST_CASE("all-negative weights kill the heatmap") {
    const int channels = 2;
    DualPathNetwork net = build_carenet(micro_config(channels), TaskSchema::type());
    // Make every downstream weight of the spatial GAP features negative so
    // alpha_k < 0 while the maps stay non-negative.
    auto* fusion = dynamic_cast<nn::Dense*>(&net.fusion().layer(0));
    REQUIRE(fusion != nullptr);
    const int spectral_dim = net.spectral_gap_dim();
    for (int i = spectral_dim; i < fusion->in_dim(); ++i)
        for (int j = 0; j < fusion->out_dim(); ++j)
            fusion->weights().v[static_cast<std::size_t>(i) * fusion->out_dim() + j] = -0.5;
    auto* head = dynamic_cast<nn::Dense*>(&net.fusion().layer(2));
    REQUIRE(head != nullptr);
    for (auto& w : head->weights().v) w = 1.0;

    Patch p = uniform_patch(8, channels, 0.7);
    const Heatmap heat = grad_cam(net, p, 0);
    for (double v : heat.values) CHECK(v == 0.0);
}

TEST_CASE("channel importance: uniform kernels and single live channel") {
    const int channels = 5;
    DualPathNetwork net = build_carenet(micro_config(channels), TaskSchema::type());
    const WavenumberAxis axis(1800.0, 900.0, channels);

    auto* conv = dynamic_cast<nn::Conv2D*>(&net.spectral_path().layer(0));
    REQUIRE(conv != nullptr);

    SUBCASE("all-ones kernels give uniform scores") {
        conv->kernel().fill(1.0);
        const ChannelImportance ci = channel_importance(net, axis, 3);
        for (double s : ci.scores) CHECK(s == doctest::Approx(ci.scores[0]));
    }
    SUBCASE("kernels zero except channel 3 give a single band at channel 3") {
        conv->kernel().fill(0.0);
        const int f_count = conv->filters();
        for (int f = 0; f < f_count; ++f)
            conv->kernel().v[static_cast<std::size_t>(3) * f_count + f] = f % 2 ? 0.5 : -0.5;
        const ChannelImportance ci = channel_importance(net, axis, 1);
        REQUIRE(ci.top_bands.size() == 1);
        CHECK(ci.top_bands[0].channel_first == 3);
        CHECK(ci.top_bands[0].channel_last == 3);
        CHECK(ci.top_bands[0].wavenumber_hi == doctest::Approx(axis.at(3)));
        // absolute sums: 4 filters * 0.5
        CHECK(ci.top_bands[0].score == doctest::Approx(2.0));
    }
    SUBCASE("importance is invariant under filter permutation") {
        Rng rng(77);
        for (auto& v : conv->kernel().v) v = rng.normal();
        const ChannelImportance before = channel_importance(net, axis, 3);
        // swap filters 0 and 2 across all channels
        const int f_count = conv->filters();
        for (int c = 0; c < channels; ++c)
            std::swap(conv->kernel().v[static_cast<std::size_t>(c) * f_count + 0],
                      conv->kernel().v[static_cast<std::size_t>(c) * f_count + 2]);
        const ChannelImportance after = channel_importance(net, axis, 3);
        for (int c = 0; c < channels; ++c)
            CHECK(before.scores[static_cast<std::size_t>(c)] ==
                  doctest::Approx(after.scores[static_cast<std::size_t>(c)]));
    }
}

TEST_CASE("contiguous top-n channels merge into ranked bands") {
    const int channels = 10;
    DualPathNetwork net = build_carenet(micro_config(channels), TaskSchema::type());
    const WavenumberAxis axis(1800.0, 900.0, channels);
    auto* conv = dynamic_cast<nn::Conv2D*>(&net.spectral_path().layer(0));
    conv->kernel().fill(0.0);
    const int f_count = conv->filters();
    // strong run at channels 2-3, weaker singleton at channel 7
    const auto set_channel = [&](int c, double value) {
        for (int f = 0; f < f_count; ++f)
            conv->kernel().v[static_cast<std::size_t>(c) * f_count + f] = value;
    };
    set_channel(2, 2.0);
    set_channel(3, 1.5);
    set_channel(7, 1.0);
    const ChannelImportance ci = channel_importance(net, axis, 3);
    REQUIRE(ci.top_bands.size() == 2);
    CHECK(ci.top_bands[0].channel_first == 2);
    CHECK(ci.top_bands[0].channel_last == 3);
    CHECK(ci.top_bands[0].score == doctest::Approx((2.0 + 1.5) * f_count));
    CHECK(ci.top_bands[1].channel_first == 7);
    CHECK(ci.top_bands[1].score == doctest::Approx(1.0 * f_count));
    CHECK(ci.top_bands[0].wavenumber_hi > ci.top_bands[0].wavenumber_lo);
}

TEST_CASE("training on a planted discriminative peak pulls it into the top band") {
    // Sparse micro study: all class information lives in one channel; after a
    // long overfit run the first spectral conv concentrates there.
    const int channels = 12, hot = 7;
    Rng rng(3);
    std::vector<Patch> patches;
    for (int i = 0; i < 16; ++i) {
        Patch p;
        p.size = 8;
        p.channels = channels;
        p.data.assign(static_cast<std::size_t>(8) * 8 * channels, 0.0f);
        const int cls = i % 2;
        p.label = cls ? "CA" : "AT";
        for (int px = 0; px < 64; ++px)
            for (int c = 0; c < channels; ++c) {
                double v = 0.03 * rng.normal();
                if (c == hot) v += cls ? 0.9 : 0.3;
                p.data[static_cast<std::size_t>(px) * channels + c] = static_cast<float>(v);
            }
        patches.push_back(std::move(p));
    }
    CaReNetConfig config = micro_config(channels);
    config.init_seed = 11;
    DualPathNetwork net = build_carenet(config, TaskSchema::type());
    TrainConfig tc;
    tc.batch_size = 8;
    tc.epochs = 800;
    tc.seed = 5;
    const TrainResult result = train_model(net, patches, patches, TaskSchema::type(),
                                           {{"AT", 1.0}, {"CA", 1.0}}, tc);
    REQUIRE(result.best_metric >= 0.95);

    const WavenumberAxis axis(1800.0, 900.0, channels);
    const ChannelImportance ci = channel_importance(net, axis, 3);
    REQUIRE(!ci.top_bands.empty());
    const auto& top = ci.top_bands[0];
    CHECK(top.channel_first <= hot);
    CHECK(top.channel_last >= hot);
}

TEST_CASE("path contribution fractions") {
    const int channels = 3;
    DualPathNetwork net = build_carenet(micro_config(channels), TaskSchema::type());

    SUBCASE("zeroed spatial dense weights give spectral fraction 1") {
        auto* fusion = dynamic_cast<nn::Dense*>(&net.fusion().layer(0));
        REQUIRE(fusion != nullptr);
        const int spectral_dim = net.spectral_gap_dim();
        for (int i = spectral_dim; i < fusion->in_dim(); ++i)
            for (int j = 0; j < fusion->out_dim(); ++j)
                fusion->weights().v[static_cast<std::size_t>(i) * fusion->out_dim() + j] = 0.0;
        Patch p = uniform_patch(8, channels, 0.4);
        const PathContribution pc = path_contribution(net, {p});
        CHECK(pc.spectral_fraction == doctest::Approx(1.0));
        CHECK(pc.spatial_fraction == doctest::Approx(0.0));
    }
    SUBCASE("mirrored paths with identical GAP vectors split 50/50") {
        // Equal path widths; both convs reduce to the same per-filter channel
        // sums (spatial uses center taps only, so zero padding is inert) and
        // the fusion weights treat the two blocks identically.
        CaReNetConfig config = micro_config(channels);
        config.spectral_filters = {2};
        config.spatial_filters = {2};
        DualPathNetwork mirrored = build_carenet(config, TaskSchema::type());
        auto* spec_conv = dynamic_cast<nn::Conv2D*>(&mirrored.spectral_path().layer(0));
        auto* spat_conv = dynamic_cast<nn::Conv2D*>(&mirrored.spatial_path().layer(0));
        REQUIRE(spec_conv != nullptr);
        REQUIRE(spat_conv != nullptr);
        spec_conv->kernel().fill(0.0);
        spat_conv->kernel().fill(0.0);
        for (int f = 0; f < 2; ++f)
            for (int c = 0; c < channels; ++c) {
                const double w = 0.2 + 0.1 * f + 0.05 * c;
                spec_conv->kernel().v[static_cast<std::size_t>(c) * 2 + f] = w;
                spat_conv->kernel().v[((1 * 3 + 1) * channels + static_cast<std::size_t>(c)) * 2 + f] = w;
            }
        auto* fusion = dynamic_cast<nn::Dense*>(&mirrored.fusion().layer(0));
        REQUIRE(fusion != nullptr);
        for (int f = 0; f < 2; ++f)
            for (int j = 0; j < fusion->out_dim(); ++j) {
                const double w = 0.3 + 0.07 * j;
                fusion->weights().v[static_cast<std::size_t>(f) * fusion->out_dim() + j] = w;
                fusion->weights().v[static_cast<std::size_t>(2 + f) * fusion->out_dim() + j] = w;
            }
        Patch p = uniform_patch(8, channels, 0.6);
        const PathContribution pc = path_contribution(mirrored, {p});
        CHECK(pc.spectral_fraction == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(pc.spatial_fraction == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("fractions sum to one and rescale-invariance holds") {
        Rng rng(31);
        std::vector<Patch> patches;
        for (int i = 0; i < 3; ++i) {
            Patch p = uniform_patch(8, channels, 0.0);
            for (auto& v : p.data) v = static_cast<float>(rng.uniform());
            patches.push_back(std::move(p));
        }
        const PathContribution pc = path_contribution(net, patches);
        CHECK(std::abs(pc.spectral_fraction + pc.spatial_fraction - 1.0) <= 1e-12);
        CHECK(pc.spectral_fraction > 0.0);
        CHECK(pc.spatial_fraction > 0.0);

        auto* fusion = dynamic_cast<nn::Dense*>(&net.fusion().layer(0));
        for (auto& w : fusion->weights().v) w *= 3.7;
        const PathContribution scaled = path_contribution(net, patches);
        CHECK(scaled.spectral_fraction == doctest::Approx(pc.spectral_fraction).epsilon(1e-12));
    }
}
