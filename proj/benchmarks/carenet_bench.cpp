#include <benchmark/benchmark.h>

#include <carenet/carenet.hpp>
#include <carenet/preprocess.hpp>
#include <carenet/rng.hpp>
#include <carenet/synth.hpp>

using namespace carenet;

namespace {

Spectrum random_spectrum(int n, std::uint64_t seed) {
    Rng rng(seed);
    Spectrum spec;
    spec.axis = WavenumberAxis(1800.0, 900.0, n);
    spec.values.resize(static_cast<std::size_t>(n));
    for (auto& v : spec.values) v = rng.uniform();
    return spec;
}

const SynthDataset& desk_dataset() {
    static const SynthDataset ds = [] {
        SynthConfig config;
        config.n_samples = 1;
        config.axis_start = 2000.0;
        config.axis_end = 900.0;
        config.axis_points = 78;
        return synth_dataset(config, 31);
    }();
    return ds;
}

}  // namespace

static void BM_SavGol(benchmark::State& state) {
    const Spectrum spec = random_spectrum(static_cast<int>(state.range(0)), 7);
    const SavGolFilter filter(11, 2);
    for (auto _ : state) {
        auto out = filter.apply(spec.values);
        benchmark::DoNotOptimize(out);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SavGol)->Range(64, 2048)->Complexity();

static void BM_EmscCorrect(benchmark::State& state) {
    const auto& ds = desk_dataset();
    const WavenumberAxis axis = truncate_axis(ds.library.axis, 1800.0, 900.0);
    const EMSCModel model = build_emsc_model(ds.library, axis, 4, 0.99);
    const EMSCSolver solver(model);
    Rng rng(9);
    std::vector<double> x = model.reference;
    for (auto& v : x) v = 1.7 * v + 0.05 * rng.normal();
    for (auto _ : state) {
        auto out = solver.correct(x);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_EmscCorrect);

static void BM_KMeansSegment(benchmark::State& state) {
    const auto& ds = desk_dataset();
    PipelineConfig config;
    for (auto _ : state) {
        auto mask = segment_tissue(ds.samples[0].mosaic, config);
        benchmark::DoNotOptimize(mask);
    }
}
BENCHMARK(BM_KMeansSegment);

static void BM_PipelineMosaic(benchmark::State& state) {
    const auto& ds = desk_dataset();
    PipelineConfig config;
    for (auto _ : state) {
        auto out = run_pipeline(ds.samples[0].mosaic, ds.library, config);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_PipelineMosaic);

static void BM_ForwardBackward(benchmark::State& state) {
    const int channels = static_cast<int>(state.range(0));
    CaReNetConfig config;
    config.patch_size = 32;
    config.in_channels = channels;
    config.spectral_filters = {16, 32};
    config.spatial_filters = {16, 32};
    config.fusion_units = 32;
    config.init_seed = 3;
    const TaskSchema schema = TaskSchema::subtype();
    DualPathNetwork net = build_carenet(config, schema);

    Rng rng(5);
    nn::Tensor input({32, 32, channels});
    for (auto& v : input.v) v = rng.uniform();
    const std::vector<double> target = {1.0, 0.0, 0.0, 0.0};

    for (auto _ : state) {
        net.zero_grads();
        nn::Tensor logits = net.forward(input);
        nn::Tensor grad(logits.shape);
        grad.v = nn::loss_grad(schema.kind, logits.v, target, 1.0);
        net.backward(grad);
        benchmark::DoNotOptimize(logits);
    }
    state.SetComplexityN(channels);
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
