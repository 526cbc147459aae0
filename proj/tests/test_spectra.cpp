#include <doctest.h>

#include <carenet/rng.hpp>
#include <carenet/spectra.hpp>
#include <carenet/synth.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace carenet;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "carenet_test_spectra";
    fs::create_directories(dir);
    return dir / name;
}

HyperMosaic small_mosaic() {
    HyperMosaic m(2, 2, WavenumberAxis(1700.0, 1500.0, 3));
    m.sample_id = "S1";
    m.patient_id = "P1";
    float v = 0.5f;
    for (auto& x : m.cube) x = v += 0.25f;
    m.mask = {1, 1, 0, 1};
    for (int c = 0; c < 3; ++c) m.pixel(1, 0)[c] = 0.0f;  // masked-false pixel zeroed
    return m;
}

std::string file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("axis invariants and points") {
    WavenumberAxis axis(1800.0, 900.0, 467);
    CHECK(axis.spacing() == doctest::Approx(900.0 / 466.0).epsilon(1e-12));
    CHECK(axis.at(0) == 1800.0);
    CHECK(axis.at(466) == doctest::Approx(900.0).epsilon(1e-12));
    CHECK_THROWS_AS(WavenumberAxis(900.0, 1800.0, 10), Error);
    CHECK_THROWS_AS(WavenumberAxis(1800.0, 900.0, 1), Error);
}

TEST_CASE("cube round trip is bitwise identity") {
    const HyperMosaic m = small_mosaic();
    const fs::path path = temp_file("roundtrip.hsc");
    write_cube(m, path);
    const HyperMosaic back = read_cube(path);
    CHECK(back.height == m.height);
    CHECK(back.width == m.width);
    CHECK(back.axis.start == m.axis.start);
    CHECK(back.axis.end == m.axis.end);
    CHECK(back.cube == m.cube);
    CHECK(back.mask == m.mask);
    CHECK(back.sample_id == m.sample_id);
    CHECK(back.patient_id == m.patient_id);

    // Writing again produces identical bytes.
    const fs::path path2 = temp_file("roundtrip2.hsc");
    write_cube(back, path2);
    CHECK(file_bytes(path) == file_bytes(path2));
}

TEST_CASE("bad magic is a format error, truncation an io error") {
    const fs::path path = temp_file("bad.hsc");
    {
        std::ofstream out(path, std::ios::binary);
        out << "XXXXjunkjunkjunk";
    }
    CHECK_THROWS_WITH_AS(read_cube(path), doctest::Contains("format error"), Error);

    const fs::path trunc = temp_file("trunc.hsc");
    write_cube(small_mosaic(), trunc);
    fs::resize_file(trunc, fs::file_size(trunc) - 9);
    CHECK_THROWS_WITH_AS(read_cube(trunc), doctest::Contains("io error"), Error);
}

TEST_CASE("2x2x3 cube of ones sums to 12 through io") {
    HyperMosaic m(2, 2, WavenumberAxis(1700.0, 1500.0, 3));
    for (auto& x : m.cube) x = 1.0f;
    const fs::path path = temp_file("ones.hsc");
    write_cube(m, path);
    const HyperMosaic back = read_cube(path);
    double sum = 0.0;
    for (float x : back.cube) sum += x;
    CHECK(sum == 12.0);
}

TEST_CASE("payload size matches the format arithmetic") {
    HyperMosaic m(4, 5, WavenumberAxis(1800.0, 900.0, 7));
    m.sample_id = "ab";
    m.patient_id = "c";
    const fs::path path = temp_file("size.hsc");
    write_cube(m, path);
    // magic + 3*u32 + 2*f64 + H*W*C*f32 + H*W mask + 2 length-prefixed ids
    const std::size_t expected = 4 + 12 + 16 + 4ull * 5 * 7 * 4 + 4 * 5 + (2 + 2) + (2 + 1);
    CHECK(fs::file_size(path) == expected);
}

TEST_CASE("1x1 header fields read back") {
    HyperMosaic m(1, 1, WavenumberAxis(1700.0, 1500.0, 2));
    const fs::path path = temp_file("tiny.hsc");
    write_cube(m, path);
    const HyperMosaic back = read_cube(path);
    CHECK(back.height == 1);
    CHECK(back.width == 1);
    CHECK(back.channels() == 2);
}

TEST_CASE("truncate_axis keeps exactly the points inside the window") {
    SUBCASE("full-range grid retains 467 biofingerprint points") {
        // Grid with spacing 900/466 that reaches 900 exactly, extended to
        // the acquisition start near 3950.
        const double spacing = 900.0 / 466.0;
        const int n = 1580;
        const WavenumberAxis full(900.0 + spacing * (n - 1), 900.0, n);
        // Enumeration oracle over the same grid.
        int expected = 0;
        for (int i = 0; i < n; ++i) {
            const double p = full.at(i);
            if (p <= 1800.0 + 1e-9 && p >= 900.0 - 1e-9) ++expected;
        }
        CHECK(expected == 467);
        const WavenumberAxis cut = truncate_axis(full, 1800.0, 900.0);
        CHECK(cut.n_points == 467);
        CHECK(cut.start == doctest::Approx(1800.0).epsilon(1e-12));
        CHECK(cut.end == doctest::Approx(900.0).epsilon(1e-12));
    }
    SUBCASE("identity on the full existing range") {
        const WavenumberAxis axis(1800.0, 900.0, 467);
        const WavenumberAxis cut = truncate_axis(axis, 1800.0, 900.0);
        CHECK(cut.n_points == axis.n_points);
        CHECK(cut.start == axis.start);
        CHECK(cut.end == axis.end);
    }
    SUBCASE("three-point axis") {
        const WavenumberAxis axis(1700.0, 1500.0, 3);  // {1700, 1600, 1500}
        const WavenumberAxis cut = truncate_axis(axis, 1650.0, 1450.0);
        CHECK(cut.n_points == 2);
        CHECK(cut.start == doctest::Approx(1600.0));
        CHECK(cut.end == doctest::Approx(1500.0));
    }
    SUBCASE("empty intersection is a range error") {
        const WavenumberAxis axis(1700.0, 1500.0, 3);
        CHECK_THROWS_AS(truncate_axis(axis, 800.0, 700.0), Error);
    }
    SUBCASE("idempotent for the same bounds") {
        const WavenumberAxis axis(1950.0, 850.0, 111);
        const WavenumberAxis once = truncate_axis(axis, 1800.0, 900.0);
        const WavenumberAxis twice = truncate_axis(once, 1800.0, 900.0);
        CHECK(once.n_points == twice.n_points);
        CHECK(once.start == twice.start);
        CHECK(once.end == twice.end);
    }
}

TEST_CASE("mosaic truncation slices every pixel") {
    HyperMosaic m(1, 2, WavenumberAxis(1700.0, 1500.0, 3));
    m.set_spectrum(0, 0, {1.0, 2.0, 3.0});
    m.set_spectrum(0, 1, {4.0, 5.0, 6.0});
    const HyperMosaic cut = truncate_axis(m, 1650.0, 1450.0);
    CHECK(cut.channels() == 2);
    CHECK(cut.spectrum_at(0, 0) == std::vector<double>{2.0, 3.0});
    CHECK(cut.spectrum_at(0, 1) == std::vector<double>{5.0, 6.0});
}

TEST_CASE("synth dataset is seed-deterministic and seeds differ") {
    SynthConfig config;
    config.n_samples = 2;
    config.height = 24;
    config.width = 24;
    config.axis_points = 40;
    config.axis_start = 1800.0;
    config.axis_end = 900.0;

    const SynthDataset a = synth_dataset(config, 5);
    const SynthDataset b = synth_dataset(config, 5);
    const SynthDataset c = synth_dataset(config, 6);
    REQUIRE(a.samples.size() == 2);
    CHECK(a.samples[0].mosaic.cube == b.samples[0].mosaic.cube);
    CHECK(a.samples[1].gt_mask == b.samples[1].gt_mask);
    CHECK(a.library.global_mean.values == b.library.global_mean.values);
    CHECK(a.samples[0].mosaic.cube != c.samples[0].mosaic.cube);

    for (const auto& sample : a.samples) sample.mosaic.validate();
    a.library.validate();
}

TEST_CASE("synth disc area tracks the requested fraction") {
    SynthConfig config;
    config.n_samples = 1;
    config.height = 64;
    config.width = 64;
    config.axis_points = 32;
    config.axis_start = 1800.0;
    config.axis_end = 900.0;
    config.tissue_fraction = 0.5;
    const SynthDataset ds = synth_dataset(config, 3);
    long count = 0;
    for (auto v : ds.samples[0].gt_mask) count += v;
    CHECK(std::abs(static_cast<double>(count) - 2048.0) / 4096.0 <= 0.05);
}

TEST_CASE("paraffin band dominates paraffin pixels") {
    SynthConfig config;
    config.n_samples = 1;
    config.height = 32;
    config.width = 32;
    config.axis_points = 64;
    config.axis_start = 1800.0;
    config.axis_end = 900.0;
    const SynthDataset ds = synth_dataset(config, 12);
    const auto& sample = ds.samples[0];
    const auto& axis = sample.mosaic.axis;

    double paraffin_mean = 0.0, tissue_mean = 0.0;
    long n_par = 0, n_tis = 0;
    for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 32; ++c) {
            const auto spec = sample.mosaic.spectrum_at(r, c);
            double window = 0.0;
            int window_n = 0;
            for (int i = 0; i < axis.n_points; ++i) {
                if (axis.at(i) <= 1480.0 && axis.at(i) >= 1450.0) {
                    window += spec[static_cast<std::size_t>(i)];
                    ++window_n;
                }
            }
            window /= window_n;
            if (sample.gt_mask[sample.mosaic.pixel_index(r, c)]) {
                tissue_mean += window;
                ++n_tis;
            } else {
                paraffin_mean += window;
                ++n_par;
            }
        }
    }
    paraffin_mean /= static_cast<double>(n_par);
    tissue_mean /= static_cast<double>(n_tis);
    CHECK(paraffin_mean > tissue_mean);
}

TEST_CASE("library round trip through hsl file") {
    SynthConfig config;
    config.n_samples = 1;
    config.height = 16;
    config.width = 16;
    config.axis_points = 24;
    config.axis_start = 1800.0;
    config.axis_end = 900.0;
    const SynthDataset ds = synth_dataset(config, 4);
    const fs::path path = temp_file("library.hsl");
    write_library(ds.library, path);
    const ReferenceLibrary back = read_library(path);
    CHECK(back.paraffin_spectra == ds.library.paraffin_spectra);
    CHECK(back.vapor_spectra == ds.library.vapor_spectra);
    CHECK(back.global_mean.values == ds.library.global_mean.values);
}
