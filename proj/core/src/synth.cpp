#include "carenet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "carenet/rng.hpp"

namespace carenet {

namespace {

double gauss(double w, double center, double sigma) {
    const double d = (w - center) / sigma;
    return std::exp(-0.5 * d * d);
}

// CH2 bending region plus a weaker 1378 band; dominates 1480-1450.
double paraffin_shape(double w) {
    return gauss(w, 1465.0, 10.0) + 0.35 * gauss(w, 1378.0, 9.0);
}

// Sharp rotational lines across the amide region.
double vapor_shape(double w) {
    static const double lines[] = {1734.0, 1700.0, 1684.0, 1653.0, 1617.0, 1559.0, 1508.0};
    double s = 0.0;
    for (double line : lines) s += gauss(w, line, 3.0);
    return s;
}

double tissue_shape(const SynthClass& cls, double w) {
    // Crowded tissue-like signature: amide bands, a broad CH pedestal, the
    // carbohydrate/nucleic-acid hump and a low-end pedestal. The phosphate
    // doublet encloses a notch at ~1240 that stays the global minimum, so
    // the class-dependent doublet tails modulate exactly the channels the
    // min-max anchor makes most sensitive.
    return cls.amide1 * gauss(w, 1655.0, 28.0) + cls.amide2 * gauss(w, 1545.0, 25.0) +
           0.33 * gauss(w, 1450.0, 55.0) +
           cls.phosphate * (gauss(w, 1295.0, 16.0) + gauss(w, 1185.0, 16.0)) +
           0.30 * gauss(w, 1060.0, 55.0) + 0.22 * gauss(w, 935.0, 45.0);
}

const char* er_level(int class_index) {
    static const char* levels[] = {"-", "+", "++", "+++"};
    return levels[class_index % 4];
}

}  // namespace

std::vector<SynthClass> default_synth_classes() {
    return {
        {"LA", 1.00, 0.35, 0.15, 5.0},
        {"LB", 0.45, 0.95, 0.30, 15.0},
        {"HER2", 0.65, 0.25, 0.95, 30.0},
    };
}

void SynthConfig::validate() const {
    require(n_samples > 0, ErrorKind::Config, "synth.n_samples must be positive");
    require(height > 0 && width > 0, ErrorKind::Config, "synth mosaic dimensions must be positive");
    require(axis_points >= 2, ErrorKind::Config, "synth.axis_points must be >= 2");
    require(axis_start > axis_end, ErrorKind::Config, "synth axis must run high to low");
    require(tissue_fraction > 0.0 && tissue_fraction < 1.0, ErrorKind::Config,
            "synth.tissue_fraction must be in (0,1)");
    require(n_paraffin >= 2 && n_vapor >= 2, ErrorKind::Config,
            "synth library needs >= 2 rows per interferent");
}

SynthDataset synth_dataset(const SynthConfig& config_in, std::uint64_t seed) {
    SynthConfig config = config_in;
    config.validate();
    if (config.classes.empty()) config.classes = default_synth_classes();
    const int n_classes = static_cast<int>(config.classes.size());

    const WavenumberAxis axis(config.axis_start, config.axis_end, config.axis_points);
    const std::vector<double> w = axis.points();
    const int channels = axis.n_points;

    // Fixed per-channel shapes.
    std::vector<double> paraffin(channels), vapor(channels);
    std::vector<std::vector<double>> class_shape(config.classes.size(),
                                                 std::vector<double>(channels));
    for (int c = 0; c < channels; ++c) {
        paraffin[c] = paraffin_shape(w[c]);
        vapor[c] = vapor_shape(w[c]);
        for (std::size_t k = 0; k < config.classes.size(); ++k)
            class_shape[k][c] = tissue_shape(config.classes[k], w[c]);
    }
    // Secondary vapor variation mode (line-strength tilt across the region).
    std::vector<double> vapor_mode2(channels);
    for (int c = 0; c < channels; ++c)
        vapor_mode2[c] = vapor[c] * (w[c] - 1600.0) / 200.0;

    SynthDataset out;
    out.config = config;

    const double radius =
        std::sqrt(config.tissue_fraction * config.height * config.width / 3.14159265358979323846);
    const double cy = (config.height - 1) / 2.0;
    const double cx = (config.width - 1) / 2.0;

    std::vector<double> mean_accum(channels, 0.0);
    long mean_count = 0;

    for (int s = 0; s < config.n_samples; ++s) {
        Rng rng(Rng::derive_seed(seed, 1000 + static_cast<std::uint64_t>(s)));
        SynthSample sample;
        sample.class_index = s % n_classes;
        const SynthClass& cls = config.classes[static_cast<std::size_t>(sample.class_index)];

        char name[32];
        std::snprintf(name, sizeof(name), "S%03d", s);
        char patient[32];
        std::snprintf(patient, sizeof(patient), "P%03d", s);

        sample.mosaic = HyperMosaic(config.height, config.width, axis);
        sample.mosaic.sample_id = name;
        sample.mosaic.patient_id = patient;
        sample.gt_mask.assign(static_cast<std::size_t>(config.height) * config.width, 0);

        sample.type = sample.class_index == 0 ? "AT" : "CA";
        sample.subtype = cls.name;
        sample.er = er_level(sample.class_index);
        sample.pr = er_level((sample.class_index + 1) % 4);
        sample.her2 = sample.class_index % 2 == 0 ? "0" : "3+";
        sample.ki67_percent = cls.ki67_percent;

        std::vector<double> spec(channels);
        for (int row = 0; row < config.height; ++row) {
            for (int col = 0; col < config.width; ++col) {
                const double dy = row - cy, dx = col - cx;
                const bool tissue = dy * dy + dx * dx <= radius * radius;
                sample.gt_mask[sample.mosaic.pixel_index(row, col)] = tissue ? 1 : 0;

                const double baseline = 0.05 + 0.02 * rng.uniform();
                const double tilt = 0.01 * rng.uniform(-1.0, 1.0);
                const double vapor_a = config.vapor_amp * rng.normal();
                const double vapor_b = config.vapor_amp * 0.5 * rng.normal();
                if (tissue) {
                    const double scale = rng.uniform(0.85, 1.15);  // multiplicative scatter
                    const double leak = config.tissue_paraffin_leak * rng.uniform(0.5, 1.5);
                    for (int c = 0; c < channels; ++c) {
                        spec[c] = scale * class_shape[sample.class_index][c] + leak * paraffin[c] +
                                  baseline + tilt * (w[c] - 1350.0) / 450.0 +
                                  vapor_a * vapor[c] + vapor_b * vapor_mode2[c] +
                                  config.noise_sigma * rng.normal();
                    }
                } else {
                    const double amp = config.paraffin_amp * rng.uniform(0.85, 1.15);
                    const double thickness = rng.uniform(0.9, 1.1);
                    for (int c = 0; c < channels; ++c) {
                        spec[c] = amp * thickness * paraffin[c] + baseline +
                                  tilt * (w[c] - 1350.0) / 450.0 + vapor_a * vapor[c] +
                                  vapor_b * vapor_mode2[c] + config.noise_sigma * rng.normal();
                    }
                }
                sample.mosaic.set_spectrum(row, col, spec);

                if (tissue) {
                    for (int c = 0; c < channels; ++c) mean_accum[c] += spec[c];
                    ++mean_count;
                }
            }
        }
        out.samples.push_back(std::move(sample));
    }

    // Reference library on the raw axis. Exemplar rows carry measurement
    // noise like real acquisitions; without it the paraffin family is
    // exactly low-rank and [mean; PCs] would be linearly dependent in the
    // EMSC design matrix.
    out.library.axis = axis;
    Rng lib_rng(Rng::derive_seed(seed, 2));
    const double lib_noise = std::max(config.noise_sigma * 0.5, 1e-4);
    for (int i = 0; i < config.n_paraffin; ++i) {
        const double amp = config.paraffin_amp * lib_rng.uniform(0.85, 1.15);
        const double shift = lib_rng.uniform(-0.05, 0.05);
        std::vector<double> row(channels);
        for (int c = 0; c < channels; ++c)
            row[c] = amp * paraffin[c] + shift * paraffin[c] * (w[c] - 1460.0) / 100.0 +
                     lib_noise * lib_rng.normal();
        out.library.paraffin_spectra.push_back(std::move(row));
    }
    for (int i = 0; i < config.n_vapor; ++i) {
        const double a = config.vapor_amp * 20.0 * lib_rng.normal();
        const double b = config.vapor_amp * 10.0 * lib_rng.normal();
        std::vector<double> row(channels);
        for (int c = 0; c < channels; ++c)
            row[c] = a * vapor[c] + b * vapor_mode2[c] + lib_noise * lib_rng.normal();
        out.library.vapor_spectra.push_back(std::move(row));
    }
    out.library.global_mean.axis = axis;
    out.library.global_mean.values.resize(channels);
    for (int c = 0; c < channels; ++c)
        out.library.global_mean.values[static_cast<std::size_t>(c)] =
            mean_count > 0 ? mean_accum[static_cast<std::size_t>(c)] / static_cast<double>(mean_count) : 0.0;

    return out;
}

}  // namespace carenet
