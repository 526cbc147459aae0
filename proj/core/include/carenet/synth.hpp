#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "carenet/spectra.hpp"

namespace carenet {

// Seeded synthetic stand-in for the proprietary microarray: a disc of tissue
// pixels inside a paraffin border, class-dependent Gaussian band mixtures,
// a paraffin band in the 1480-1450 window and water-vapor ripple.

struct SynthClass {
    std::string name;       // class label, also drives the derived IHC columns
    double amide1 = 1.0;    // ~1655 cm^-1 amplitude
    double amide2 = 0.4;    // ~1545 cm^-1 amplitude
    double phosphate = 0.2; // ~1240 cm^-1 amplitude
    double ki67_percent = 5.0;
};

struct SynthConfig {
    int n_samples = 12;
    int height = 64;
    int width = 64;
    // Raw acquisition axis; the preprocessing pipeline truncates it to the
    // biofingerprint window. The default truncates 2000->900 to exactly
    // 64 channels over 1800-900.
    double axis_start = 2000.0;
    double axis_end = 900.0;
    int axis_points = 78;
    // Disc area / mosaic area. Large enough that every 32x32 quadrant of the
    // default 64x64 mosaic keeps a live-pixel majority through the outlier
    // passes, so its patches survive the zero-fraction filter.
    double tissue_fraction = 0.75;
    double paraffin_amp = 1.2;
    double vapor_amp = 0.015;
    double noise_sigma = 0.01;
    double tissue_paraffin_leak = 0.08;
    int n_paraffin = 8;  // library exemplar rows
    int n_vapor = 6;
    std::vector<SynthClass> classes;  // defaults to three separable classes

    void validate() const;
};

// Default three-class configuration used by the desk-scale studies.
std::vector<SynthClass> default_synth_classes();

struct SynthSample {
    HyperMosaic mosaic;                 // raw (mask all-live)
    std::vector<std::uint8_t> gt_mask;  // planted tissue disc, height*width
    int class_index = 0;
    // Derived label columns for the manifest.
    std::string type;     // AT / CA
    std::string subtype;  // class name
    std::string er;
    std::string pr;
    std::string her2;
    double ki67_percent = 0.0;
};

struct SynthDataset {
    std::vector<SynthSample> samples;
    ReferenceLibrary library;  // on the raw axis
    SynthConfig config;
};

// Deterministic for a given (config, seed); distinct seeds differ.
SynthDataset synth_dataset(const SynthConfig& config, std::uint64_t seed);

}  // namespace carenet
