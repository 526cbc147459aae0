#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "carenet/error.hpp"

namespace carenet {

// ============================================================================
// Core spectral data model: evenly spaced descending wavenumber axis,
// per-pixel spectra, mosaics (H x W x C cubes with a live-pixel mask) and
// 32x32 sub-blocks cut out of them.
// ============================================================================

// Evenly spaced wavenumber grid, stored high-to-low (FTIR convention).
struct WavenumberAxis {
    double start = 0.0;  // cm^-1, high end
    double end = 0.0;    // cm^-1, low end
    int n_points = 0;

    WavenumberAxis() = default;
    WavenumberAxis(double start_, double end_, int n_points_);

    double spacing() const { return (start - end) / static_cast<double>(n_points - 1); }
    double at(int i) const { return start - spacing() * static_cast<double>(i); }
    std::vector<double> points() const;

    // Index of the grid point closest to the given wavenumber.
    int nearest_index(double wavenumber) const;

    bool almost_equal(const WavenumberAxis& other, double tol = 1e-9) const;
};

struct Spectrum {
    WavenumberAxis axis;
    std::vector<double> values;  // absorbance, length axis.n_points

    void validate() const;
};

// H x W x C cube, channel-last row-major. Mask entries are 1 for live tissue
// pixels; all-zero spectra carry mask 0 after preprocessing.
struct HyperMosaic {
    int height = 0;
    int width = 0;
    WavenumberAxis axis;
    std::vector<float> cube;       // height * width * n_points
    std::vector<std::uint8_t> mask;  // height * width, 0/1
    std::string sample_id;
    std::string patient_id;

    HyperMosaic() = default;
    HyperMosaic(int height_, int width_, WavenumberAxis axis_);

    int channels() const { return axis.n_points; }
    std::size_t pixel_index(int row, int col) const {
        return static_cast<std::size_t>(row) * width + col;
    }
    float* pixel(int row, int col) {
        return cube.data() + pixel_index(row, col) * static_cast<std::size_t>(channels());
    }
    const float* pixel(int row, int col) const {
        return cube.data() + pixel_index(row, col) * static_cast<std::size_t>(channels());
    }
    std::vector<double> spectrum_at(int row, int col) const;
    void set_spectrum(int row, int col, const std::vector<double>& values);
    bool live(int row, int col) const { return mask[pixel_index(row, col)] != 0; }

    void validate() const;
};

// 32x32xC labeled sub-block with provenance back to its parent mosaic.
struct Patch {
    int size = 0;
    int channels = 0;
    std::vector<float> data;  // size * size * channels, channel-last
    int origin_row = 0;
    int origin_col = 0;
    int zero_count = 0;  // mask-false pixels inside the block
    std::string sample_id;
    std::string patient_id;
    std::string label;  // task ground truth, assigned at dataset assembly
    double percent = 0.0;  // regression ground truth where applicable

    const float* pixel(int row, int col) const {
        return data.data() +
               (static_cast<std::size_t>(row) * size + col) * static_cast<std::size_t>(channels);
    }
    float* pixel(int row, int col) {
        return data.data() +
               (static_cast<std::size_t>(row) * size + col) * static_cast<std::size_t>(channels);
    }
};

// Interferent exemplars plus the global mean reference used by EMSC.
struct ReferenceLibrary {
    WavenumberAxis axis;
    std::vector<std::vector<double>> paraffin_spectra;  // n_paraffin x C
    std::vector<std::vector<double>> vapor_spectra;     // n_vapor x C
    Spectrum global_mean;

    void validate() const;
};

// ============================================================================
// HSC1 cube file format (bit-exact round trip)
//   magic "HSC1"
//   u32 LE height, width, channels
//   f64 LE axis start, axis end
//   H*W*C f32 LE values, row-major channel-last
//   H*W mask bytes (0/1)
//   u16 LE length-prefixed UTF-8 sample_id, patient_id
// ============================================================================

HyperMosaic read_cube(const std::filesystem::path& path);
void write_cube(const HyperMosaic& mosaic, const std::filesystem::path& path);

// Reference-library container (axis + f64 matrices), same endianness rules.
ReferenceLibrary read_library(const std::filesystem::path& path);
void write_library(const ReferenceLibrary& library, const std::filesystem::path& path);

// Keeps exactly the axis points p with lo <= p <= hi (descending order
// preserved). Comparison uses a spacing-relative epsilon so grid points that
// land on a bound stay included.
WavenumberAxis truncate_axis(const WavenumberAxis& axis, double hi, double lo,
                             int* first_index = nullptr);
HyperMosaic truncate_axis(const HyperMosaic& mosaic, double hi, double lo);
Spectrum truncate_axis(const Spectrum& spectrum, double hi, double lo);
std::vector<double> truncate_values(const WavenumberAxis& axis, const std::vector<double>& values,
                                    double hi, double lo);

}  // namespace carenet
