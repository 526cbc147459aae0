#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "carenet/spectra.hpp"

namespace carenet {

// ============================================================================
// Fully automated preprocessing: two-stage K-means segmentation, Hotelling
// T2 / Q residual outlier screening, Savitzky-Golay smoothing, EMSC with
// de-waxing and vapor removal, min-max normalization, reconstruction and
// patch extraction.
// ============================================================================

struct PipelineConfig {
    double amide_hi = 1700.0, amide_lo = 1500.0;
    double paraffin_hi = 1480.0, paraffin_lo = 1450.0;
    double biofingerprint_hi = 1800.0, biofingerprint_lo = 900.0;
    int outlier_pcs = 10;
    double outlier_ci = 0.95;
    int savgol_window = 11;
    int savgol_order = 2;
    int emsc_poly_order = 4;
    double emsc_var_threshold = 0.99;
    int patch_size = 32;
    double patch_zero_fraction = 0.5;
    std::uint64_t kmeans_seed = 1;
    int kmeans_max_iter = 100;
    int kmeans_restarts = 5;
    int workers = 1;

    void validate() const;
};

// --------------------------------------------------------------------------
// K-means (farthest-point seeding, Lloyd iterations, best of restarts)
// --------------------------------------------------------------------------

struct KMeansResult {
    std::vector<int> labels;                   // length N, in [0, k)
    std::vector<std::vector<double>> centroids;  // k x D
    double objective = 0.0;                    // sum of squared distances
};

KMeansResult kmeans_cluster(const std::vector<std::vector<double>>& rows, int k,
                            std::uint64_t seed, int max_iter = 100, int restarts = 5);

// Two-stage segmentation: amide-window clustering picks tissue, then the
// paraffin window (tissue zeroed) separates paraffin from slide background;
// final mask = stage-1 tissue minus stage-2 paraffin.
std::vector<std::uint8_t> segment_tissue(const HyperMosaic& mosaic, const PipelineConfig& config);

// --------------------------------------------------------------------------
// PCA + Hotelling T2 / Q residual outlier screen
// --------------------------------------------------------------------------

struct PcaModel {
    std::vector<std::vector<double>> loadings;  // A x C, orthonormal rows
    std::vector<double> eigenvalues;            // score variances, non-increasing
    std::vector<double> mean;                   // length C
    std::vector<double> explained_variance_ratio;
};

struct PcaResult {
    PcaModel model;
    std::vector<std::vector<double>> scores;  // N x A
};

PcaResult pca_decompose(const std::vector<std::vector<double>>& rows, int n_components);

struct OutlierStats {
    std::vector<std::uint8_t> keep;  // length N
    std::vector<double> t2;
    std::vector<double> q;
    double t2_threshold = 0.0;
    double q_threshold = 0.0;
};

// keep[i] is false iff T2 or Q exceeds its empirical ci-quantile strictly.
OutlierStats outlier_mask(const std::vector<std::vector<double>>& rows, int n_pcs = 10,
                          double ci = 0.95);

// --------------------------------------------------------------------------
// Savitzky-Golay smoothing
// --------------------------------------------------------------------------

// Precomputed least-squares smoothing kernels: symmetric interior kernel plus
// per-offset asymmetric edge kernels (polynomial fit over the truncated
// window evaluated at the edge point, so polynomials of degree <= order are
// reproduced exactly over the full support).
class SavGolFilter {
public:
    SavGolFilter(int window, int order);

    std::vector<double> apply(const std::vector<double>& values) const;
    Spectrum apply(const Spectrum& spectrum) const;

    int window() const { return window_; }
    int order() const { return order_; }
    const std::vector<double>& central_kernel() const { return central_; }

private:
    int window_;
    int order_;
    int half_;
    std::vector<double> central_;                 // length window
    std::vector<std::vector<double>> left_edge_;  // [i] covers points 0..i+half
};

Spectrum savgol_smooth(const Spectrum& spectrum, int window = 11, int order = 2);

// --------------------------------------------------------------------------
// EMSC with digital de-waxing and H2O removal
// --------------------------------------------------------------------------

struct EMSCModel {
    WavenumberAxis axis;
    std::vector<double> reference;                    // global mean spectrum
    std::vector<std::vector<double>> poly_basis;      // (order+1) x C, t^j on [-1,1]
    std::vector<std::vector<double>> interferent_basis;  // K x C
    std::vector<std::string> interferent_names;
    int order = 4;

    int design_rows() const {
        return 1 + static_cast<int>(poly_basis.size()) - 1 +
               static_cast<int>(interferent_basis.size()) + 1;
    }
};

struct EMSCCoefficients {
    double a = 0.0;              // constant offset
    double b = 0.0;              // multiplicative reference scale
    std::vector<double> poly;    // d_1..d_order
    std::vector<double> interferents;
    double residual_norm = 0.0;  // of the corrected spectrum vs reference
};

// Interferent basis rows: paraffin mean, paraffin PCs up to the cumulative
// explained-variance threshold, vapor mean, vapor PCs likewise. The full
// design matrix is verified to have full row rank.
EMSCModel build_emsc_model(const ReferenceLibrary& library, const WavenumberAxis& axis,
                           int poly_order = 4, double var_threshold = 0.99);

struct EMSCResult {
    Spectrum corrected;
    EMSCCoefficients coeffs;
};

// Reusable least-squares solver with the design-matrix factorization cached
// (one factorization per model, applied to every pixel spectrum).
class EMSCSolver {
public:
    explicit EMSCSolver(EMSCModel model);
    EMSCResult correct(const std::vector<double>& values) const;
    const EMSCModel& model() const { return model_; }

private:
    EMSCModel model_;
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

EMSCResult emsc_correct(const EMSCModel& model, const Spectrum& spectrum);

// --------------------------------------------------------------------------

// (x - min) / (max - min); constant input is a normalization error.
Spectrum minmax_normalize(const Spectrum& spectrum);
std::vector<double> minmax_normalize(const std::vector<double>& values);

// --------------------------------------------------------------------------
// End-to-end per-mosaic pipeline
// --------------------------------------------------------------------------

struct PreprocessReport {
    std::string sample_id;
    int pixels_total = 0;
    int pixels_segmented = 0;    // stage-1 tissue minus stage-2 paraffin
    int outliers_pass1 = 0;
    int emsc_failures = 0;
    int outliers_pass2 = 0;
    int pixels_live = 0;         // surviving pixels in the output mask
    int patches_kept = 0;        // filled in by extract step when run
    int patches_excluded = 0;

    std::string to_json() const;
};

// segment -> truncate -> outliers -> SavGol -> EMSC -> min-max -> outliers
// -> reconstruct (mask-false pixels all-zero). Deterministic and independent
// of the worker count.
HyperMosaic run_pipeline(const HyperMosaic& mosaic, const ReferenceLibrary& library,
                         const PipelineConfig& config, PreprocessReport* report = nullptr);

// Non-overlapping tiling; a patch is excluded iff its zeroed-pixel count
// reaches size^2 * zero_fraction. Mosaics not divisible by the patch size
// are zero-padded and padded pixels count as zeroed.
std::vector<Patch> extract_patches(const HyperMosaic& mosaic, int size = 32,
                                   double zero_fraction = 0.5,
                                   int* candidates = nullptr, int* excluded = nullptr);

}  // namespace carenet
