#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <sstream>
#include <thread>

#include "carenet/preprocess.hpp"
#include "carenet/rng.hpp"

namespace carenet {

namespace {

// Deterministic parallel map: each index writes only its own slots, so the
// result is independent of the worker count.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    const int count = std::min<int>(workers, static_cast<int>(n));
    pool.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

std::vector<std::vector<double>> window_rows(const HyperMosaic& mosaic, double hi, double lo,
                                             const std::vector<std::uint8_t>* zero_where) {
    int first = 0;
    const WavenumberAxis cut = truncate_axis(mosaic.axis, hi, lo, &first);
    const std::size_t pixels = static_cast<std::size_t>(mosaic.height) * mosaic.width;
    std::vector<std::vector<double>> rows(pixels, std::vector<double>(static_cast<std::size_t>(cut.n_points), 0.0));
    for (std::size_t p = 0; p < pixels; ++p) {
        if (zero_where && (*zero_where)[p]) continue;  // zeroed rows stay all-zero
        const float* src = mosaic.cube.data() + p * static_cast<std::size_t>(mosaic.channels()) + first;
        for (int c = 0; c < cut.n_points; ++c) rows[p][static_cast<std::size_t>(c)] = src[c];
    }
    return rows;
}

double row_mean(const std::vector<double>& row) {
    double s = 0.0;
    for (double v : row) s += v;
    return row.empty() ? 0.0 : s / static_cast<double>(row.size());
}

}  // namespace

void PipelineConfig::validate() const {
    require(savgol_window % 2 == 1 && savgol_window > savgol_order, ErrorKind::Config,
            "savgol_window must be odd and greater than savgol_order");
    require(patch_zero_fraction > 0.0 && patch_zero_fraction <= 1.0, ErrorKind::Config,
            "patch_zero_fraction must be in (0,1]");
    require(outlier_ci > 0.0 && outlier_ci < 1.0, ErrorKind::Config,
            "outlier_ci must be in (0,1)");
    require(outlier_pcs >= 1, ErrorKind::Config, "outlier_pcs must be >= 1");
    require(patch_size >= 1, ErrorKind::Config, "patch_size must be >= 1");
    require(emsc_poly_order >= 0, ErrorKind::Config, "emsc_poly_order must be >= 0");
    require(kmeans_restarts >= 1 && kmeans_max_iter >= 1, ErrorKind::Config,
            "kmeans settings must be >= 1");
}

std::vector<std::uint8_t> segment_tissue(const HyperMosaic& mosaic, const PipelineConfig& config) {
    const std::size_t pixels = static_cast<std::size_t>(mosaic.height) * mosaic.width;

    // Stage 1: amide-window clustering; the cluster with the higher mean
    // integrated absorbance is tissue.
    const auto amide = window_rows(mosaic, config.amide_hi, config.amide_lo, nullptr);
    KMeansResult stage1;
    try {
        stage1 = kmeans_cluster(amide, 2, config.kmeans_seed, config.kmeans_max_iter,
                                config.kmeans_restarts);
    } catch (const Error& e) {
        raise(ErrorKind::Segmentation, std::string("stage-1 clustering failed: ") + e.what());
    }
    const double mean0 = row_mean(stage1.centroids[0]);
    const double mean1 = row_mean(stage1.centroids[1]);
    if (mean0 == mean1)
        raise(ErrorKind::Segmentation, "degenerate mosaic: amide clusters are identical");
    const int tissue_cluster = mean1 > mean0 ? 1 : 0;

    std::vector<std::uint8_t> tissue(pixels, 0);
    for (std::size_t p = 0; p < pixels; ++p)
        tissue[p] = stage1.labels[p] == tissue_cluster ? 1 : 0;

    // Stage 2: paraffin window with tissue zeroed; the high-intensity cluster
    // is paraffin, grouped against zeroed tissue + pure slide.
    const auto paraffin = window_rows(mosaic, config.paraffin_hi, config.paraffin_lo, &tissue);
    KMeansResult stage2;
    try {
        stage2 = kmeans_cluster(paraffin, 2, Rng::derive_seed(config.kmeans_seed, 0x5eed),
                                config.kmeans_max_iter, config.kmeans_restarts);
    } catch (const Error& e) {
        raise(ErrorKind::Segmentation, std::string("stage-2 clustering failed: ") + e.what());
    }
    const int paraffin_cluster =
        row_mean(stage2.centroids[1]) > row_mean(stage2.centroids[0]) ? 1 : 0;

    // Final mask: stage-1 tissue minus stage-2 paraffin (never re-admits).
    std::vector<std::uint8_t> mask(pixels, 0);
    for (std::size_t p = 0; p < pixels; ++p)
        mask[p] = (tissue[p] && stage2.labels[p] != paraffin_cluster) ? 1 : 0;
    return mask;
}

std::string PreprocessReport::to_json() const {
    std::ostringstream out;
    out << "{\n"
        << "  \"sample_id\": \"" << sample_id << "\",\n"
        << "  \"pixels_total\": " << pixels_total << ",\n"
        << "  \"pixels_segmented\": " << pixels_segmented << ",\n"
        << "  \"outliers_pass1\": " << outliers_pass1 << ",\n"
        << "  \"emsc_failures\": " << emsc_failures << ",\n"
        << "  \"outliers_pass2\": " << outliers_pass2 << ",\n"
        << "  \"pixels_live\": " << pixels_live << ",\n"
        << "  \"patches_kept\": " << patches_kept << ",\n"
        << "  \"patches_excluded\": " << patches_excluded << "\n"
        << "}\n";
    return out.str();
}

HyperMosaic run_pipeline(const HyperMosaic& mosaic, const ReferenceLibrary& library,
                         const PipelineConfig& config, PreprocessReport* report) {
    config.validate();
    mosaic.validate();

    PreprocessReport local;
    PreprocessReport& rep = report ? *report : local;
    rep.sample_id = mosaic.sample_id;
    rep.pixels_total = mosaic.height * mosaic.width;

    // Segmentation runs on the raw full-range mosaic.
    std::vector<std::uint8_t> mask = segment_tissue(mosaic, config);
    rep.pixels_segmented = static_cast<int>(std::count(mask.begin(), mask.end(), 1));

    // Truncate to the biofingerprint region.
    HyperMosaic cut = truncate_axis(mosaic, config.biofingerprint_hi, config.biofingerprint_lo);
    const int channels = cut.channels();
    const std::size_t pixels = static_cast<std::size_t>(cut.height) * cut.width;

    const auto live_indices = [&] {
        std::vector<std::size_t> idx;
        for (std::size_t p = 0; p < pixels; ++p)
            if (mask[p]) idx.push_back(p);
        return idx;
    };

    const auto gather = [&](const std::vector<std::size_t>& idx,
                            const std::vector<std::vector<double>>& store) {
        std::vector<std::vector<double>> rows;
        rows.reserve(idx.size());
        for (std::size_t p : idx) rows.push_back(store[p]);
        return rows;
    };

    // Working copy of every pixel spectrum (double precision).
    std::vector<std::vector<double>> work(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
        const float* src = cut.cube.data() + p * static_cast<std::size_t>(channels);
        work[p].assign(src, src + channels);
    }

    // First outlier pass over tissue spectra. The component count is capped
    // by the available rows so small mosaics stay processable.
    {
        const auto idx = live_indices();
        const int n_pcs = std::min<int>(config.outlier_pcs, static_cast<int>(idx.size()) - 1);
        if (n_pcs >= 1 && static_cast<int>(idx.size()) > n_pcs) {
            const OutlierStats stats = outlier_mask(gather(idx, work), n_pcs, config.outlier_ci);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                if (!stats.keep[i]) {
                    mask[idx[i]] = 0;
                    ++rep.outliers_pass1;
                }
            }
        }
    }

    // SavGol -> EMSC -> min-max per live spectrum; pure per-pixel stages run
    // on the worker pool.
    const SavGolFilter savgol(config.savgol_window, config.savgol_order);
    const EMSCModel model =
        build_emsc_model(library, cut.axis, config.emsc_poly_order, config.emsc_var_threshold);
    const EMSCSolver solver(model);

    {
        const auto idx = live_indices();
        std::vector<std::uint8_t> failed(idx.size(), 0);
        parallel_for(idx.size(), config.workers, [&](std::size_t i) {
            auto& spec = work[idx[i]];
            spec = savgol.apply(spec);
            try {
                spec = solver.correct(spec).corrected.values;
                spec = minmax_normalize(spec);
            } catch (const Error&) {
                failed[i] = 1;  // b-floor or constant spectrum: zero it upstream
            }
        });
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (failed[i]) {
                mask[idx[i]] = 0;
                ++rep.emsc_failures;
            }
        }
    }

    // Second outlier pass on the corrected spectra.
    {
        const auto idx = live_indices();
        const int n_pcs = std::min<int>(config.outlier_pcs, static_cast<int>(idx.size()) - 1);
        if (n_pcs >= 1 && static_cast<int>(idx.size()) > n_pcs) {
            const OutlierStats stats = outlier_mask(gather(idx, work), n_pcs, config.outlier_ci);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                if (!stats.keep[i]) {
                    mask[idx[i]] = 0;
                    ++rep.outliers_pass2;
                }
            }
        }
    }

    // Reconstruct: surviving spectra written back, everything else zeroed.
    HyperMosaic out(cut.height, cut.width, cut.axis);
    out.sample_id = cut.sample_id;
    out.patient_id = cut.patient_id;
    out.mask = mask;
    for (std::size_t p = 0; p < pixels; ++p) {
        if (!mask[p]) continue;
        float* dst = out.cube.data() + p * static_cast<std::size_t>(channels);
        for (int c = 0; c < channels; ++c)
            dst[c] = static_cast<float>(work[p][static_cast<std::size_t>(c)]);
    }
    rep.pixels_live = static_cast<int>(std::count(mask.begin(), mask.end(), 1));
    return out;
}

std::vector<Patch> extract_patches(const HyperMosaic& mosaic, int size, double zero_fraction,
                                   int* candidates, int* excluded) {
    require(size >= 1, ErrorKind::Input, "patch size must be >= 1");
    require(zero_fraction > 0.0 && zero_fraction <= 1.0, ErrorKind::Input,
            "zero_fraction must be in (0,1]");

    const int rows = (mosaic.height + size - 1) / size;
    const int cols = (mosaic.width + size - 1) / size;
    const int channels = mosaic.channels();
    const int threshold = static_cast<int>(std::ceil(static_cast<double>(size) * size * zero_fraction));

    std::vector<Patch> kept;
    int n_candidates = 0, n_excluded = 0;
    for (int pr = 0; pr < rows; ++pr) {
        for (int pc = 0; pc < cols; ++pc) {
            ++n_candidates;
            Patch patch;
            patch.size = size;
            patch.channels = channels;
            patch.origin_row = pr * size;
            patch.origin_col = pc * size;
            patch.sample_id = mosaic.sample_id;
            patch.patient_id = mosaic.patient_id;
            patch.data.assign(static_cast<std::size_t>(size) * size * channels, 0.0f);
            int zeros = 0;
            for (int r = 0; r < size; ++r) {
                for (int c = 0; c < size; ++c) {
                    const int mr = patch.origin_row + r;
                    const int mc = patch.origin_col + c;
                    if (mr >= mosaic.height || mc >= mosaic.width || !mosaic.live(mr, mc)) {
                        ++zeros;  // padded pixels count as zeroed
                        continue;
                    }
                    const float* src = mosaic.pixel(mr, mc);
                    std::copy(src, src + channels, patch.pixel(r, c));
                }
            }
            patch.zero_count = zeros;
            if (zeros >= threshold) {
                ++n_excluded;
                continue;
            }
            kept.push_back(std::move(patch));
        }
    }
    if (candidates) *candidates = n_candidates;
    if (excluded) *excluded = n_excluded;
    return kept;
}

}  // namespace carenet
