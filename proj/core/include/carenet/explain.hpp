#pragma once

#include <string>
#include <vector>

#include "carenet/carenet.hpp"

namespace carenet {

// Explainability: Grad-CAM on the spatial path, per-wavenumber channel
// importance from the first spectral conv, and the spectral-vs-spatial
// contribution split at the fusion dense layer.

struct Heatmap {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // [0,1], max = 1 unless all-zero
    std::string source_layer;
    int class_index = 0;

    double at(int row, int col) const {
        return values[static_cast<std::size_t>(row) * width + col];
    }
};

// alpha_k = spatial mean of d(logit_class)/d(map k) at the ReLU output of the
// last spatial conv; heatmap = ReLU(sum_k alpha_k A_k), bilinearly upsampled
// to the patch size and max-normalized.
Heatmap grad_cam(DualPathNetwork& net, const Patch& patch, int class_index);

struct ImportanceBand {
    double wavenumber_hi = 0.0;
    double wavenumber_lo = 0.0;
    int channel_first = 0;  // inclusive channel index run
    int channel_last = 0;
    double score = 0.0;
};

struct ChannelImportance {
    std::vector<double> scores;  // length C, sum_f |K[c,f]| over the first spectral conv
    std::vector<ImportanceBand> top_bands;  // contiguous runs of top-N channels, score-sorted
};

// signed=false takes |kernel| (default; signed sums cancel), top_n picks how
// many channels form the bands.
ChannelImportance channel_importance(DualPathNetwork& net, const WavenumberAxis& axis,
                                     int top_n = 30, bool signed_sum = false);

struct PathContribution {
    double spectral_fraction = 0.0;
    double spatial_fraction = 0.0;
};

// Per patch: contribution of a path = sum over its GAP features i of
// sum_j |g_i * W_ij| over the first fusion dense weights; fractions averaged
// over patches, summing to 1.
PathContribution path_contribution(DualPathNetwork& net, const std::vector<Patch>& patches);

}  // namespace carenet
