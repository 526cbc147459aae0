#include <Eigen/Dense>
#include <cmath>

#include "carenet/preprocess.hpp"

namespace carenet {

namespace {

// Weights of the least-squares polynomial fit over window positions
// `offsets`, evaluated at `eval_at`: smoothed = w . y with
// w = row of A (A^T A)^-1 A^T selecting the fitted value at eval_at.
std::vector<double> fit_weights(const std::vector<int>& offsets, int order, int eval_at) {
    const int rows = static_cast<int>(offsets.size());
    Eigen::MatrixXd a(rows, order + 1);
    for (int r = 0; r < rows; ++r) {
        double p = 1.0;
        for (int j = 0; j <= order; ++j) {
            a(r, j) = p;
            p *= static_cast<double>(offsets[static_cast<std::size_t>(r)]);
        }
    }
    Eigen::VectorXd eval_pows(order + 1);
    double p = 1.0;
    for (int j = 0; j <= order; ++j) {
        eval_pows(j) = p;
        p *= static_cast<double>(eval_at);
    }
    // w^T = e^T (A^T A)^-1 A^T
    const Eigen::MatrixXd ata = a.transpose() * a;
    const Eigen::VectorXd solve = ata.ldlt().solve(eval_pows);
    const Eigen::VectorXd w = a * solve;
    return std::vector<double>(w.data(), w.data() + rows);
}

}  // namespace

SavGolFilter::SavGolFilter(int window, int order) : window_(window), order_(order) {
    require(window >= 3 && window % 2 == 1, ErrorKind::Input, "savgol window must be odd and >= 3");
    require(order >= 0 && order < window, ErrorKind::Input, "savgol order must be < window");
    half_ = window / 2;

    std::vector<int> offsets(static_cast<std::size_t>(window));
    for (int i = 0; i < window; ++i) offsets[static_cast<std::size_t>(i)] = i - half_;
    central_ = fit_weights(offsets, order, 0);

    // Left-edge kernels: point i < half uses the truncated window 0..i+half,
    // fitted and evaluated at i. Right edges mirror these.
    left_edge_.resize(static_cast<std::size_t>(half_));
    for (int i = 0; i < half_; ++i) {
        std::vector<int> edge_offsets(static_cast<std::size_t>(i + half_ + 1));
        for (int j = 0; j <= i + half_; ++j) edge_offsets[static_cast<std::size_t>(j)] = j;
        left_edge_[static_cast<std::size_t>(i)] = fit_weights(edge_offsets, order, i);
    }
}

std::vector<double> SavGolFilter::apply(const std::vector<double>& values) const {
    const int n = static_cast<int>(values.size());
    require(n >= window_, ErrorKind::Input, "spectrum shorter than savgol window");
    std::vector<double> out(static_cast<std::size_t>(n));

    for (int i = 0; i < half_; ++i) {
        const auto& w = left_edge_[static_cast<std::size_t>(i)];
        double left = 0.0, right = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            left += w[j] * values[j];
            right += w[j] * values[static_cast<std::size_t>(n - 1) - j];
        }
        out[static_cast<std::size_t>(i)] = left;
        out[static_cast<std::size_t>(n - 1 - i)] = right;
    }
    for (int i = half_; i < n - half_; ++i) {
        double s = 0.0;
        for (int j = 0; j < window_; ++j)
            s += central_[static_cast<std::size_t>(j)] *
                 values[static_cast<std::size_t>(i - half_ + j)];
        out[static_cast<std::size_t>(i)] = s;
    }
    return out;
}

Spectrum SavGolFilter::apply(const Spectrum& spectrum) const {
    Spectrum out;
    out.axis = spectrum.axis;
    out.values = apply(spectrum.values);
    return out;
}

Spectrum savgol_smooth(const Spectrum& spectrum, int window, int order) {
    return SavGolFilter(window, order).apply(spectrum);
}

}  // namespace carenet
