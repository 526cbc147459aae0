#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "carenet/preprocess.hpp"

namespace carenet {

namespace {

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = static_cast<Eigen::Index>(rows[0].size());
    Eigen::MatrixXd m(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
        require(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) == c,
                ErrorKind::Input, "ragged row matrix");
        for (Eigen::Index j = 0; j < c; ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return m;
}

// Empirical quantile: smallest sample value with at least `ci` of the sample
// at or below it. Guarantees #{x > q} <= floor((1-ci)*N).
double empirical_quantile(std::vector<double> values, double ci) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    std::size_t k = static_cast<std::size_t>(std::ceil(ci * static_cast<double>(n)));
    k = std::clamp<std::size_t>(k, 1, n);
    return values[k - 1];
}

}  // namespace

PcaResult pca_decompose(const std::vector<std::vector<double>>& rows, int n_components) {
    require(rows.size() >= 2, ErrorKind::Input, "PCA needs at least 2 rows");
    const int n = static_cast<int>(rows.size());
    const int c = static_cast<int>(rows[0].size());
    require(n_components >= 1 && n_components <= std::min(n - 1, c), ErrorKind::Input,
            "n_components must be in [1, min(N-1, C)]");

    Eigen::MatrixXd x = to_matrix(rows);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;

    // Sample covariance eigendecomposition (C x C), descending eigenvalues.
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    require(eig.info() == Eigen::Success, ErrorKind::Model, "eigendecomposition failed");

    const double total_variance = std::max(cov.trace(), 0.0);

    PcaResult result;
    result.model.mean.assign(mean.data(), mean.data() + c);
    result.model.loadings.resize(static_cast<std::size_t>(n_components));
    result.model.eigenvalues.resize(static_cast<std::size_t>(n_components));
    result.model.explained_variance_ratio.resize(static_cast<std::size_t>(n_components));

    Eigen::MatrixXd loadings(n_components, c);
    for (int a = 0; a < n_components; ++a) {
        const int src = c - 1 - a;  // SelfAdjointEigenSolver sorts ascending
        const double lambda = std::max(eig.eigenvalues()(src), 0.0);
        loadings.row(a) = eig.eigenvectors().col(src).transpose();
        // Sign convention: largest-magnitude element positive, for determinism.
        Eigen::Index imax = 0;
        loadings.row(a).cwiseAbs().maxCoeff(&imax);
        if (loadings(a, imax) < 0.0) loadings.row(a) = -loadings.row(a);
        result.model.eigenvalues[static_cast<std::size_t>(a)] = lambda;
        result.model.explained_variance_ratio[static_cast<std::size_t>(a)] =
            total_variance > 0.0 ? lambda / total_variance : 0.0;
        result.model.loadings[static_cast<std::size_t>(a)].resize(static_cast<std::size_t>(c));
        for (int j = 0; j < c; ++j)
            result.model.loadings[static_cast<std::size_t>(a)][static_cast<std::size_t>(j)] =
                loadings(a, j);
    }

    const Eigen::MatrixXd scores = x * loadings.transpose();  // N x A
    result.scores.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        result.scores[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(n_components));
        for (int a = 0; a < n_components; ++a)
            result.scores[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] = scores(i, a);
    }
    return result;
}

OutlierStats outlier_mask(const std::vector<std::vector<double>>& rows, int n_pcs, double ci) {
    const int n = static_cast<int>(rows.size());
    require(n > n_pcs, ErrorKind::Input, "outlier screen needs more rows than components");
    require(ci > 0.0 && ci < 1.0, ErrorKind::Input, "confidence level must be in (0,1)");

    const PcaResult pca = pca_decompose(rows, n_pcs);
    const int c = static_cast<int>(rows[0].size());

    Eigen::MatrixXd loadings(n_pcs, c);
    for (int a = 0; a < n_pcs; ++a)
        for (int j = 0; j < c; ++j)
            loadings(a, j) = pca.model.loadings[static_cast<std::size_t>(a)][static_cast<std::size_t>(j)];
    Eigen::VectorXd mean(c);
    for (int j = 0; j < c; ++j) mean(j) = pca.model.mean[static_cast<std::size_t>(j)];

    OutlierStats stats;
    stats.t2.resize(static_cast<std::size_t>(n));
    stats.q.resize(static_cast<std::size_t>(n));

    // Zero-variance components contribute nothing to T2 (their scores are
    // numerical noise); the strict-inequality removal rule then keeps
    // constant data intact.
    const double lambda_floor = 1e-12;

    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd xi(c);
        for (int j = 0; j < c; ++j) xi(j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        xi -= mean;
        const Eigen::VectorXd score = loadings * xi;
        double t2 = 0.0;
        for (int a = 0; a < n_pcs; ++a) {
            const double lambda = pca.model.eigenvalues[static_cast<std::size_t>(a)];
            if (lambda > lambda_floor) t2 += score(a) * score(a) / lambda;
        }
        const Eigen::VectorXd residual = xi - loadings.transpose() * score;
        stats.t2[static_cast<std::size_t>(i)] = t2;
        stats.q[static_cast<std::size_t>(i)] = residual.squaredNorm();
    }

    stats.t2_threshold = empirical_quantile(stats.t2, ci);
    stats.q_threshold = empirical_quantile(stats.q, ci);
    stats.keep.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const bool outlier = stats.t2[static_cast<std::size_t>(i)] > stats.t2_threshold ||
                             stats.q[static_cast<std::size_t>(i)] > stats.q_threshold;
        stats.keep[static_cast<std::size_t>(i)] = outlier ? 0 : 1;
    }
    return stats;
}

}  // namespace carenet
