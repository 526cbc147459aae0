#include <algorithm>
#include <cmath>
#include <limits>

#include "carenet/preprocess.hpp"
#include "carenet/rng.hpp"

namespace carenet {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

struct SingleRun {
    std::vector<int> labels;
    std::vector<std::vector<double>> centroids;
    double objective = std::numeric_limits<double>::infinity();
};

// Farthest-point (kmeans++-style, deterministic after the first pick):
// first centroid is a seeded random row, each next is the row farthest from
// its nearest existing centroid.
std::vector<std::vector<double>> seed_centroids(const std::vector<std::vector<double>>& rows,
                                                int k, Rng& rng) {
    std::vector<std::vector<double>> centroids;
    centroids.push_back(rows[rng.below(rows.size())]);
    std::vector<double> nearest(rows.size(), std::numeric_limits<double>::infinity());
    while (static_cast<int>(centroids.size()) < k) {
        std::size_t far_idx = 0;
        double far_dist = -1.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            nearest[i] = std::min(nearest[i], sq_dist(rows[i], centroids.back()));
            if (nearest[i] > far_dist) {
                far_dist = nearest[i];
                far_idx = i;
            }
        }
        centroids.push_back(rows[far_idx]);
    }
    return centroids;
}

SingleRun lloyd(const std::vector<std::vector<double>>& rows, int k, Rng& rng, int max_iter) {
    const std::size_t n = rows.size();
    const std::size_t dim = rows[0].size();
    SingleRun run;
    run.centroids = seed_centroids(rows, k, rng);
    run.labels.assign(n, -1);

    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(rows[i], run.centroids[0]);
            for (int c = 1; c < k; ++c) {
                const double d = sq_dist(rows[i], run.centroids[static_cast<std::size_t>(c)]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            objective += best_d;
            if (run.labels[i] != best) {
                run.labels[i] = best;
                changed = true;
            }
        }
        run.objective = objective;
        if (!changed && iter > 0) break;

        std::vector<std::vector<double>> sums(static_cast<std::size_t>(k),
                                              std::vector<double>(dim, 0.0));
        std::vector<long> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& sum = sums[static_cast<std::size_t>(run.labels[i])];
            for (std::size_t d = 0; d < dim; ++d) sum[d] += rows[i][d];
            ++counts[static_cast<std::size_t>(run.labels[i])];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] == 0) {
                // Empty cluster: re-seed to the point farthest from its centroid.
                std::size_t far_idx = 0;
                double far_dist = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d =
                        sq_dist(rows[i], run.centroids[static_cast<std::size_t>(run.labels[i])]);
                    if (d > far_dist) {
                        far_dist = d;
                        far_idx = i;
                    }
                }
                run.centroids[static_cast<std::size_t>(c)] = rows[far_idx];
                continue;
            }
            for (std::size_t d = 0; d < dim; ++d)
                run.centroids[static_cast<std::size_t>(c)][d] =
                    sums[static_cast<std::size_t>(c)][d] /
                    static_cast<double>(counts[static_cast<std::size_t>(c)]);
        }
    }

    // Final assignment so labels match the returned centroids.
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        double best_d = sq_dist(rows[i], run.centroids[0]);
        for (int c = 1; c < k; ++c) {
            const double d = sq_dist(rows[i], run.centroids[static_cast<std::size_t>(c)]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        run.labels[i] = best;
        objective += best_d;
    }
    run.objective = objective;
    return run;
}

}  // namespace

KMeansResult kmeans_cluster(const std::vector<std::vector<double>>& rows, int k,
                            std::uint64_t seed, int max_iter, int restarts) {
    require(k >= 1, ErrorKind::Input, "k must be >= 1");
    require(static_cast<int>(rows.size()) >= k, ErrorKind::Input, "fewer rows than clusters");
    for (const auto& row : rows)
        for (double x : row)
            require(std::isfinite(x), ErrorKind::Input, "k-means input has non-finite values");

    SingleRun best;
    for (int r = 0; r < std::max(1, restarts); ++r) {
        Rng rng(Rng::derive_seed(seed, static_cast<std::uint64_t>(r)));
        SingleRun run = lloyd(rows, k, rng, max_iter);
        if (run.objective < best.objective) best = std::move(run);
    }

    // Recompute centroids as exact member means of the final assignment.
    const std::size_t dim = rows[0].size();
    std::vector<std::vector<double>> means(static_cast<std::size_t>(k),
                                           std::vector<double>(dim, 0.0));
    std::vector<long> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& m = means[static_cast<std::size_t>(best.labels[i])];
        for (std::size_t d = 0; d < dim; ++d) m[d] += rows[i][d];
        ++counts[static_cast<std::size_t>(best.labels[i])];
    }
    for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) {
            for (std::size_t d = 0; d < dim; ++d)
                means[static_cast<std::size_t>(c)][d] /=
                    static_cast<double>(counts[static_cast<std::size_t>(c)]);
        } else {
            means[static_cast<std::size_t>(c)] = best.centroids[static_cast<std::size_t>(c)];
        }
    }

    KMeansResult result;
    result.labels = std::move(best.labels);
    result.centroids = std::move(means);
    result.objective = best.objective;
    return result;
}

}  // namespace carenet
