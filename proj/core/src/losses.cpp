#include <algorithm>
#include <cmath>

#include "carenet/autonn.hpp"
#include "carenet/error.hpp"

namespace carenet::nn {

namespace {

constexpr double kProbFloor = 1e-7;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

std::vector<double> softmax(const std::vector<double>& z) {
    double peak = z[0];
    for (double x : z) peak = std::max(peak, x);
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - peak);
        sum += p[i];
    }
    for (double& x : p) x /= sum;
    return p;
}

void check_dims(const std::vector<double>& logits, const std::vector<double>& target) {
    require(logits.size() == target.size(), ErrorKind::Loss,
            "logit and target dimensions differ");
    require(!logits.empty(), ErrorKind::Loss, "empty output");
}

}  // namespace

double compute_loss(TaskKind kind, const std::vector<double>& logits,
                    const std::vector<double>& target, double class_weight) {
    check_dims(logits, target);
    double loss = 0.0;
    switch (kind) {
        case TaskKind::Binary: {
            const double p = clamp_prob(sigmoid(logits[0]));
            const double y = target[0];
            loss = -class_weight * (y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
            break;
        }
        case TaskKind::OneHot: {
            const auto p = softmax(logits);
            for (std::size_t i = 0; i < p.size(); ++i)
                loss -= target[i] * std::log(clamp_prob(p[i]));
            loss *= class_weight;
            break;
        }
        case TaskKind::Ordinal: {
            for (std::size_t i = 0; i < logits.size(); ++i) {
                const double d = sigmoid(logits[i]) - target[i];
                loss += d * d;
            }
            loss *= class_weight;
            break;
        }
        case TaskKind::Regression: {
            const double d = logits[0] - target[0];
            loss = d * d;  // no class weight for regression
            break;
        }
    }
    if (!std::isfinite(loss)) raise(ErrorKind::Loss, "non-finite loss value");
    return loss;
}

std::vector<double> loss_grad(TaskKind kind, const std::vector<double>& logits,
                              const std::vector<double>& target, double class_weight) {
    check_dims(logits, target);
    std::vector<double> grad(logits.size(), 0.0);
    switch (kind) {
        case TaskKind::Binary: {
            const double p = sigmoid(logits[0]);
            grad[0] = class_weight * (p - target[0]);
            break;
        }
        case TaskKind::OneHot: {
            const auto p = softmax(logits);
            for (std::size_t i = 0; i < p.size(); ++i)
                grad[i] = class_weight * (p[i] - target[i]);
            break;
        }
        case TaskKind::Ordinal: {
            for (std::size_t i = 0; i < logits.size(); ++i) {
                const double s = sigmoid(logits[i]);
                grad[i] = class_weight * 2.0 * (s - target[i]) * s * (1.0 - s);
            }
            break;
        }
        case TaskKind::Regression: {
            grad[0] = 2.0 * (logits[0] - target[0]);
            break;
        }
    }
    return grad;
}

std::vector<double> head_activation(TaskKind kind, const std::vector<double>& logits) {
    switch (kind) {
        case TaskKind::Binary:
        case TaskKind::Ordinal: {
            std::vector<double> out(logits.size());
            for (std::size_t i = 0; i < logits.size(); ++i) out[i] = sigmoid(logits[i]);
            return out;
        }
        case TaskKind::OneHot:
            return softmax(logits);
        case TaskKind::Regression:
            return logits;
    }
    return logits;
}

}  // namespace carenet::nn
