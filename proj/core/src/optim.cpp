#include <cmath>

#include "carenet/autonn.hpp"
#include "carenet/error.hpp"

namespace carenet::nn {

AdamState::AdamState(const std::vector<Tensor*>& params, AdamConfig config) : config_(config) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
        m_.emplace_back(p->v.size(), 0.0);
        v_.emplace_back(p->v.size(), 0.0);
    }
}

void AdamState::step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
                     double lr) {
    require(params.size() == m_.size() && grads.size() == m_.size(), ErrorKind::Input,
            "optimizer state does not match parameter list");
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& theta = params[i]->v;
        const auto& g = grads[i]->v;
        require(theta.size() == g.size() && theta.size() == m_[i].size(), ErrorKind::Input,
                "gradient shape does not match parameter");
        for (std::size_t j = 0; j < theta.size(); ++j) {
            m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g[j];
            v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g[j] * g[j];
            const double m_hat = m_[i][j] / c1;
            const double v_hat = v_[i][j] / c2;
            theta[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
    }
}

void ScheduleConfig::validate() const {
    require(initial_lr > 0.0 && first_decay_steps > 0.0 && t_mul > 0.0 && m_mul > 0.0 &&
                alpha >= 0.0,
            ErrorKind::Config, "schedule values must be positive");
    require(alpha < initial_lr, ErrorKind::Config, "alpha must be below the initial lr");
}

double lr_at_step(const ScheduleConfig& config, double step) {
    config.validate();
    require(step >= 0.0, ErrorKind::Input, "step must be >= 0");
    // Locate the restart cycle containing `step`.
    double cycle_len = config.first_decay_steps;
    double cycle_start = 0.0;
    double peak = config.initial_lr;
    while (step >= cycle_start + cycle_len) {
        cycle_start += cycle_len;
        cycle_len *= config.t_mul;
        peak *= config.m_mul;
    }
    const double t = step - cycle_start;
    const double cosine = (1.0 + std::cos(3.14159265358979323846 * t / cycle_len)) / 2.0;
    return config.alpha + (peak - config.alpha) * cosine;
}

std::vector<double> snapshot_params(const std::vector<Tensor*>& params) {
    std::vector<double> snapshot;
    for (const Tensor* p : params) snapshot.insert(snapshot.end(), p->v.begin(), p->v.end());
    return snapshot;
}

void restore_params(const std::vector<Tensor*>& params, const std::vector<double>& snapshot) {
    std::size_t offset = 0;
    for (Tensor* p : params) {
        require(offset + p->v.size() <= snapshot.size(), ErrorKind::Input,
                "snapshot does not match parameter list");
        std::copy(snapshot.begin() + static_cast<std::ptrdiff_t>(offset),
                  snapshot.begin() + static_cast<std::ptrdiff_t>(offset + p->v.size()),
                  p->v.begin());
        offset += p->v.size();
    }
    require(offset == snapshot.size(), ErrorKind::Input, "snapshot size mismatch");
}

}  // namespace carenet::nn
