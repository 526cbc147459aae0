#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "carenet/carenet.hpp"
#include "carenet/rng.hpp"

namespace carenet {

void TrainConfig::validate() const {
    require(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
    require(epochs >= 0, ErrorKind::Config, "epochs must be >= 0");
    require(folds >= 2, ErrorKind::Config, "folds must be >= 2");
}

namespace {

struct Encoded {
    nn::Tensor input;
    std::vector<double> target;
    double weight = 1.0;
};

Encoded encode_patch(const Patch& patch, const TaskSchema& schema,
                     const std::map<std::string, double>& weights) {
    Encoded e;
    e.input = patch_to_tensor(patch);
    if (schema.kind == TaskKind::Regression) {
        e.target = encode_label(schema, patch.percent);
        e.weight = 1.0;
    } else {
        e.target = encode_label(schema, patch.label);
        const auto it = weights.find(patch.label);
        e.weight = it == weights.end() ? 1.0 : it->second;
    }
    return e;
}

// Dev metric: decoded accuracy for classification, MAE on the fraction scale
// for regression (lower is better there, so the comparison flips).
double dev_metric(DualPathNetwork& net, const std::vector<Patch>& dev, const TaskSchema& schema) {
    if (dev.empty()) return 0.0;
    if (schema.kind == TaskKind::Regression) {
        double abs_sum = 0.0;
        for (const Patch& patch : dev) {
            const auto raw = predict_patch(net, patch);
            const double truth = encode_label(schema, patch.percent)[0];
            abs_sum += std::abs(raw[0] - truth);
        }
        return abs_sum / static_cast<double>(dev.size());
    }
    long correct = 0;
    for (const Patch& patch : dev) {
        const auto raw = predict_patch(net, patch);
        const auto decoded = decode_output(schema, raw);
        if (decoded.class_name == patch.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dev.size());
}

// Ties on the dev metric go to the lower train loss, so a saturated dev set
// still selects the best-fitted weights.
bool better(double candidate, double incumbent, double candidate_loss, double incumbent_loss,
            TaskKind kind) {
    if (kind == TaskKind::Regression) {
        if (candidate != incumbent) return candidate < incumbent;
    } else {
        if (candidate != incumbent) return candidate > incumbent;
    }
    return candidate_loss < incumbent_loss;
}

}  // namespace

TrainResult train_model(DualPathNetwork& net, const std::vector<Patch>& train_patches,
                        const std::vector<Patch>& dev_patches, const TaskSchema& schema,
                        const std::map<std::string, double>& class_weight_by_label,
                        const TrainConfig& config) {
    config.validate();
    require(!train_patches.empty(), ErrorKind::Input, "empty training set");

    const auto params = net.params();
    const auto grads = net.grads();
    nn::AdamState adam(params);

    nn::ScheduleConfig schedule = config.schedule;
    const long batches_per_epoch =
        (static_cast<long>(train_patches.size()) + config.batch_size - 1) / config.batch_size;
    if (schedule.first_decay_steps <= 0.0)
        schedule.first_decay_steps = static_cast<double>(batches_per_epoch);

    TrainResult result;
    result.best_metric = schema.kind == TaskKind::Regression
                             ? std::numeric_limits<double>::infinity()
                             : -std::numeric_limits<double>::infinity();
    result.best_params = nn::snapshot_params(params);
    double best_loss = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_patches.size());
    std::iota(order.begin(), order.end(), 0);

    long global_step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(Rng::derive_seed(config.seed, 0x10000 + static_cast<std::uint64_t>(epoch)));
        Rng augment_rng(Rng::derive_seed(config.seed, 0x20000 + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        double last_lr = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const double batch_n = static_cast<double>(stop - start);

            net.zero_grads();
            double batch_loss = 0.0;
            for (std::size_t i = start; i < stop; ++i) {
                const Patch& base = train_patches[order[i]];
                const Encoded e = config.augment
                                      ? encode_patch(augment_patch(base, augment_rng), schema,
                                                     class_weight_by_label)
                                      : encode_patch(base, schema, class_weight_by_label);
                const nn::Tensor logits = net.forward(e.input);
                batch_loss += nn::compute_loss(schema.kind, logits.v, e.target, e.weight);
                std::vector<double> dlogits = nn::loss_grad(schema.kind, logits.v, e.target, e.weight);
                nn::Tensor grad_tensor(logits.shape);
                grad_tensor.v = std::move(dlogits);
                net.backward(grad_tensor);
            }
            batch_loss /= batch_n;
            if (!std::isfinite(batch_loss))
                raise(ErrorKind::Loss, "non-finite batch loss at epoch " + std::to_string(epoch));
            // mean-reduced loss: scale accumulated gradients by 1/batch
            for (nn::Tensor* g : grads)
                for (double& x : g->v) x /= batch_n;

            last_lr = nn::lr_at_step(schedule, static_cast<double>(global_step));
            adam.step(params, grads, last_lr);
            ++global_step;
            epoch_loss += batch_loss;
        }
        epoch_loss /= static_cast<double>(batches_per_epoch);

        const double metric = dev_metric(net, dev_patches, schema);
        if (better(metric, result.best_metric, epoch_loss, best_loss, schema.kind)) {
            result.best_metric = metric;
            result.best_epoch = epoch;
            result.best_params = nn::snapshot_params(params);
            best_loss = epoch_loss;
        }
        result.history.push_back({epoch, epoch_loss, metric, last_lr});
    }
    return result;
}

std::vector<double> predict_patch(DualPathNetwork& net, const Patch& patch) {
    require(patch.channels == net.config().in_channels, ErrorKind::Graph,
            "patch channel count does not match the network input");
    require(patch.size == net.config().patch_size, ErrorKind::Graph,
            "patch size does not match the network input");
    const nn::Tensor logits = net.forward(patch_to_tensor(patch));
    return nn::head_activation(net.schema().kind, logits.v);
}

// ---------------------------------------------------------------------------
// Checkpoint + sidecar + history
// ---------------------------------------------------------------------------

void save_checkpoint(DualPathNetwork& net, const std::filesystem::path& weights_path) {
    nn::save_weights(net.params(), weights_path);

    // JSON sidecar: shape manifest in parameter order.
    std::filesystem::path sidecar = weights_path;
    sidecar += ".json";
    std::ofstream out(sidecar, std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot write checkpoint sidecar " + sidecar.string());
    const auto names = net.param_names();
    const auto params = net.params();
    out << "{\n  \"version\": 1,\n  \"task\": \"" << net.schema().task << "\",\n  \"params\": [\n";
    for (std::size_t i = 0; i < params.size(); ++i) {
        out << "    {\"name\": \"" << names[i] << "\", \"shape\": [";
        for (std::size_t d = 0; d < params[i]->shape.size(); ++d)
            out << (d ? ", " : "") << params[i]->shape[d];
        out << "]}" << (i + 1 < params.size() ? "," : "") << "\n";
    }
    out << "  ]\n}\n";
}

void load_checkpoint(DualPathNetwork& net, const std::filesystem::path& weights_path) {
    nn::load_weights(net.params(), weights_path);
}

void save_history_csv(const std::vector<EpochRecord>& history,
                      const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot write history " + path.string());
    out << "epoch,train_loss,dev_metric,lr\n";
    char line[160];
    for (const auto& row : history) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g\n", row.epoch, row.train_loss,
                      row.dev_metric, row.lr);
        out << line;
    }
}

}  // namespace carenet
