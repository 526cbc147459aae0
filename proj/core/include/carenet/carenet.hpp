#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "carenet/autonn.hpp"
#include "carenet/labels.hpp"
#include "carenet/spectra.hpp"

namespace carenet {

// ============================================================================
// CaReNet-V2: dual spectral/spatial paths over 32x32xC patches. The spectral
// path sees each pixel spectrum on its own (1x1 kernels); the spatial path
// mixes 3x3 neighborhoods. Both end in global average pooling, are
// concatenated and fused by a dense stack feeding the task head.
// ============================================================================

struct CaReNetConfig {
    int patch_size = 32;
    int in_channels = 467;
    std::vector<int> spectral_filters = {128, 256, 512};  // 1x1 conv stages
    std::vector<int> spatial_filters = {128, 256, 512};   // 3x3 conv stages
    int fusion_units = 512;
    std::uint64_t init_seed = 0;

    void validate() const;
};

class DualPathNetwork {
public:
    DualPathNetwork() = default;

    // Forward to head logits (pre-activation).
    nn::Tensor forward(const nn::Tensor& input, bool record = false);
    // Backward from d(loss)/d(logits).
    void backward(const nn::Tensor& grad_logits, bool record = false);
    void zero_grads();

    std::vector<nn::Tensor*> params();
    std::vector<nn::Tensor*> grads();
    std::vector<std::string> param_names() const;
    long param_count();

    nn::Sequential& spectral_path() { return spectral_; }
    nn::Sequential& spatial_path() { return spatial_; }
    nn::Sequential& fusion() { return fusion_; }
    int spectral_gap_dim() const { return spectral_gap_dim_; }
    int spatial_gap_dim() const { return spatial_gap_dim_; }
    // Index (within the spatial path) of the ReLU following the last conv.
    std::size_t spatial_target_layer() const { return spatial_target_; }

    const CaReNetConfig& config() const { return config_; }
    const TaskSchema& schema() const { return schema_; }

    // Recorded forward activations / backward gradients (record=true runs).
    const nn::Tensor& spatial_activation(std::size_t i) const {
        return spatial_.recorded_output(i);
    }
    const nn::Tensor& spatial_activation_grad(std::size_t i) const {
        return spatial_.recorded_output_grad(i);
    }
    const nn::Tensor& recorded_concat() const { return concat_; }

    friend DualPathNetwork build_carenet(const CaReNetConfig& config, const TaskSchema& schema);

private:
    CaReNetConfig config_;
    TaskSchema schema_;
    nn::Sequential spectral_;
    nn::Sequential spatial_;
    nn::Sequential fusion_;
    int spectral_gap_dim_ = 0;
    int spatial_gap_dim_ = 0;
    std::size_t spatial_target_ = 0;
    nn::Tensor concat_;
};

// HeNormal-initialized graph with the head sized and activated per schema
// (1-sigmoid, 4-softmax, 4-sigmoid, 1-linear). Head activation lives in the
// loss / predict path; the graph ends at the logits.
DualPathNetwork build_carenet(const CaReNetConfig& config, const TaskSchema& schema);

// Exact parameter count (conv: kh*kw*Cin*F + F, dense: in*out + out).
long count_params(const CaReNetConfig& config, const TaskSchema& schema);

// --------------------------------------------------------------------------
// Augmentation: one transform per patch per epoch, uniform over the
// 8-element dihedral group. Spectral channel order is untouched.
// --------------------------------------------------------------------------

Patch apply_dihedral(const Patch& patch, int element);  // element in [0, 8)
Patch augment_patch(const Patch& patch, class Rng& rng);

// --------------------------------------------------------------------------
// Training
// --------------------------------------------------------------------------

struct TrainConfig {
    int batch_size = 10;
    int epochs = 300;
    int folds = 4;
    std::uint64_t seed = 0;
    nn::ScheduleConfig schedule;  // first_decay_steps <= 0 -> batches per epoch
    bool augment = true;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_metric = 0.0;  // accuracy, or MAE for regression
    double lr = 0.0;
};

struct TrainResult {
    std::vector<double> best_params;  // snapshot with the best dev metric
    double best_metric = 0.0;
    int best_epoch = -1;
    std::vector<EpochRecord> history;
};

// Per epoch: seeded shuffle, per-patch augmentation, minibatches, one Adam
// step per batch at the scheduled lr, class-weighted loss. The best dev
// checkpoint is retained. Deterministic for fixed seeds.
TrainResult train_model(DualPathNetwork& net, const std::vector<Patch>& train_patches,
                        const std::vector<Patch>& dev_patches, const TaskSchema& schema,
                        const std::map<std::string, double>& class_weight_by_label,
                        const TrainConfig& config);

// Pure forward pass; returns the activated head output.
std::vector<double> predict_patch(DualPathNetwork& net, const Patch& patch);

nn::Tensor patch_to_tensor(const Patch& patch);

// --------------------------------------------------------------------------
// Checkpoint + history files
// --------------------------------------------------------------------------

void save_checkpoint(DualPathNetwork& net, const std::filesystem::path& weights_path);
void load_checkpoint(DualPathNetwork& net, const std::filesystem::path& weights_path);

void save_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace carenet
