#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "carenet/labels.hpp"

namespace carenet {

// Dataset splitting, patch- and patient-level metrics, and the per-sample
// voting system.

enum class SplitMode { ByPatient, ByPatch };

struct SplitSample {
    std::string sample_id;
    std::string patient_id;
    std::string label;  // class label for stratification (regression: level name)
};

struct SplitFold {
    std::vector<std::string> train_samples;
    std::vector<std::string> dev_samples;
    // by_patch mode: per-sample patch assignment (fraction of each sample's
    // patches routed to dev); patch indices resolved downstream.
    std::vector<std::string> dev_patients;
    std::vector<std::string> train_patients;
};

struct SplitPlan {
    std::vector<std::string> test_samples;
    std::vector<SplitFold> folds;
    SplitMode mode = SplitMode::ByPatient;
    std::string stratify_by;

    void validate_disjoint() const;  // split error when test leaks into folds
};

// Held-out test: 1 patient per class (multi-class / regression) or 2 per
// class (binary); the rest stratified into `folds` cross-validation folds.
// Classes absent from the data are skipped. Deterministic per seed.
SplitPlan split_dataset(const std::vector<SplitSample>& samples, const TaskSchema& schema,
                        SplitMode mode, int folds, std::uint64_t seed);

void save_fold_manifest(const SplitPlan& plan, const std::vector<SplitSample>& samples,
                        const std::filesystem::path& path);

// --------------------------------------------------------------------------
// Metrics
// --------------------------------------------------------------------------

struct ConfusionTally {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    long total() const { return tp + fp + tn + fn; }
};

struct ClassMetrics {
    std::string class_name;
    ConfusionTally tally;
    double accuracy = 0.0;
    double specificity = 0.0;
    double sensitivity = 0.0;
    bool specificity_defined = true;  // zero denominators flag as undefined
    bool sensitivity_defined = true;
};

// One-vs-rest per class; undefined ratios surface as NaN with the flag
// cleared, never silently zero.
std::vector<ClassMetrics> classification_metrics(const std::vector<int>& preds,
                                                 const std::vector<int>& truths,
                                                 const std::vector<std::string>& classes);

struct RegressionMetrics {
    double mae = 0.0;
    double mse = 0.0;
    double rmse = 0.0;
};

RegressionMetrics regression_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& truths);

// --------------------------------------------------------------------------
// Voting
// --------------------------------------------------------------------------

// Classification: majority over decoded patches, ties broken by the larger
// mean class score. Regression: mean of raw outputs, then unscaled.
DecodedOutput vote_sample(const std::vector<std::vector<double>>& patch_outputs,
                          const TaskSchema& schema);

// --------------------------------------------------------------------------
// Reports
// --------------------------------------------------------------------------

struct VoteRecord {
    std::string patient_id;
    int fold = 0;
    std::string truth;
    std::string prediction;
    bool correct = false;
};

struct FoldMetrics {
    int fold = 0;
    std::vector<ClassMetrics> per_class;
    std::optional<RegressionMetrics> regression;  // fraction scale
};

struct AggregateRow {
    std::string class_name;
    std::string metric;  // accuracy | specificity | sensitivity
    double mean = 0.0;
    double stddev = 0.0;  // sample std (n-1); 0 for a single fold
};

std::vector<AggregateRow> aggregate_metrics(const std::vector<FoldMetrics>& folds);

// Emits metrics.csv, votes.csv and (for regression tasks) regression.csv in
// both the min-max fraction scale and the rescaled percent scale.
void make_report(const TaskSchema& schema, const std::vector<FoldMetrics>& folds,
                 const std::vector<VoteRecord>& votes, const std::filesystem::path& out_dir);

}  // namespace carenet
