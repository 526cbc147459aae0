#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "carenet/evaluate.hpp"
#include "carenet/error.hpp"
#include "carenet/rng.hpp"

namespace carenet {

void SplitPlan::validate_disjoint() const {
    const std::set<std::string> test(test_samples.begin(), test_samples.end());
    for (const auto& fold : folds) {
        for (const auto& s : fold.train_samples)
            require(!test.count(s), ErrorKind::Split, "test sample leaked into a training fold");
        for (const auto& s : fold.dev_samples)
            require(!test.count(s), ErrorKind::Split, "test sample leaked into a dev fold");
    }
}

SplitPlan split_dataset(const std::vector<SplitSample>& samples, const TaskSchema& schema,
                        SplitMode mode, int folds, std::uint64_t seed) {
    require(folds >= 2, ErrorKind::Split, "need at least 2 folds");
    require(!samples.empty(), ErrorKind::Split, "empty sample list");

    // Group samples by class, preserving input order for determinism.
    std::vector<std::string> class_order;
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!by_class.count(samples[i].label)) class_order.push_back(samples[i].label);
        by_class[samples[i].label].push_back(i);
    }

    const int held_out_per_class = schema.kind == TaskKind::Binary ? 2 : 1;

    SplitPlan plan;
    plan.mode = mode;
    plan.stratify_by = schema.task;
    plan.folds.resize(static_cast<std::size_t>(folds));

    Rng rng(Rng::derive_seed(seed, 0xf01d));
    std::vector<std::size_t> remaining;

    for (const auto& cls : class_order) {
        auto members = by_class[cls];
        if (static_cast<int>(members.size()) <= held_out_per_class)
            raise(ErrorKind::Split, "class '" + cls + "' has too few patients for a held-out test");
        rng.shuffle(members);
        for (int t = 0; t < held_out_per_class; ++t) {
            plan.test_samples.push_back(samples[members[static_cast<std::size_t>(t)]].sample_id);
        }
        members.erase(members.begin(), members.begin() + held_out_per_class);
        remaining.insert(remaining.end(), members.begin(), members.end());
    }

    // Stratified fold assignment: members of each class are dealt round-robin
    // so every fold's class distribution is within one sample of proportional.
    std::map<std::string, std::vector<std::size_t>> remaining_by_class;
    for (std::size_t i : remaining) remaining_by_class[samples[i].label].push_back(i);
    std::vector<std::vector<std::size_t>> fold_members(static_cast<std::size_t>(folds));
    int deal = 0;
    for (const auto& cls : class_order) {
        auto it = remaining_by_class.find(cls);
        if (it == remaining_by_class.end()) continue;
        auto members = it->second;
        rng.shuffle(members);
        for (std::size_t m : members) {
            fold_members[static_cast<std::size_t>(deal % folds)].push_back(m);
            ++deal;
        }
    }

    if (mode == SplitMode::ByPatient) {
        for (int f = 0; f < folds; ++f) {
            SplitFold& fold = plan.folds[static_cast<std::size_t>(f)];
            std::set<std::string> dev_patients, train_patients;
            for (int g = 0; g < folds; ++g) {
                for (std::size_t m : fold_members[static_cast<std::size_t>(g)]) {
                    if (g == f) {
                        fold.dev_samples.push_back(samples[m].sample_id);
                        dev_patients.insert(samples[m].patient_id);
                    } else {
                        fold.train_samples.push_back(samples[m].sample_id);
                        train_patients.insert(samples[m].patient_id);
                    }
                }
            }
            fold.dev_patients.assign(dev_patients.begin(), dev_patients.end());
            fold.train_patients.assign(train_patients.begin(), train_patients.end());
            for (const auto& p : fold.dev_patients)
                require(!train_patients.count(p), ErrorKind::Split,
                        "patient '" + p + "' appears in both train and dev");
        }
    } else {
        // Patch-stratified mode: every remaining sample feeds all folds and
        // its patches rotate between train and dev downstream, so the same
        // patient shows up on both sides.
        std::vector<std::string> sample_ids;
        std::set<std::string> patient_set;
        for (const auto& cls : class_order) {
            auto it = remaining_by_class.find(cls);
            if (it == remaining_by_class.end()) continue;
            for (std::size_t m : it->second) {
                sample_ids.push_back(samples[m].sample_id);
                patient_set.insert(samples[m].patient_id);
            }
        }
        const std::vector<std::string> patients(patient_set.begin(), patient_set.end());
        for (int f = 0; f < folds; ++f) {
            SplitFold& fold = plan.folds[static_cast<std::size_t>(f)];
            fold.train_samples = sample_ids;
            fold.dev_samples = sample_ids;
            fold.train_patients = patients;
            fold.dev_patients = patients;
        }
    }
    plan.validate_disjoint();
    return plan;
}

void save_fold_manifest(const SplitPlan& plan, const std::vector<SplitSample>& samples,
                        const std::filesystem::path& path) {
    std::map<std::string, std::string> patient_of;
    for (const auto& s : samples) patient_of[s.sample_id] = s.patient_id;

    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot write fold manifest " + path.string());
    out << "patient_id,fold,role\n";
    for (const auto& sample : plan.test_samples) out << patient_of[sample] << ",-1,test\n";
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        for (const auto& p : plan.folds[f].train_patients) out << p << ',' << f << ",train\n";
        for (const auto& p : plan.folds[f].dev_patients) out << p << ',' << f << ",dev\n";
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

std::vector<ClassMetrics> classification_metrics(const std::vector<int>& preds,
                                                 const std::vector<int>& truths,
                                                 const std::vector<std::string>& classes) {
    require(preds.size() == truths.size(), ErrorKind::Input,
            "prediction and truth lengths differ");
    const double nan = std::numeric_limits<double>::quiet_NaN();

    std::vector<ClassMetrics> out;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        ClassMetrics m;
        m.class_name = classes[c];
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const bool truth_is_c = truths[i] == static_cast<int>(c);
            const bool pred_is_c = preds[i] == static_cast<int>(c);
            if (truth_is_c && pred_is_c) ++m.tally.tp;
            else if (!truth_is_c && pred_is_c) ++m.tally.fp;
            else if (!truth_is_c && !pred_is_c) ++m.tally.tn;
            else ++m.tally.fn;
        }
        const long p = m.tally.tp + m.tally.fn;
        const long n = m.tally.tn + m.tally.fp;
        m.sensitivity_defined = p > 0;
        m.specificity_defined = n > 0;
        m.sensitivity = p > 0 ? static_cast<double>(m.tally.tp) / static_cast<double>(p) : nan;
        m.specificity = n > 0 ? static_cast<double>(m.tally.tn) / static_cast<double>(n) : nan;
        m.accuracy = static_cast<double>(m.tally.tp + m.tally.tn) /
                     static_cast<double>(std::max<long>(1, m.tally.total()));
        out.push_back(m);
    }
    return out;
}

RegressionMetrics regression_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& truths) {
    require(!preds.empty() && preds.size() == truths.size(), ErrorKind::Input,
            "regression metrics need equal non-empty prediction/truth lists");
    RegressionMetrics m;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = preds[i] - truths[i];
        m.mae += std::abs(d);
        m.mse += d * d;
    }
    m.mae /= static_cast<double>(preds.size());
    m.mse /= static_cast<double>(preds.size());
    m.rmse = std::sqrt(m.mse);
    return m;
}

// ---------------------------------------------------------------------------
// Voting
// ---------------------------------------------------------------------------

DecodedOutput vote_sample(const std::vector<std::vector<double>>& patch_outputs,
                          const TaskSchema& schema) {
    require(!patch_outputs.empty(), ErrorKind::Input, "vote needs at least one patch output");

    if (schema.kind == TaskKind::Regression) {
        double mean = 0.0;
        for (const auto& raw : patch_outputs) mean += raw[0];
        mean /= static_cast<double>(patch_outputs.size());
        DecodedOutput out;
        out.percent = unscale_percent(schema, mean);
        return out;
    }

    const std::size_t k = static_cast<std::size_t>(schema.classes.size());
    std::vector<long> counts(k, 0);
    std::vector<double> mean_scores(k, 0.0);
    for (const auto& raw : patch_outputs) {
        ++counts[static_cast<std::size_t>(decode_output(schema, raw).class_index)];
        const auto scores = class_scores(schema, raw);
        for (std::size_t c = 0; c < k; ++c) mean_scores[c] += scores[c];
    }
    for (double& s : mean_scores) s /= static_cast<double>(patch_outputs.size());

    long best_count = *std::max_element(counts.begin(), counts.end());
    int winner = -1;
    double winner_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] != best_count) continue;
        // Majority; ties go to the class with the larger mean score.
        if (winner < 0 || mean_scores[c] > winner_score) {
            winner = static_cast<int>(c);
            winner_score = mean_scores[c];
        }
    }
    DecodedOutput out;
    out.class_index = winner;
    out.class_name = schema.classes[static_cast<std::size_t>(winner)];
    return out;
}

}  // namespace carenet
