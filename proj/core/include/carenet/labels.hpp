#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace carenet {

// Task schemas and target encodings. Each prediction task carries its
// encoding kind, which drives the network head, the loss and the decode rule.

enum class TaskKind { Binary, OneHot, Ordinal, Regression };

const char* to_string(TaskKind kind);

struct TaskSchema {
    std::string task;                  // "type", "subtype", "er", ...
    TaskKind kind = TaskKind::Binary;
    std::vector<std::string> classes;  // ordered; empty for regression
    int output_dim = 1;
    double threshold = 0.5;
    double range_min = 0.0;  // regression only
    double range_max = 0.0;

    int class_index(const std::string& label) const;  // schema error if unknown

    // Canonical tasks.
    static TaskSchema type();     // binary over {AT, CA}
    static TaskSchema subtype();  // one-hot over {LA, LB, HER2, TNBC}
    static TaskSchema er();       // ordinal over {-, +, ++, +++}
    static TaskSchema pr();
    static TaskSchema her2();     // binary over {0, 3+}
    static TaskSchema ki67();     // regression over 5-30 %

    // One-hot schema over an observed class list (synthetic studies).
    static TaskSchema onehot_over(const std::string& task, std::vector<std::string> classes);

    static TaskSchema for_task(const std::string& task);
};

// Classification target: binary -> {0,1} scalar; one-hot -> unit basis
// vector; ordinal level i -> cumulative ones at positions 0..i.
std::vector<double> encode_label(const TaskSchema& schema, const std::string& label);
// Regression target: (percent - min) / (max - min).
std::vector<double> encode_label(const TaskSchema& schema, double percent);

struct DecodedOutput {
    int class_index = -1;     // classification kinds
    std::string class_name;
    double percent = 0.0;     // regression
};

// raw is the activated network output (sigmoid / softmax / linear).
DecodedOutput decode_output(const TaskSchema& schema, const std::vector<double>& raw);

// Per-class scores used for deterministic vote tie-breaking.
std::vector<double> class_scores(const TaskSchema& schema, const std::vector<double>& raw);

double unscale_percent(const TaskSchema& schema, double fraction);

// w_c = N / (K * n_c); zero counts are an input error.
std::vector<double> class_weights(const std::vector<long>& counts);

// --------------------------------------------------------------------------
// Label manifest (CSV): sample_id, patient_id, type, subtype, er, pr, her2,
// ki67_percent. HER2 1+/2+ are rejected at load with a warning.
// --------------------------------------------------------------------------

struct LabelRecord {
    std::string sample_id;
    std::string patient_id;
    std::string type;
    std::string subtype;
    std::string er;
    std::string pr;
    std::optional<std::string> her2;  // empty when the level was rejected
    double ki67_percent = 0.0;

    std::string label_for(const TaskSchema& schema) const;
};

struct LabelManifest {
    std::vector<LabelRecord> records;
    std::vector<std::string> warnings;

    const LabelRecord* find(const std::string& sample_id) const;
};

LabelManifest load_label_manifest(const std::filesystem::path& path);
void save_label_manifest(const LabelManifest& manifest, const std::filesystem::path& path);

}  // namespace carenet
