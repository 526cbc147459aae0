#include "carenet/labels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "carenet/error.hpp"

namespace carenet {

const char* to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::Binary: return "binary";
        case TaskKind::OneHot: return "onehot";
        case TaskKind::Ordinal: return "ordinal";
        case TaskKind::Regression: return "regression";
    }
    return "?";
}

int TaskSchema::class_index(const std::string& label) const {
    const auto it = std::find(classes.begin(), classes.end(), label);
    if (it == classes.end())
        raise(ErrorKind::Schema, "unknown label '" + label + "' for task " + task);
    return static_cast<int>(it - classes.begin());
}

TaskSchema TaskSchema::type() {
    return {"type", TaskKind::Binary, {"AT", "CA"}, 1, 0.5, 0.0, 0.0};
}
TaskSchema TaskSchema::subtype() {
    return {"subtype", TaskKind::OneHot, {"LA", "LB", "HER2", "TNBC"}, 4, 0.5, 0.0, 0.0};
}
TaskSchema TaskSchema::er() {
    return {"er", TaskKind::Ordinal, {"-", "+", "++", "+++"}, 4, 0.5, 0.0, 0.0};
}
TaskSchema TaskSchema::pr() {
    return {"pr", TaskKind::Ordinal, {"-", "+", "++", "+++"}, 4, 0.5, 0.0, 0.0};
}
TaskSchema TaskSchema::her2() {
    return {"her2", TaskKind::Binary, {"0", "3+"}, 1, 0.5, 0.0, 0.0};
}
TaskSchema TaskSchema::ki67() {
    return {"ki67", TaskKind::Regression, {}, 1, 0.5, 5.0, 30.0};
}

TaskSchema TaskSchema::onehot_over(const std::string& task, std::vector<std::string> classes) {
    require(classes.size() >= 2, ErrorKind::Schema, "one-hot schema needs >= 2 classes");
    TaskSchema schema;
    schema.task = task;
    schema.kind = TaskKind::OneHot;
    schema.output_dim = static_cast<int>(classes.size());
    schema.classes = std::move(classes);
    return schema;
}

TaskSchema TaskSchema::for_task(const std::string& task) {
    if (task == "type") return type();
    if (task == "subtype") return subtype();
    if (task == "er") return er();
    if (task == "pr") return pr();
    if (task == "her2") return her2();
    if (task == "ki67") return ki67();
    raise(ErrorKind::Schema, "unknown task '" + task + "'");
}

std::vector<double> encode_label(const TaskSchema& schema, const std::string& label) {
    switch (schema.kind) {
        case TaskKind::Binary:
            return {static_cast<double>(schema.class_index(label))};
        case TaskKind::OneHot: {
            std::vector<double> target(static_cast<std::size_t>(schema.output_dim), 0.0);
            target[static_cast<std::size_t>(schema.class_index(label))] = 1.0;
            return target;
        }
        case TaskKind::Ordinal: {
            // Level i -> cumulative ones at positions 0..i.
            const int level = schema.class_index(label);
            std::vector<double> target(static_cast<std::size_t>(schema.output_dim), 0.0);
            for (int i = 0; i <= level; ++i) target[static_cast<std::size_t>(i)] = 1.0;
            return target;
        }
        case TaskKind::Regression:
            raise(ErrorKind::Schema, "regression task needs a percent, not a class label");
    }
    raise(ErrorKind::Schema, "unhandled task kind");
}

std::vector<double> encode_label(const TaskSchema& schema, double percent) {
    require(schema.kind == TaskKind::Regression, ErrorKind::Schema,
            "percent encoding only applies to regression tasks");
    if (percent < schema.range_min || percent > schema.range_max)
        raise(ErrorKind::Range, "percent outside the task range");
    return {(percent - schema.range_min) / (schema.range_max - schema.range_min)};
}

DecodedOutput decode_output(const TaskSchema& schema, const std::vector<double>& raw) {
    require(static_cast<int>(raw.size()) == schema.output_dim, ErrorKind::Decode,
            "output dimension does not match schema");
    for (double v : raw)
        require(std::isfinite(v), ErrorKind::Decode, "non-finite network output");

    DecodedOutput out;
    switch (schema.kind) {
        case TaskKind::Binary:
            out.class_index = raw[0] >= schema.threshold ? 1 : 0;
            break;
        case TaskKind::OneHot: {
            int best = 0;
            for (int i = 1; i < schema.output_dim; ++i)
                if (raw[static_cast<std::size_t>(i)] > raw[static_cast<std::size_t>(best)]) best = i;
            out.class_index = best;
            break;
        }
        case TaskKind::Ordinal: {
            // Highest index exceeding the threshold; all-below decodes to 0.
            int level = 0;
            for (int i = 0; i < schema.output_dim; ++i)
                if (raw[static_cast<std::size_t>(i)] > schema.threshold) level = i;
            out.class_index = level;
            break;
        }
        case TaskKind::Regression:
            out.percent = unscale_percent(schema, raw[0]);
            return out;
    }
    out.class_name = schema.classes[static_cast<std::size_t>(out.class_index)];
    return out;
}

std::vector<double> class_scores(const TaskSchema& schema, const std::vector<double>& raw) {
    require(static_cast<int>(raw.size()) == schema.output_dim, ErrorKind::Decode,
            "output dimension does not match schema");
    switch (schema.kind) {
        case TaskKind::Binary:
            return {1.0 - raw[0], raw[0]};
        case TaskKind::OneHot:
            return raw;
        case TaskKind::Ordinal: {
            // raw[i] estimates P(level >= i); score of level i is the
            // probability mass between consecutive outputs.
            const int n = schema.output_dim;
            std::vector<double> scores(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                const double ge_i = i == 0 ? 1.0 : raw[static_cast<std::size_t>(i)];
                const double ge_next = i + 1 < n ? raw[static_cast<std::size_t>(i + 1)] : 0.0;
                scores[static_cast<std::size_t>(i)] = ge_i - ge_next;
            }
            return scores;
        }
        case TaskKind::Regression:
            return raw;
    }
    raise(ErrorKind::Schema, "unhandled task kind");
}

double unscale_percent(const TaskSchema& schema, double fraction) {
    return fraction * (schema.range_max - schema.range_min) + schema.range_min;
}

std::vector<double> class_weights(const std::vector<long>& counts) {
    require(!counts.empty(), ErrorKind::Input, "empty count vector");
    long total = 0;
    for (long n : counts) {
        require(n >= 1, ErrorKind::Input, "class count must be >= 1");
        total += n;
    }
    const double k = static_cast<double>(counts.size());
    std::vector<double> weights(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c)
        weights[c] = static_cast<double>(total) / (k * static_cast<double>(counts[c]));
    return weights;
}

// ---------------------------------------------------------------------------
// Label manifest
// ---------------------------------------------------------------------------

std::string LabelRecord::label_for(const TaskSchema& schema) const {
    if (schema.task == "type") return type;
    if (schema.task == "subtype") return subtype;
    if (schema.task == "er") return er;
    if (schema.task == "pr") return pr;
    if (schema.task == "her2") {
        if (!her2) raise(ErrorKind::Schema, "sample " + sample_id + " has no usable HER2 level");
        return *her2;
    }
    if (schema.task == "ki67") return std::to_string(ki67_percent);
    raise(ErrorKind::Schema, "unknown task '" + schema.task + "'");
}

const LabelRecord* LabelManifest::find(const std::string& sample_id) const {
    for (const auto& record : records)
        if (record.sample_id == sample_id) return &record;
    return nullptr;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

}  // namespace

LabelManifest load_label_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open label manifest " + path.string());

    LabelManifest manifest;
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::Format, "empty label manifest");
    const auto header = split_csv_line(line);
    const std::vector<std::string> expected = {"sample_id", "patient_id", "type", "subtype",
                                               "er", "pr", "her2", "ki67_percent"};
    require(header == expected, ErrorKind::Format, "unexpected label manifest header");

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        require(fields.size() == 8, ErrorKind::Format,
                "label row has " + std::to_string(fields.size()) + " fields, expected 8");
        LabelRecord record;
        record.sample_id = fields[0];
        record.patient_id = fields[1];
        record.type = fields[2];
        record.subtype = fields[3];
        record.er = fields[4];
        record.pr = fields[5];
        if (fields[6] == "1+" || fields[6] == "2+") {
            // Borderline HER2 levels are excluded from the HER2 task.
            manifest.warnings.push_back("sample " + record.sample_id + ": HER2 level '" +
                                        fields[6] + "' rejected (not considered)");
            record.her2 = std::nullopt;
        } else if (fields[6].empty()) {
            record.her2 = std::nullopt;
        } else {
            record.her2 = fields[6];
        }
        try {
            record.ki67_percent = std::stod(fields[7]);
        } catch (const std::exception&) {
            raise(ErrorKind::Format, "bad ki67_percent for sample " + record.sample_id);
        }
        manifest.records.push_back(std::move(record));
    }
    return manifest;
}

void save_label_manifest(const LabelManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot write label manifest " + path.string());
    out << "sample_id,patient_id,type,subtype,er,pr,her2,ki67_percent\n";
    for (const auto& r : manifest.records) {
        char ki67[32];
        std::snprintf(ki67, sizeof(ki67), "%.6g", r.ki67_percent);
        out << r.sample_id << ',' << r.patient_id << ',' << r.type << ',' << r.subtype << ','
            << r.er << ',' << r.pr << ',' << (r.her2 ? *r.her2 : std::string()) << ',' << ki67
            << '\n';
    }
}

}  // namespace carenet
