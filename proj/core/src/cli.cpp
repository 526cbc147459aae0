#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "carenet/cli.hpp"
#include "carenet/evaluate.hpp"
#include "carenet/explain.hpp"
#include "carenet/image.hpp"
#include "carenet/rng.hpp"
#include "carenet/sha256.hpp"

namespace carenet {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key))
            raise(ErrorKind::Config, "unknown config key '" + path + key + "'");
    }
}

template <typename T>
void read_key(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        raise(ErrorKind::Config, std::string("invalid value for config key '") + key + "'");
    }
}

void parse_synth(const json& obj, SynthConfig& synth) {
    check_keys(obj,
               {"samples", "height", "width", "axis_start", "axis_end", "axis_points",
                "tissue_fraction", "paraffin_amp", "vapor_amp", "noise_sigma",
                "tissue_paraffin_leak", "n_paraffin", "n_vapor", "classes"},
               "synth.");
    read_key(obj, "samples", synth.n_samples);
    read_key(obj, "height", synth.height);
    read_key(obj, "width", synth.width);
    read_key(obj, "axis_start", synth.axis_start);
    read_key(obj, "axis_end", synth.axis_end);
    read_key(obj, "axis_points", synth.axis_points);
    read_key(obj, "tissue_fraction", synth.tissue_fraction);
    read_key(obj, "paraffin_amp", synth.paraffin_amp);
    read_key(obj, "vapor_amp", synth.vapor_amp);
    read_key(obj, "noise_sigma", synth.noise_sigma);
    read_key(obj, "tissue_paraffin_leak", synth.tissue_paraffin_leak);
    read_key(obj, "n_paraffin", synth.n_paraffin);
    read_key(obj, "n_vapor", synth.n_vapor);
    if (obj.contains("classes")) {
        synth.classes.clear();
        for (const auto& entry : obj.at("classes")) {
            check_keys(entry, {"name", "amide1", "amide2", "phosphate", "ki67_percent"},
                       "synth.classes[].");
            SynthClass cls;
            read_key(entry, "name", cls.name);
            read_key(entry, "amide1", cls.amide1);
            read_key(entry, "amide2", cls.amide2);
            read_key(entry, "phosphate", cls.phosphate);
            read_key(entry, "ki67_percent", cls.ki67_percent);
            require(!cls.name.empty(), ErrorKind::Config, "synth class needs a name");
            synth.classes.push_back(std::move(cls));
        }
    }
}

void parse_preprocess(const json& obj, PipelineConfig& pipe) {
    check_keys(obj,
               {"amide_hi", "amide_lo", "paraffin_hi", "paraffin_lo", "biofingerprint_hi",
                "biofingerprint_lo", "outlier_pcs", "outlier_ci", "savgol_window", "savgol_order",
                "emsc_poly_order", "emsc_var_threshold", "patch_size", "patch_zero_fraction",
                "kmeans_max_iter", "kmeans_restarts"},
               "preprocess.");
    read_key(obj, "amide_hi", pipe.amide_hi);
    read_key(obj, "amide_lo", pipe.amide_lo);
    read_key(obj, "paraffin_hi", pipe.paraffin_hi);
    read_key(obj, "paraffin_lo", pipe.paraffin_lo);
    read_key(obj, "biofingerprint_hi", pipe.biofingerprint_hi);
    read_key(obj, "biofingerprint_lo", pipe.biofingerprint_lo);
    read_key(obj, "outlier_pcs", pipe.outlier_pcs);
    read_key(obj, "outlier_ci", pipe.outlier_ci);
    read_key(obj, "savgol_window", pipe.savgol_window);
    read_key(obj, "savgol_order", pipe.savgol_order);
    read_key(obj, "emsc_poly_order", pipe.emsc_poly_order);
    read_key(obj, "emsc_var_threshold", pipe.emsc_var_threshold);
    read_key(obj, "patch_size", pipe.patch_size);
    read_key(obj, "patch_zero_fraction", pipe.patch_zero_fraction);
    read_key(obj, "kmeans_max_iter", pipe.kmeans_max_iter);
    read_key(obj, "kmeans_restarts", pipe.kmeans_restarts);
}

void parse_model(const json& obj, CaReNetConfig& model) {
    check_keys(obj, {"spectral_filters", "spatial_filters", "fusion_units"}, "model.");
    read_key(obj, "spectral_filters", model.spectral_filters);
    read_key(obj, "spatial_filters", model.spatial_filters);
    read_key(obj, "fusion_units", model.fusion_units);
}

void parse_train(const json& obj, TrainConfig& train) {
    check_keys(obj,
               {"batch_size", "epochs", "folds", "initial_lr", "first_decay_steps", "t_mul",
                "m_mul", "alpha", "augment"},
               "train.");
    read_key(obj, "batch_size", train.batch_size);
    read_key(obj, "epochs", train.epochs);
    read_key(obj, "folds", train.folds);
    read_key(obj, "initial_lr", train.schedule.initial_lr);
    read_key(obj, "first_decay_steps", train.schedule.first_decay_steps);
    read_key(obj, "t_mul", train.schedule.t_mul);
    read_key(obj, "m_mul", train.schedule.m_mul);
    read_key(obj, "alpha", train.schedule.alpha);
    read_key(obj, "augment", train.augment);
}

}  // namespace

void RunConfig::validate() const {
    synth.validate();
    pipeline.validate();
    train.validate();
    require(workers >= 1, ErrorKind::Config, "workers must be >= 1");
    require(explain_top_n >= 1, ErrorKind::Config, "explain_top_n must be >= 1");
    static const std::set<std::string> tasks = {"type", "subtype", "er", "pr", "her2", "ki67"};
    require(tasks.count(task) == 1, ErrorKind::Config, "unknown task '" + task + "'");
}

RunConfig parse_config_text(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        raise(ErrorKind::Config, std::string("malformed JSON config: ") + e.what());
    }
    check_keys(root, {"seed", "workers", "task", "synth", "preprocess", "model", "train",
                      "explain_top_n"},
               "");
    RunConfig config;
    config.train.schedule.first_decay_steps = 0.0;  // 0 = batches per epoch
    read_key(root, "seed", config.seed);
    read_key(root, "workers", config.workers);
    read_key(root, "task", config.task);
    read_key(root, "explain_top_n", config.explain_top_n);
    if (root.contains("synth")) parse_synth(root.at("synth"), config.synth);
    if (root.contains("preprocess")) parse_preprocess(root.at("preprocess"), config.pipeline);
    if (root.contains("model")) parse_model(root.at("model"), config.model);
    if (root.contains("train")) parse_train(root.at("train"), config.train);
    config.validate();
    return config;
}

RunConfig parse_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open config " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

std::string config_to_json(const RunConfig& config) {
    json root;
    root["seed"] = config.seed;
    root["workers"] = config.workers;
    root["task"] = config.task;
    json synth;
    synth["samples"] = config.synth.n_samples;
    synth["height"] = config.synth.height;
    synth["width"] = config.synth.width;
    synth["axis_start"] = config.synth.axis_start;
    synth["axis_end"] = config.synth.axis_end;
    synth["axis_points"] = config.synth.axis_points;
    synth["tissue_fraction"] = config.synth.tissue_fraction;
    synth["paraffin_amp"] = config.synth.paraffin_amp;
    synth["vapor_amp"] = config.synth.vapor_amp;
    synth["noise_sigma"] = config.synth.noise_sigma;
    synth["tissue_paraffin_leak"] = config.synth.tissue_paraffin_leak;
    synth["n_paraffin"] = config.synth.n_paraffin;
    synth["n_vapor"] = config.synth.n_vapor;
    json classes = json::array();
    const auto cls_list =
        config.synth.classes.empty() ? default_synth_classes() : config.synth.classes;
    for (const auto& cls : cls_list) {
        json c;
        c["name"] = cls.name;
        c["amide1"] = cls.amide1;
        c["amide2"] = cls.amide2;
        c["phosphate"] = cls.phosphate;
        c["ki67_percent"] = cls.ki67_percent;
        classes.push_back(c);
    }
    synth["classes"] = classes;
    root["synth"] = synth;
    json pre;
    pre["amide_hi"] = config.pipeline.amide_hi;
    pre["amide_lo"] = config.pipeline.amide_lo;
    pre["paraffin_hi"] = config.pipeline.paraffin_hi;
    pre["paraffin_lo"] = config.pipeline.paraffin_lo;
    pre["biofingerprint_hi"] = config.pipeline.biofingerprint_hi;
    pre["biofingerprint_lo"] = config.pipeline.biofingerprint_lo;
    pre["outlier_pcs"] = config.pipeline.outlier_pcs;
    pre["outlier_ci"] = config.pipeline.outlier_ci;
    pre["savgol_window"] = config.pipeline.savgol_window;
    pre["savgol_order"] = config.pipeline.savgol_order;
    pre["emsc_poly_order"] = config.pipeline.emsc_poly_order;
    pre["emsc_var_threshold"] = config.pipeline.emsc_var_threshold;
    pre["patch_size"] = config.pipeline.patch_size;
    pre["patch_zero_fraction"] = config.pipeline.patch_zero_fraction;
    pre["kmeans_max_iter"] = config.pipeline.kmeans_max_iter;
    pre["kmeans_restarts"] = config.pipeline.kmeans_restarts;
    root["preprocess"] = pre;
    json model;
    model["spectral_filters"] = config.model.spectral_filters;
    model["spatial_filters"] = config.model.spatial_filters;
    model["fusion_units"] = config.model.fusion_units;
    root["model"] = model;
    json train;
    train["batch_size"] = config.train.batch_size;
    train["epochs"] = config.train.epochs;
    train["folds"] = config.train.folds;
    train["initial_lr"] = config.train.schedule.initial_lr;
    train["first_decay_steps"] = config.train.schedule.first_decay_steps;
    train["t_mul"] = config.train.schedule.t_mul;
    train["m_mul"] = config.train.schedule.m_mul;
    train["alpha"] = config.train.schedule.alpha;
    train["augment"] = config.train.augment;
    root["train"] = train;
    root["explain_top_n"] = config.explain_top_n;
    return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Subcommand helpers
// ---------------------------------------------------------------------------

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot write " + path.string());
    out << text;
}

// Manifest: sorted relative artifact paths with content hashes; identical
// runs produce identical bytes.
void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    const RunConfig& config,
                    const std::vector<std::pair<std::string, std::string>>& inputs) {
    std::vector<std::pair<std::string, std::string>> artifacts;
    for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), out_dir);
        if (rel.filename() == "manifest.json") continue;
        artifacts.emplace_back(rel.generic_string(), sha256_file(entry.path()));
    }
    std::sort(artifacts.begin(), artifacts.end());

    json manifest;
    manifest["subcommand"] = subcommand;
    manifest["seed"] = config.seed;
    manifest["task"] = config.task;
    manifest["config_sha256"] = sha256_hex(config_to_json(config));
    json in_list = json::array();
    for (const auto& [path, hash] : inputs) {
        json item;
        item["path"] = path;
        item["sha256"] = hash;
        in_list.push_back(item);
    }
    manifest["inputs"] = in_list;
    json art_list = json::array();
    for (const auto& [path, hash] : artifacts) {
        json item;
        item["path"] = path;
        item["sha256"] = hash;
        art_list.push_back(item);
    }
    manifest["artifacts"] = art_list;
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

// Inputs are recorded by file name + content hash so manifests stay
// byte-identical no matter where the input directory lives.
std::vector<std::pair<std::string, std::string>> hash_inputs(const std::vector<fs::path>& paths) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& p : paths)
        if (fs::exists(p)) out.emplace_back(p.filename().generic_string(), sha256_file(p));
    return out;
}

struct Dataset {
    LabelManifest manifest;
    std::vector<fs::path> cube_paths;  // parallel to manifest.records
};

Dataset load_dataset(const fs::path& dir, const std::string& cubes_subdir) {
    Dataset ds;
    ds.manifest = load_label_manifest(dir / "labels.csv");
    for (const auto& record : ds.manifest.records) {
        const fs::path cube = dir / cubes_subdir / (record.sample_id + ".hsc");
        require(fs::exists(cube), ErrorKind::Io, "missing cube " + cube.string());
        ds.cube_paths.push_back(cube);
    }
    return ds;
}

SplitMode mode_for_task(const std::string& task) {
    return (task == "type" || task == "subtype" || task == "her2") ? SplitMode::ByPatient
                                                                   : SplitMode::ByPatch;
}

std::string stratify_label(const LabelRecord& record, const TaskSchema& schema) {
    if (schema.kind == TaskKind::Regression) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", record.ki67_percent);
        return buf;
    }
    return record.label_for(schema);
}

// Patches of one preprocessed sample, labeled for the task.
std::vector<Patch> sample_patches(const fs::path& cube_path, const LabelRecord& record,
                                  const TaskSchema& schema, const PipelineConfig& pipe) {
    const HyperMosaic mosaic = read_cube(cube_path);
    std::vector<Patch> patches =
        extract_patches(mosaic, pipe.patch_size, pipe.patch_zero_fraction);
    for (Patch& p : patches) {
        if (schema.kind == TaskKind::Regression) {
            p.percent = record.ki67_percent;
            p.label = stratify_label(record, schema);
        } else {
            p.label = record.label_for(schema);
        }
    }
    return patches;
}

std::map<std::string, double> weights_for(const std::vector<Patch>& train_patches,
                                          const TaskSchema& schema) {
    if (schema.kind == TaskKind::Regression) return {};
    // Counts over classes present in the training patches.
    std::vector<std::string> present;
    std::map<std::string, long> counts;
    for (const auto& p : train_patches) {
        if (!counts.count(p.label)) present.push_back(p.label);
        ++counts[p.label];
    }
    std::vector<long> count_vec;
    for (const auto& cls : present) count_vec.push_back(counts[cls]);
    const auto weights = class_weights(count_vec);
    std::map<std::string, double> by_label;
    for (std::size_t i = 0; i < present.size(); ++i) by_label[present[i]] = weights[i];
    return by_label;
}

int detect_channels(const Dataset& ds) {
    require(!ds.cube_paths.empty(), ErrorKind::Input, "dataset has no cubes");
    return read_cube(ds.cube_paths[0]).channels();
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_synth(const RunConfig& config, const fs::path& out_dir) {
    fs::create_directories(out_dir / "mosaics");
    fs::create_directories(out_dir / "masks");
    const SynthDataset ds = synth_dataset(config.synth, config.seed);

    LabelManifest manifest;
    for (const auto& sample : ds.samples) {
        write_cube(sample.mosaic, out_dir / "mosaics" / (sample.mosaic.sample_id + ".hsc"));
        std::vector<std::uint8_t> mask_img(sample.gt_mask.size());
        for (std::size_t i = 0; i < sample.gt_mask.size(); ++i)
            mask_img[i] = sample.gt_mask[i] ? 255 : 0;
        write_png_gray(out_dir / "masks" / (sample.mosaic.sample_id + "_gt.png"),
                       sample.mosaic.width, sample.mosaic.height, mask_img);
        LabelRecord record;
        record.sample_id = sample.mosaic.sample_id;
        record.patient_id = sample.mosaic.patient_id;
        record.type = sample.type;
        record.subtype = sample.subtype;
        record.er = sample.er;
        record.pr = sample.pr;
        record.her2 = sample.her2;
        record.ki67_percent = sample.ki67_percent;
        manifest.records.push_back(std::move(record));
    }
    save_label_manifest(manifest, out_dir / "labels.csv");
    write_library(ds.library, out_dir / "library.hsl");
    write_text(out_dir / "config.resolved.json", config_to_json(config));
    write_manifest(out_dir, "synth", config, {});
}

void cmd_preprocess(const RunConfig& config, const fs::path& in_dir, const fs::path& out_dir) {
    fs::create_directories(out_dir / "pre");
    fs::create_directories(out_dir / "reports");
    const Dataset ds = load_dataset(in_dir, "mosaics");
    const ReferenceLibrary library = read_library(in_dir / "library.hsl");

    PipelineConfig pipe = config.pipeline;
    pipe.workers = config.workers;
    pipe.kmeans_seed = Rng::derive_seed(config.seed, 0xbead);

    for (std::size_t i = 0; i < ds.manifest.records.size(); ++i) {
        const HyperMosaic raw = read_cube(ds.cube_paths[i]);
        PreprocessReport report;
        HyperMosaic pre = run_pipeline(raw, library, pipe, &report);
        int candidates = 0, excluded = 0;
        extract_patches(pre, pipe.patch_size, pipe.patch_zero_fraction, &candidates, &excluded);
        report.patches_kept = candidates - excluded;
        report.patches_excluded = excluded;
        write_cube(pre, out_dir / "pre" / (pre.sample_id + ".hsc"));
        write_text(out_dir / "reports" / (pre.sample_id + ".json"), report.to_json());
    }
    save_label_manifest(ds.manifest, out_dir / "labels.csv");
    write_text(out_dir / "config.resolved.json", config_to_json(config));
    write_manifest(out_dir, "preprocess", config,
                   hash_inputs({in_dir / "labels.csv", in_dir / "library.hsl"}));
}

struct FoldData {
    std::vector<Patch> train;
    std::vector<Patch> dev;
};

// Assemble per-fold train/dev patches according to the split plan. In
// by-patch mode every remaining sample contributes; patch i of a sample goes
// to dev in fold f iff i % folds == f.
std::vector<FoldData> assemble_folds(const Dataset& ds, const SplitPlan& plan,
                                     const TaskSchema& schema, const PipelineConfig& pipe,
                                     int folds) {
    std::map<std::string, std::vector<Patch>> patches_by_sample;
    std::map<std::string, const LabelRecord*> record_by_sample;
    for (std::size_t i = 0; i < ds.manifest.records.size(); ++i) {
        const auto& record = ds.manifest.records[i];
        record_by_sample[record.sample_id] = &record;
        patches_by_sample[record.sample_id] =
            sample_patches(ds.cube_paths[i], record, schema, pipe);
    }

    std::vector<FoldData> out(static_cast<std::size_t>(folds));
    for (int f = 0; f < folds; ++f) {
        FoldData& fold = out[static_cast<std::size_t>(f)];
        if (plan.mode == SplitMode::ByPatient) {
            for (const auto& sid : plan.folds[static_cast<std::size_t>(f)].train_samples)
                for (const Patch& p : patches_by_sample[sid]) fold.train.push_back(p);
            for (const auto& sid : plan.folds[static_cast<std::size_t>(f)].dev_samples)
                for (const Patch& p : patches_by_sample[sid]) fold.dev.push_back(p);
        } else {
            for (const auto& sid : plan.folds[static_cast<std::size_t>(f)].train_samples) {
                const auto& patches = patches_by_sample[sid];
                for (std::size_t i = 0; i < patches.size(); ++i) {
                    if (static_cast<int>(i % static_cast<std::size_t>(folds)) == f)
                        fold.dev.push_back(patches[i]);
                    else
                        fold.train.push_back(patches[i]);
                }
            }
        }
        require(!fold.train.empty(), ErrorKind::Split,
                "fold " + std::to_string(f) + " has no training patches");
    }
    return out;
}

std::vector<SplitSample> split_samples(const Dataset& ds, const TaskSchema& schema) {
    std::vector<SplitSample> samples;
    for (const auto& record : ds.manifest.records) {
        if (schema.task == "her2" && !record.her2) continue;  // rejected levels drop out
        samples.push_back({record.sample_id, record.patient_id, stratify_label(record, schema)});
    }
    return samples;
}

void cmd_train(const RunConfig& config, const fs::path& in_dir, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const Dataset ds = load_dataset(in_dir, "pre");
    const TaskSchema schema = TaskSchema::for_task(config.task);
    const auto samples = split_samples(ds, schema);

    const SplitPlan plan = split_dataset(samples, schema, mode_for_task(config.task),
                                         config.train.folds, config.seed);
    save_fold_manifest(plan, samples, out_dir / "folds.csv");

    PipelineConfig pipe = config.pipeline;
    const auto folds = assemble_folds(ds, plan, schema, pipe, config.train.folds);

    CaReNetConfig net_config = config.model;
    net_config.patch_size = pipe.patch_size;
    net_config.in_channels = detect_channels(ds);

    for (int f = 0; f < config.train.folds; ++f) {
        const fs::path fold_dir = out_dir / ("fold_" + std::to_string(f));
        fs::create_directories(fold_dir);

        net_config.init_seed = Rng::derive_seed(config.seed, 0x1000 + static_cast<std::uint64_t>(f));
        DualPathNetwork net = build_carenet(net_config, schema);

        TrainConfig train_config = config.train;
        train_config.seed = Rng::derive_seed(config.seed, 0x2000 + static_cast<std::uint64_t>(f));

        const auto& fold = folds[static_cast<std::size_t>(f)];
        const auto weights = weights_for(fold.train, schema);
        const TrainResult result =
            train_model(net, fold.train, fold.dev, schema, weights, train_config);

        nn::restore_params(net.params(), result.best_params);
        save_checkpoint(net, fold_dir / "checkpoint.bin");
        save_history_csv(result.history, fold_dir / "history.csv");

        json summary;
        summary["fold"] = f;
        summary["best_epoch"] = result.best_epoch;
        summary["best_dev_metric"] = result.best_metric;
        summary["train_patches"] = fold.train.size();
        summary["dev_patches"] = fold.dev.size();
        summary["param_count"] = net.param_count();
        write_text(fold_dir / "summary.json", summary.dump(2) + "\n");
    }
    write_text(out_dir / "config.resolved.json", config_to_json(config));
    write_manifest(out_dir, "train", config, hash_inputs({in_dir / "labels.csv"}));
}

DualPathNetwork load_model(const RunConfig& config, const TaskSchema& schema, int channels,
                           const fs::path& fold_dir) {
    CaReNetConfig net_config = config.model;
    net_config.patch_size = config.pipeline.patch_size;
    net_config.in_channels = channels;
    DualPathNetwork net = build_carenet(net_config, schema);
    load_checkpoint(net, fold_dir / "checkpoint.bin");
    return net;
}

void cmd_predict(const RunConfig& config, const fs::path& in_dir, const fs::path& out_dir,
                 const fs::path& model_dir) {
    fs::create_directories(out_dir);
    const Dataset ds = load_dataset(in_dir, "pre");
    const TaskSchema schema = TaskSchema::for_task(config.task);
    DualPathNetwork net = load_model(config, schema, detect_channels(ds), model_dir);

    std::ofstream out(out_dir / "predictions.csv", std::ios::trunc);
    if (!out) raise(ErrorKind::Io, "cannot write predictions.csv");
    out << "sample_id,patient_id,origin_row,origin_col,decoded,raw\n";
    for (std::size_t i = 0; i < ds.manifest.records.size(); ++i) {
        const auto& record = ds.manifest.records[i];
        for (const Patch& patch : sample_patches(ds.cube_paths[i], record, schema, config.pipeline)) {
            const auto raw = predict_patch(net, patch);
            const auto decoded = decode_output(schema, raw);
            out << record.sample_id << ',' << record.patient_id << ',' << patch.origin_row << ','
                << patch.origin_col << ',';
            if (schema.kind == TaskKind::Regression) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.6g", decoded.percent);
                out << buf;
            } else {
                out << decoded.class_name;
            }
            out << ',';
            for (std::size_t j = 0; j < raw.size(); ++j) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.9g", raw[j]);
                out << (j ? ";" : "") << buf;
            }
            out << '\n';
        }
    }
    write_manifest(out_dir, "predict", config, hash_inputs({in_dir / "labels.csv"}));
}

void cmd_evaluate(const RunConfig& config, const fs::path& in_dir, const fs::path& out_dir,
                  const fs::path& model_dir) {
    fs::create_directories(out_dir);
    const Dataset ds = load_dataset(in_dir, "pre");
    const TaskSchema schema = TaskSchema::for_task(config.task);
    const auto samples = split_samples(ds, schema);
    const SplitPlan plan = split_dataset(samples, schema, mode_for_task(config.task),
                                         config.train.folds, config.seed);

    std::map<std::string, const LabelRecord*> record_by_sample;
    std::map<std::string, std::size_t> index_by_sample;
    for (std::size_t i = 0; i < ds.manifest.records.size(); ++i) {
        record_by_sample[ds.manifest.records[i].sample_id] = &ds.manifest.records[i];
        index_by_sample[ds.manifest.records[i].sample_id] = i;
    }

    const int channels = detect_channels(ds);
    std::vector<FoldMetrics> fold_metrics;
    std::vector<VoteRecord> votes;

    for (int f = 0; f < config.train.folds; ++f) {
        DualPathNetwork net = load_model(config, schema, channels,
                                         model_dir / ("fold_" + std::to_string(f)));
        FoldMetrics fm;
        fm.fold = f;
        std::vector<int> preds, truths;
        std::vector<double> reg_preds, reg_truths;

        for (const auto& sid : plan.test_samples) {
            const LabelRecord* record = record_by_sample.at(sid);
            const auto patches =
                sample_patches(ds.cube_paths[index_by_sample.at(sid)], *record, schema,
                               config.pipeline);
            std::vector<std::vector<double>> outputs;
            for (const Patch& patch : patches) {
                const auto raw = predict_patch(net, patch);
                outputs.push_back(raw);
                if (schema.kind == TaskKind::Regression) {
                    reg_preds.push_back(raw[0]);
                    reg_truths.push_back(encode_label(schema, record->ki67_percent)[0]);
                } else {
                    preds.push_back(decode_output(schema, raw).class_index);
                    truths.push_back(schema.class_index(record->label_for(schema)));
                }
            }
            if (outputs.empty()) continue;
            const DecodedOutput vote = vote_sample(outputs, schema);
            VoteRecord vr;
            vr.patient_id = record->patient_id;
            vr.fold = f;
            if (schema.kind == TaskKind::Regression) {
                char truth_buf[32], pred_buf[32];
                std::snprintf(truth_buf, sizeof(truth_buf), "%.6g", record->ki67_percent);
                std::snprintf(pred_buf, sizeof(pred_buf), "%.6g", vote.percent);
                vr.truth = truth_buf;
                vr.prediction = pred_buf;
                // Correct when prediction falls on the same side of the
                // 15% low/high cutoff as the ground truth.
                vr.correct = (vote.percent < 15.0) == (record->ki67_percent < 15.0);
            } else {
                vr.truth = record->label_for(schema);
                vr.prediction = vote.class_name;
                vr.correct = vr.truth == vr.prediction;
            }
            votes.push_back(vr);
        }

        if (schema.kind == TaskKind::Regression) {
            fm.regression = regression_metrics(reg_preds, reg_truths);
        } else {
            fm.per_class = classification_metrics(preds, truths, schema.classes);
        }
        fold_metrics.push_back(std::move(fm));
    }

    make_report(schema, fold_metrics, votes, out_dir);
    write_manifest(out_dir, "evaluate", config, hash_inputs({in_dir / "labels.csv"}));
}

void cmd_explain(const RunConfig& config, const fs::path& in_dir, const fs::path& out_dir,
                 const fs::path& model_dir) {
    fs::create_directories(out_dir);
    const Dataset ds = load_dataset(in_dir, "pre");
    const TaskSchema schema = TaskSchema::for_task(config.task);
    const int channels = detect_channels(ds);
    DualPathNetwork net = load_model(config, schema, channels, model_dir);

    // Patches of the held-out test samples drive the analyses.
    const auto samples = split_samples(ds, schema);
    const SplitPlan plan = split_dataset(samples, schema, mode_for_task(config.task),
                                         config.train.folds, config.seed);
    std::map<std::string, std::size_t> index_by_sample;
    for (std::size_t i = 0; i < ds.manifest.records.size(); ++i)
        index_by_sample[ds.manifest.records[i].sample_id] = i;

    std::vector<Patch> patches;
    for (const auto& sid : plan.test_samples) {
        const std::size_t i = index_by_sample.at(sid);
        for (const Patch& p :
             sample_patches(ds.cube_paths[i], ds.manifest.records[i], schema, config.pipeline))
            patches.push_back(p);
    }
    require(!patches.empty(), ErrorKind::Input, "no test patches available to explain");

    // Grad-CAM on the first test patch, for its decoded class.
    const Patch& probe = patches.front();
    const auto raw = predict_patch(net, probe);
    const int class_index =
        schema.kind == TaskKind::Regression ? 0 : decode_output(schema, raw).class_index;
    const Heatmap heat = grad_cam(net, probe, class_index);
    write_png_heat(out_dir / "gradcam.png", heat.width, heat.height, heat.values);
    {
        std::ofstream csv(out_dir / "gradcam.csv", std::ios::trunc);
        csv << "row,col,value\n";
        for (int r = 0; r < heat.height; ++r)
            for (int c = 0; c < heat.width; ++c) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.9g", heat.at(r, c));
                csv << r << ',' << c << ',' << buf << '\n';
            }
    }

    const WavenumberAxis axis = read_cube(ds.cube_paths[0]).axis;
    const ChannelImportance importance = channel_importance(net, axis, config.explain_top_n);
    {
        std::ofstream csv(out_dir / "channel_importance.csv", std::ios::trunc);
        csv << "channel,wavenumber,score\n";
        for (std::size_t c = 0; c < importance.scores.size(); ++c) {
            char buf[48];
            std::snprintf(buf, sizeof(buf), "%.6f,%.9g", axis.at(static_cast<int>(c)),
                          importance.scores[c]);
            csv << c << ',' << buf << '\n';
        }
    }
    {
        std::ofstream csv(out_dir / "top_bands.csv", std::ios::trunc);
        csv << "rank,wavenumber_hi,wavenumber_lo,channel_first,channel_last,score\n";
        for (std::size_t b = 0; b < importance.top_bands.size(); ++b) {
            const auto& band = importance.top_bands[b];
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%d,%d,%.9g", b + 1, band.wavenumber_hi,
                          band.wavenumber_lo, band.channel_first, band.channel_last, band.score);
            csv << buf << '\n';
        }
    }

    const PathContribution contribution = path_contribution(net, patches);
    json pc;
    pc["spectral_fraction"] = contribution.spectral_fraction;
    pc["spatial_fraction"] = contribution.spatial_fraction;
    write_text(out_dir / "path_contribution.json", pc.dump(2) + "\n");

    write_manifest(out_dir, "explain", config, hash_inputs({in_dir / "labels.csv"}));
}

void cmd_pipeline(const RunConfig& config, const fs::path& out_dir) {
    cmd_synth(config, out_dir / "synth");
    cmd_preprocess(config, out_dir / "synth", out_dir / "pre");
    cmd_train(config, out_dir / "pre", out_dir / "train");
    cmd_evaluate(config, out_dir / "pre", out_dir / "eval", out_dir / "train");
    cmd_explain(config, out_dir / "pre", out_dir / "explain", out_dir / "train" / "fold_0");
    write_manifest(out_dir, "pipeline", config, {});
}

}  // namespace

int run_subcommand(const std::string& subcommand, const RunConfig& config, const fs::path& in_dir,
                   const fs::path& out_dir, const fs::path& model_dir) {
    try {
        require(!out_dir.empty(), ErrorKind::Config, "--out is required");
        fs::create_directories(out_dir);
        if (subcommand == "synth") {
            cmd_synth(config, out_dir);
        } else if (subcommand == "preprocess") {
            cmd_preprocess(config, in_dir, out_dir);
        } else if (subcommand == "train") {
            cmd_train(config, in_dir, out_dir);
        } else if (subcommand == "predict") {
            cmd_predict(config, in_dir, out_dir, model_dir);
        } else if (subcommand == "evaluate") {
            cmd_evaluate(config, in_dir, out_dir, model_dir);
        } else if (subcommand == "explain") {
            cmd_explain(config, in_dir, out_dir, model_dir);
        } else if (subcommand == "pipeline") {
            cmd_pipeline(config, out_dir);
        } else {
            raise(ErrorKind::Config, "unknown subcommand '" + subcommand + "'");
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "carenet " << subcommand << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "carenet " << subcommand << ": " << e.what() << "\n";
        return 1;
    }
}

int cli_main(int argc, char** argv) {
    CLI::App app{"CaReNet-V2 hyperspectral pipeline"};
    app.require_subcommand(1);

    std::string config_path, in_dir, out_dir, model_dir, task;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;

    const auto add_common = [&](CLI::App* sub, bool needs_in, bool needs_model) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
            seed_set = true;
        });
        sub->add_option("--out", out_dir, "output directory")->required();
        sub->add_option("--task", task, "task override (type|subtype|er|pr|her2|ki67)");
        sub->add_option("--workers", workers, "per-spectrum worker threads");
        if (needs_in) sub->add_option("--in", in_dir, "input directory")->required();
        if (needs_model) sub->add_option("--model", model_dir, "model directory")->required();
    };

    add_common(app.add_subcommand("synth", "generate a synthetic dataset"), false, false);
    add_common(app.add_subcommand("preprocess", "run the preprocessing pipeline"), true, false);
    add_common(app.add_subcommand("train", "train per-fold models"), true, false);
    add_common(app.add_subcommand("predict", "predict patches with a checkpoint"), true, true);
    add_common(app.add_subcommand("evaluate", "held-out test metrics and votes"), true, true);
    add_common(app.add_subcommand("explain", "Grad-CAM and channel importance"), true, true);
    add_common(app.add_subcommand("pipeline", "synth + preprocess + train + evaluate + explain"),
               false, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig config = config_path.empty() ? RunConfig{} : parse_config(config_path);
        if (config_path.empty()) config.train.schedule.first_decay_steps = 0.0;
        if (const char* env_seed = std::getenv("CARENET_SEED"); env_seed && !seed_set)
            config.seed = std::strtoull(env_seed, nullptr, 10);
        if (seed_set) config.seed = seed;
        if (!task.empty()) config.task = task;
        if (workers > 0) config.workers = workers;
        config.validate();

        const std::string subcommand = app.get_subcommands().front()->get_name();
        return run_subcommand(subcommand, config, in_dir, out_dir, model_dir);
    } catch (const Error& e) {
        std::cerr << "carenet: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "carenet: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace carenet
