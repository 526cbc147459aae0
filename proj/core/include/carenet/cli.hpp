#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "carenet/carenet.hpp"
#include "carenet/preprocess.hpp"
#include "carenet/synth.hpp"

namespace carenet {

// Config-driven orchestration behind the carenet executable. Subcommands:
// synth, preprocess, train, predict, explain, evaluate, pipeline.

struct RunConfig {
    std::uint64_t seed = 7;
    int workers = 1;
    std::string task = "subtype";
    SynthConfig synth;
    PipelineConfig pipeline;
    CaReNetConfig model;
    TrainConfig train;
    int explain_top_n = 30;

    void validate() const;
};

// JSON config with strict key checking: unknown keys are a config error,
// missing keys take the documented defaults.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& json_text);
std::string config_to_json(const RunConfig& config);

// Runs one subcommand. Artifacts land under out_dir together with a
// manifest (inputs, seeds, content hashes). Returns the process exit code.
int run_subcommand(const std::string& subcommand, const RunConfig& config,
                   const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                   const std::filesystem::path& model_dir = {});

// argv-level entry point used by tools/carenet_main.cpp.
int cli_main(int argc, char** argv);

}  // namespace carenet
