#pragma once

// Nested JSON configuration for every pipeline stage. Unknown keys and wrongly typed values
// are rejected with the offending section and key. All stage seeds derive from `seed`
// through nn::derive_seed(seed, "<stage>").

#include "mmpd/direction_discovery.hpp"
#include "mmpd/face_features.hpp"
#include "mmpd/fusion.hpp"
#include "mmpd/gait_classifier.hpp"
#include "mmpd/latent_editing.hpp"
#include "mmpd/synthetic_bench.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mmpd {

struct PipelineConfig {
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "mmpd-run";
    std::size_t workers = 1;

    ToyGeneratorSpec generator{64, {32, 32, 1}, 0.5, 0};
    std::vector<int> perceptual_channels{4, 4, 8, 8};
    InversionConfig inversion;
    FitOptions direction;
    double edit_lambda = 2.0;

    FaceBackboneConfig face;
    FaceTrainOptions face_training;
    std::size_t face_augment = 0;  // corpus neutral images inverted and edited into extra samples

    GaitModelConfig gait = GaitModelConfig::defaults();
    GaitTrainOptions gait_training;

    FusionTrainConfig fusion;

    std::size_t folds = 5;
    bool exclude_failures = false;

    BenchSpec bench;

    // Stage seeds filled in from the global seed.
    PipelineConfig with_derived_seeds() const;

    nlohmann::json to_json() const;
    // FNV-1a of the canonical JSON without output_dir and workers, which never change results.
    std::uint64_t hash() const;
};

PipelineConfig parse_config(const nlohmann::json& doc);
PipelineConfig load_config(const std::filesystem::path& path);

std::string hex64(std::uint64_t v);

} // namespace mmpd
