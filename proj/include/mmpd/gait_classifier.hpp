#pragma once

#include "mmpd/common.hpp"
#include "mmpd/gait_network.hpp"
#include "mmpd/skeleton.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mmpd {

struct GaitSample {
    SkeletonSequence sequence;
    Diagnosis label = Diagnosis::pd;
};

struct GaitTrainOptions {
    std::size_t epochs = 15;
    double learning_rate = 5e-3;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
};

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Graph-convolutional gait extractor with a linear two-class head.
class GaitClassifier {
public:
    GaitClassifier(GaitModelConfig cfg, std::uint64_t seed);

    const GaitModelConfig& config() const { return cfg_; }
    const SkeletonGraph& graph() const { return graph_; }
    const GaitParams& params() const { return params_; }
    GaitParams& params() { return params_; }

    std::vector<GaitWindow> windows(const SkeletonSequence& seq) const;
    FeatureVector features(const SkeletonSequence& seq) const;
    FeatureVector features(std::span<const GaitWindow> windows) const;
    Eigen::VectorXd head_logits(const Eigen::RowVectorXd& embedding) const;

    nn::ParameterList head_parameters();
    nn::ConstParameterList extractor_parameters() const { return params_.parameters(); }
    nn::ConstParameterList all_parameters() const;
    nn::ParameterList all_parameters();

    void save(const std::filesystem::path& path, std::uint64_t config_hash = 0) const;
    static GaitClassifier load(const std::filesystem::path& path);

private:
    GaitModelConfig cfg_;
    SkeletonGraph graph_;
    GaitParams params_;
    nn::Parameter head_weight_;  // m_g x 2
    nn::Parameter head_bias_;    // 1 x 2
};

struct GaitTrainResult {
    GaitClassifier model;
    std::vector<EpochStats> trace;
};

// Window-level cross-entropy training of extractor and head with Adam.
GaitTrainResult train_gait_classifier(std::span<const GaitSample> samples, const GaitModelConfig& cfg,
                                      const GaitTrainOptions& opts);

} // namespace mmpd
