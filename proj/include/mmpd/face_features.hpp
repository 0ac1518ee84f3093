#pragma once

// Expression classifier trained on real and latent-edited face images; its penultimate
// layer is the facial feature for diagnosis.

#include "mmpd/common.hpp"
#include "mmpd/latent_editing.hpp"
#include "mmpd/nn.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mmpd {

enum class ExpressionLabel : int { neutral = 0, anger, disgust, fear, happiness, sadness, surprise };

inline constexpr int kExpressionCount = 7;

ExpressionLabel parse_expression(std::string_view name);
std::string_view to_string(ExpressionLabel e);
const std::array<ExpressionLabel, 6>& emotional_expressions();

struct LabeledImage {
    ImageTensor image;
    ExpressionLabel label = ExpressionLabel::neutral;
};

struct FaceBackboneConfig {
    ImageShape input{32, 32, 1};
    std::vector<int> conv_channels{4, 8};  // each stage: 3x3 conv, relu, 2x2 average pool
    int embedding_dim = 16;
    int classes = kExpressionCount;

    void validate() const;
};

class FaceClassifier {
public:
    FaceClassifier(FaceBackboneConfig cfg, std::uint64_t seed);

    const FaceBackboneConfig& config() const { return cfg_; }
    Eigen::RowVectorXd embed(const ImageTensor& image) const;
    Eigen::VectorXd logits(const ImageTensor& image) const;

    struct Trace;
    // Forward pass keeping intermediates; returns logits.
    Eigen::VectorXd forward(const ImageTensor& image, Trace& trace) const;
    // Accumulates gradients for dL/d(logits).
    void backward(const Trace& trace, const Eigen::VectorXd& grad_logits);

    nn::ParameterList parameters();
    nn::ConstParameterList parameters() const;

    void save(const std::filesystem::path& path, std::uint64_t config_hash = 0) const;
    static FaceClassifier load(const std::filesystem::path& path);

    struct Trace {
        std::vector<Eigen::MatrixXd> cols;
        std::vector<Eigen::MatrixXd> relu_mask;
        std::vector<std::array<int, 2>> conv_hw;
        Eigen::RowVectorXd flat;
        Eigen::RowVectorXd embedding;
    };

private:
    FaceBackboneConfig cfg_;
    std::vector<nn::Parameter> conv_weight_;
    std::vector<nn::Parameter> conv_bias_;
    nn::Parameter embed_weight_;
    nn::Parameter embed_bias_;
    nn::Parameter head_weight_;
    nn::Parameter head_bias_;
};

struct FaceTrainOptions {
    std::size_t epochs = 30;
    double learning_rate = 3e-3;
    std::size_t batch_size = 16;
    double test_fraction = 0.2;  // 4:1 train/test
    std::uint64_t seed = 0;
};

struct ClassifierReport {
    std::string model_name = "SmallCNN";
    std::size_t parameter_count = 0;
    double parameters_mb = 0.0;  // float32 storage
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::vector<double> epoch_loss;

    // Model | Parameters | Train Acc. | Test Acc.
    std::string table() const;
};

struct FaceTrainResult {
    FaceClassifier model;
    ClassifierReport report;
};

FaceTrainResult train_expression_classifier(std::span<const LabeledImage> dataset, const FaceBackboneConfig& cfg,
                                            const FaceTrainOptions& opts);

// Mean penultimate embedding over a subject's images.
FeatureVector extract_face_features(std::span<const ImageTensor> images, const FaceClassifier& model);

using ExpressionDirections = std::map<ExpressionLabel, DirectionVector>;

// Edits an already-inverted neutral latent along each neutral->X direction.
std::vector<LabeledImage> augment_from_latent(const LatentVector& neutral_latent, const ExpressionDirections& directions,
                                              const Generator& g, double lambda = 2.0);

// Inverts the neutral image, then edits it into the six emotional expressions.
std::vector<LabeledImage> augment_with_synthesized(const ImageTensor& neutral, const ExpressionDirections& directions,
                                                   const Generator& g, const PerceptualExtractor& px,
                                                   const InversionConfig& inversion, double lambda = 2.0);

} // namespace mmpd
