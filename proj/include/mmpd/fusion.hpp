#pragma once

// Hybrid fusion head. For each modality a fully connected layer produces a scalar score,
// the score is appended to the modality's feature (m + 1 values), a second fully connected
// layer maps that to two class logits, and the two modalities' logits are summed.

#include "mmpd/common.hpp"
#include "mmpd/face_features.hpp"
#include "mmpd/gait_classifier.hpp"
#include "mmpd/manifest.hpp"
#include "mmpd/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mmpd {

struct ModalityHead {
    nn::Parameter score_weight;  // m x 1
    nn::Parameter score_bias;    // 1 x 1
    nn::Parameter class_weight;  // (m+1) x 2
    nn::Parameter class_bias;    // 1 x 2

    int dim() const { return static_cast<int>(score_weight.value.rows()); }
    nn::ParameterList parameters();
    nn::ConstParameterList parameters() const;
};

ModalityHead make_modality_head(const std::string& prefix, int dim, std::uint64_t seed);

struct ModalityOutput {
    double score = 0.0;
    Eigen::VectorXd fused;   // feature with the score appended (m+1)
    Eigen::VectorXd logits;  // 2
};

ModalityOutput modality_forward(const Eigen::VectorXd& feature, const ModalityHead& head);
// Accumulates gradients for dL/d(logits).
void modality_backward(const Eigen::VectorXd& feature, const ModalityOutput& out, ModalityHead& head,
                       const Eigen::VectorXd& grad_logits);

struct HybridFusionParams {
    ModalityHead gait;
    ModalityHead face;

    nn::ParameterList parameters();
    nn::ConstParameterList parameters() const;
};

HybridFusionParams make_fusion_params(int gait_dim, int face_dim, std::uint64_t seed);

Eigen::VectorXd hybrid_fuse(const FeatureVector& gait, const FeatureVector& face, const HybridFusionParams& p);

// Per-dimension z-scoring fitted on training features.
struct FeatureScaler {
    Eigen::VectorXd mean;
    Eigen::VectorXd inv_std;

    static FeatureScaler identity(int dim);
    static FeatureScaler fit(std::span<const Eigen::VectorXd> features);
    Eigen::VectorXd apply(const Eigen::VectorXd& f) const;
};

struct FusionTrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 100;
    std::size_t batch_size = 16;
    bool standardize = true;
    std::uint64_t seed = 0;
};

struct FusionSample {
    FeatureVector gait;
    FeatureVector face;
    Diagnosis label = Diagnosis::pd;
};

struct FusionModel {
    HybridFusionParams params;
    FeatureScaler gait_scaler;
    FeatureScaler face_scaler;

    Eigen::VectorXd logits(const FeatureVector& gait, const FeatureVector& face,
                           double* gait_score = nullptr, double* face_score = nullptr) const;

    void save(const std::filesystem::path& path, std::uint64_t config_hash = 0) const;
    static FusionModel load(const std::filesystem::path& path);
};

struct FusionTrainResult {
    FusionModel model;
    std::vector<EpochStats> trace;
    std::uint64_t gait_checksum_before = 0, gait_checksum_after = 0;
    std::uint64_t face_checksum_before = 0, face_checksum_after = 0;
};

FusionTrainResult train_fusion(std::span<const FusionSample> samples, const FusionTrainConfig& cfg);

// Extracts features with the frozen extractors and trains only the fusion layers. Extractor
// checksums are recorded before and after.
FusionTrainResult train_fusion(const Manifest& manifest, const GaitClassifier& gait_model,
                               const FaceClassifier& face_model, const FusionTrainConfig& cfg);

// Single-modality variant of the same head, used for unimodal comparisons.
struct UnimodalModel {
    Modality modality = Modality::gait;
    ModalityHead head;
    FeatureScaler scaler;

    Eigen::VectorXd logits(const FeatureVector& f) const;
};

struct UnimodalTrainResult {
    UnimodalModel model;
    std::vector<EpochStats> trace;
};

UnimodalTrainResult train_unimodal(std::span<const FusionSample> samples, Modality modality,
                                   const FusionTrainConfig& cfg);

struct SubjectFeatures {
    FeatureVector gait;
    FeatureVector face;
};

// Throws MissingModality when either modality is absent.
SubjectFeatures extract_subject_features(const SubjectRecord& subject, const GaitClassifier& gait_model,
                                         const FaceClassifier& face_model);

struct SubjectPrediction {
    std::string subject_id;
    Diagnosis diagnosis = Diagnosis::pd;
    double pd_probability = 0.5;
    double gait_score = 0.0;
    double face_score = 0.0;
    Eigen::VectorXd logits;
};

// softmax + argmax with index 0 = PD; exact ties go to PD.
SubjectPrediction decide(const std::string& subject_id, const Eigen::VectorXd& logits);

struct DiagnosisModels {
    const GaitClassifier* gait = nullptr;
    const FaceClassifier* face = nullptr;
    const FusionModel* fusion = nullptr;
};

SubjectPrediction predict_subject(const SubjectRecord& subject, const DiagnosisModels& models);

} // namespace mmpd
