#pragma once

// Subject-level k-fold protocol: PD subjects are split into k folds, each test fold is
// augmented with non-PD control subjects, and gait-only, face-only and fused models are
// compared under the same plan.

#include "mmpd/common.hpp"
#include "mmpd/face_features.hpp"
#include "mmpd/fusion.hpp"
#include "mmpd/gait_classifier.hpp"
#include "mmpd/manifest.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmpd {

struct FoldPlan {
    std::uint64_t seed = 0;
    std::vector<std::vector<std::string>> folds;

    std::size_t k() const { return folds.size(); }
    // Disjoint, non-empty folds whose sizes differ by at most one.
    void validate() const;
    std::vector<std::string> train_ids(std::size_t fold) const;
    const std::vector<std::string>& test_ids(std::size_t fold) const;
};

// Deterministic shuffled partition of the given ids. Throws DataError on duplicates or
// fewer ids than folds.
FoldPlan kfold_split(std::span<const std::string> ids, std::size_t k, std::uint64_t seed);
// Splits the manifest's PD subjects.
FoldPlan kfold_split(const Manifest& manifest, std::size_t k = 5, std::uint64_t seed = 0);
// Splits the manifest's non-PD subjects with the same k; fold i of these controls joins
// training for the other folds and test fold i.
FoldPlan control_split(const Manifest& manifest, std::size_t k = 5, std::uint64_t seed = 0);

struct TestComposition {
    std::size_t pd = 0;
    std::size_t non_pd = 0;
    std::size_t total() const { return pd + non_pd; }
};

struct TestSet {
    Manifest manifest;
    TestComposition composition;
};

// Union of a PD test fold and control records. Controls must be non-PD with both
// modalities; violations throw DataError / MissingModality naming the subject.
TestSet augment_test_controls(const Manifest& test_fold, std::span<const SubjectRecord> controls);

struct SubjectFailure {
    std::string subject_id;
    std::string message;
};

struct MetricsReport {
    double accuracy = 0.0;
    std::array<double, 2> per_class_accuracy{};          // indexed by class_index
    std::array<std::array<std::size_t, 2>, 2> confusion{};  // [truth][prediction]
    std::size_t evaluated = 0;
    std::vector<SubjectPrediction> predictions;
    std::vector<SubjectFailure> failures;

    nlohmann::json to_json() const;
};

// Builds the report from (truth, prediction) pairs.
MetricsReport score(std::span<const Diagnosis> truth, std::span<const SubjectPrediction> predictions);

struct EvaluateOptions {
    // When false any failed subject aborts; when true it is recorded and left out of the metrics.
    bool exclude_failures = false;
};

MetricsReport evaluate(const DiagnosisModels& models, const Manifest& test, const EvaluateOptions& opts = {});

struct FoldedMetrics {
    std::vector<MetricsReport> folds;
    double mean_accuracy = 0.0;
    std::array<double, 2> mean_per_class_accuracy{};
};

FoldedMetrics average_folds(std::vector<MetricsReport> folds);

// Loaded inputs for one subject, shared by all folds.
struct SubjectData {
    SubjectRecord record;
    SkeletonSequence gait;
    std::vector<ImageTensor> faces;
};

// Throws MissingModality for subjects lacking a modality.
std::vector<SubjectData> load_subject_data(const Manifest& manifest);

struct ExperimentConfig {
    GaitModelConfig gait = GaitModelConfig::defaults();
    GaitTrainOptions gait_training;
    FusionTrainConfig fusion;
    std::size_t workers = 1;
};

struct ComparisonRow {
    std::string model;  // gait-only, face-only, fusion
    FoldedMetrics metrics;
};

struct ComparisonReport {
    std::uint64_t pd_seed = 0;
    std::uint64_t control_seed = 0;
    std::size_t k = 0;
    std::vector<TestComposition> compositions;  // per fold
    std::vector<ComparisonRow> rows;

    // Model | Fold accuracies | Mean Acc. | PD Acc. | non-PD Acc.
    std::string table() const;
    nlohmann::json to_json() const;
};

// Per fold: trains the gait classifier on the fold's training subjects, extracts frozen
// gait and face features, trains the gait-only head, face-only head and fusion head, and
// scores all three on the PD test fold plus its controls. Folds run on `workers` threads;
// results do not depend on the worker count.
ComparisonReport compare_unimodal(std::span<const SubjectData> subjects, const FoldPlan& pd_plan,
                                  const FoldPlan& control_plan, const FaceClassifier& face_model,
                                  const ExperimentConfig& cfg);
ComparisonReport compare_unimodal(const Manifest& manifest, const FoldPlan& pd_plan, const FoldPlan& control_plan,
                                  const FaceClassifier& face_model, const ExperimentConfig& cfg);

} // namespace mmpd
