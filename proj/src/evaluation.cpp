#include "mmpd/evaluation.hpp"

#include "mmpd/artifact_io.hpp"
#include "mmpd/errors.hpp"
#include "mmpd/nn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <thread>

namespace mmpd {

void FoldPlan::validate() const {
    if (folds.size() < 2) throw DataError("a fold plan needs at least two folds");
    std::set<std::string> seen;
    std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0;
    for (const auto& f : folds) {
        lo = std::min(lo, f.size());
        hi = std::max(hi, f.size());
        for (const auto& id : f)
            if (!seen.insert(id).second) throw DataError("subject '" + id + "' appears in more than one fold");
    }
    if (lo == 0) throw DataError("fold plan contains an empty fold");
    if (hi - lo > 1) throw DataError("fold sizes differ by more than one");
}

std::vector<std::string> FoldPlan::train_ids(std::size_t fold) const {
    if (fold >= folds.size()) throw DataError("fold index out of range");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < folds.size(); ++i)
        if (i != fold) out.insert(out.end(), folds[i].begin(), folds[i].end());
    return out;
}

const std::vector<std::string>& FoldPlan::test_ids(std::size_t fold) const {
    if (fold >= folds.size()) throw DataError("fold index out of range");
    return folds[fold];
}

FoldPlan kfold_split(std::span<const std::string> ids, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw DataError("k must be at least 2");
    if (ids.size() < k)
        throw DataError("cannot split " + std::to_string(ids.size()) + " subjects into " + std::to_string(k) + " folds");
    std::set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second) throw DataError("duplicate subject id '" + id + "'");
    std::vector<std::string> order(ids.begin(), ids.end());
    std::mt19937_64 rng(nn::derive_seed(seed, "kfold"));
    std::shuffle(order.begin(), order.end(), rng);
    FoldPlan plan;
    plan.seed = seed;
    plan.folds.resize(k);
    for (std::size_t i = 0; i < order.size(); ++i) plan.folds[i % k].push_back(order[i]);
    return plan;
}

namespace {

FoldPlan split_by_label(const Manifest& manifest, Diagnosis label, std::size_t k, std::uint64_t seed) {
    manifest.validate();
    std::vector<std::string> ids;
    for (const auto& s : manifest.subjects)
        if (s.label == label) ids.push_back(s.id);
    return kfold_split(ids, k, seed);
}

} // namespace

FoldPlan kfold_split(const Manifest& manifest, std::size_t k, std::uint64_t seed) {
    return split_by_label(manifest, Diagnosis::pd, k, seed);
}

FoldPlan control_split(const Manifest& manifest, std::size_t k, std::uint64_t seed) {
    return split_by_label(manifest, Diagnosis::non_pd, k, seed);
}

TestSet augment_test_controls(const Manifest& test_fold, std::span<const SubjectRecord> controls) {
    TestSet out;
    out.manifest = test_fold;
    for (const auto& c : controls) {
        if (c.label != Diagnosis::non_pd) throw DataError("control subject '" + c.id + "' is not labeled non-PD");
        if (!c.has_gait()) throw MissingModality(c.id, "gait");
        if (!c.has_face()) throw MissingModality(c.id, "face");
        out.manifest.subjects.push_back(c);
    }
    out.manifest.validate();
    out.composition.pd = out.manifest.count(Diagnosis::pd);
    out.composition.non_pd = out.manifest.count(Diagnosis::non_pd);
    return out;
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

} // namespace

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["accuracy"] = number_or_null(accuracy);
    j["per_class_accuracy"] = {{"PD", number_or_null(per_class_accuracy[0])},
                               {"non-PD", number_or_null(per_class_accuracy[1])}};
    j["confusion"] = {{"PD", {{"PD", confusion[0][0]}, {"non-PD", confusion[0][1]}}},
                      {"non-PD", {{"PD", confusion[1][0]}, {"non-PD", confusion[1][1]}}}};
    j["evaluated"] = evaluated;
    j["predictions"] = nlohmann::json::array();
    for (const auto& p : predictions)
        j["predictions"].push_back({{"id", p.subject_id},
                                    {"diagnosis", std::string(to_string(p.diagnosis))},
                                    {"pd_probability", p.pd_probability}});
    j["failures"] = nlohmann::json::array();
    for (const auto& f : failures) j["failures"].push_back({{"id", f.subject_id}, {"error", f.message}});
    return j;
}

MetricsReport score(std::span<const Diagnosis> truth, std::span<const SubjectPrediction> predictions) {
    if (truth.size() != predictions.size()) throw ShapeError("truth and prediction counts differ");
    MetricsReport r;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = class_index(truth[i]), p = class_index(predictions[i].diagnosis);
        ++r.confusion[t][p];
        correct += t == p ? 1 : 0;
    }
    r.evaluated = truth.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.accuracy = r.evaluated ? static_cast<double>(correct) / static_cast<double>(r.evaluated) : nan;
    for (int c = 0; c < 2; ++c) {
        const auto n = r.confusion[c][0] + r.confusion[c][1];
        r.per_class_accuracy[c] = n ? static_cast<double>(r.confusion[c][c]) / static_cast<double>(n) : nan;
    }
    r.predictions.assign(predictions.begin(), predictions.end());
    return r;
}

MetricsReport evaluate(const DiagnosisModels& models, const Manifest& test, const EvaluateOptions& opts) {
    if (test.subjects.empty()) throw DataError("test manifest is empty");
    test.validate();
    std::vector<Diagnosis> truth;
    std::vector<SubjectPrediction> preds;
    std::vector<SubjectFailure> failures;
    for (const auto& s : test.subjects) {
        try {
            preds.push_back(predict_subject(s, models));
            truth.push_back(s.label);
        } catch (const Error& e) {
            if (!opts.exclude_failures) throw Error("prediction failed for subject '" + s.id + "': " + e.what());
            failures.push_back({s.id, e.what()});
        }
    }
    auto r = score(truth, preds);
    r.failures = std::move(failures);
    return r;
}

FoldedMetrics average_folds(std::vector<MetricsReport> folds) {
    FoldedMetrics out;
    out.folds = std::move(folds);
    auto mean = [&](auto get) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& f : out.folds)
            if (const double v = get(f); std::isfinite(v)) {
                sum += v;
                ++n;
            }
        return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
    };
    out.mean_accuracy = mean([](const MetricsReport& r) { return r.accuracy; });
    for (int c = 0; c < 2; ++c)
        out.mean_per_class_accuracy[c] = mean([c](const MetricsReport& r) { return r.per_class_accuracy[c]; });
    return out;
}

std::vector<SubjectData> load_subject_data(const Manifest& manifest) {
    manifest.validate();
    std::vector<SubjectData> out;
    out.reserve(manifest.subjects.size());
    for (const auto& s : manifest.subjects) {
        if (!s.has_gait()) throw MissingModality(s.id, "gait");
        if (!s.has_face()) throw MissingModality(s.id, "face");
        SubjectData d{s, load_keypoints(s.gait), {}};
        for (const auto& f : s.faces) d.faces.push_back(io::read_image(f.path));
        out.push_back(std::move(d));
    }
    return out;
}

std::string ComparisonReport::table() const {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-12s  %-*s  %9s  %8s  %11s\n", "Model", static_cast<int>(8 * k), "Fold Acc.",
                  "Mean Acc.", "PD Acc.", "non-PD Acc.");
    out += buf;
    for (const auto& row : rows) {
        std::string folds;
        for (const auto& f : row.metrics.folds) {
            std::snprintf(buf, sizeof buf, "%-8.4f", f.accuracy);
            folds += buf;
        }
        std::snprintf(buf, sizeof buf, "%-12s  %-*s  %9.4f  %8.4f  %11.4f\n", row.model.c_str(),
                      static_cast<int>(8 * k), folds.c_str(), row.metrics.mean_accuracy,
                      row.metrics.mean_per_class_accuracy[0], row.metrics.mean_per_class_accuracy[1]);
        out += buf;
    }
    return out;
}

nlohmann::json ComparisonReport::to_json() const {
    nlohmann::json j;
    j["pd_seed"] = pd_seed;
    j["control_seed"] = control_seed;
    j["k"] = k;
    j["compositions"] = nlohmann::json::array();
    for (const auto& c : compositions) j["compositions"].push_back({{"PD", c.pd}, {"non-PD", c.non_pd}, {"total", c.total()}});
    j["rows"] = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json r;
        r["model"] = row.model;
        r["mean_accuracy"] = number_or_null(row.metrics.mean_accuracy);
        r["mean_per_class_accuracy"] = {{"PD", number_or_null(row.metrics.mean_per_class_accuracy[0])},
                                        {"non-PD", number_or_null(row.metrics.mean_per_class_accuracy[1])}};
        r["folds"] = nlohmann::json::array();
        for (const auto& f : row.metrics.folds) r["folds"].push_back(f.to_json());
        j["rows"].push_back(std::move(r));
    }
    return j;
}

namespace {

struct FoldOutcome {
    TestComposition composition;
    std::array<MetricsReport, 3> metrics;  // gait-only, face-only, fusion
};

FoldOutcome run_fold(std::size_t fold, std::span<const SubjectData> subjects,
                     const std::map<std::string, std::size_t>& index, const std::vector<FeatureVector>& face_features,
                     const FoldPlan& pd_plan, const FoldPlan& control_plan, const ExperimentConfig& cfg) {
    auto lookup = [&](const std::string& id) {
        const auto it = index.find(id);
        if (it == index.end()) throw DataError("fold plan references unknown subject '" + id + "'");
        return it->second;
    };
    std::vector<std::size_t> train, test;
    for (const auto* plan : {&pd_plan, &control_plan})
        for (const auto& id : plan->train_ids(fold)) train.push_back(lookup(id));

    Manifest pd_test;
    std::vector<SubjectRecord> controls;
    for (const auto& id : pd_plan.test_ids(fold)) pd_test.subjects.push_back(subjects[lookup(id)].record);
    for (const auto& id : control_plan.test_ids(fold)) controls.push_back(subjects[lookup(id)].record);
    const auto test_set = augment_test_controls(pd_test, controls);
    for (const auto& s : test_set.manifest.subjects) test.push_back(lookup(s.id));

    std::vector<GaitSample> gait_train;
    for (auto i : train) gait_train.push_back({subjects[i].gait, subjects[i].record.label});
    GaitTrainOptions gopts = cfg.gait_training;
    gopts.seed = nn::derive_seed(cfg.gait_training.seed, "gait-fold-" + std::to_string(fold));
    const auto gait = train_gait_classifier(gait_train, cfg.gait, gopts);

    auto sample = [&](std::size_t i) {
        return FusionSample{gait.model.features(subjects[i].gait), face_features[i], subjects[i].record.label};
    };
    std::vector<FusionSample> train_samples, test_samples;
    for (auto i : train) train_samples.push_back(sample(i));
    for (auto i : test) test_samples.push_back(sample(i));

    FusionTrainConfig fcfg = cfg.fusion;
    fcfg.seed = nn::derive_seed(cfg.fusion.seed, "fusion-fold-" + std::to_string(fold));
    const auto gait_only = train_unimodal(train_samples, Modality::gait, fcfg).model;
    const auto face_only = train_unimodal(train_samples, Modality::face, fcfg).model;
    const auto fused = train_fusion(train_samples, fcfg).model;

    std::vector<Diagnosis> truth;
    std::array<std::vector<SubjectPrediction>, 3> preds;
    for (std::size_t n = 0; n < test.size(); ++n) {
        const auto& s = test_samples[n];
        const auto& id = subjects[test[n]].record.id;
        truth.push_back(s.label);
        preds[0].push_back(decide(id, gait_only.logits(s.gait)));
        preds[1].push_back(decide(id, face_only.logits(s.face)));
        double gs = 0.0, fs = 0.0;
        auto p = decide(id, fused.logits(s.gait, s.face, &gs, &fs));
        p.gait_score = gs;
        p.face_score = fs;
        preds[2].push_back(std::move(p));
    }
    FoldOutcome out;
    out.composition = test_set.composition;
    for (int m = 0; m < 3; ++m) out.metrics[m] = score(truth, preds[m]);
    return out;
}

} // namespace

ComparisonReport compare_unimodal(std::span<const SubjectData> subjects, const FoldPlan& pd_plan,
                                  const FoldPlan& control_plan, const FaceClassifier& face_model,
                                  const ExperimentConfig& cfg) {
    pd_plan.validate();
    control_plan.validate();
    if (pd_plan.k() != control_plan.k()) throw DataError("PD and control fold plans must have the same k");
    cfg.gait.validate();

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < subjects.size(); ++i)
        if (!index.emplace(subjects[i].record.id, i).second)
            throw DataError("duplicate subject id '" + subjects[i].record.id + "'");
    std::vector<FeatureVector> face_features;
    face_features.reserve(subjects.size());
    for (const auto& s : subjects) {
        if (s.faces.empty()) throw MissingModality(s.record.id, "face");
        face_features.push_back(extract_face_features(s.faces, face_model));
    }

    const std::size_t k = pd_plan.k();
    std::vector<FoldOutcome> outcomes(k);
    std::vector<std::exception_ptr> errors(k);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t f = next++; f < k; f = next++) {
            try {
                outcomes[f] = run_fold(f, subjects, index, face_features, pd_plan, control_plan, cfg);
            } catch (...) {
                errors[f] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(cfg.workers, 1, k);
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    ComparisonReport report;
    report.pd_seed = pd_plan.seed;
    report.control_seed = control_plan.seed;
    report.k = k;
    const std::array<const char*, 3> names{"gait-only", "face-only", "fusion"};
    for (int m = 0; m < 3; ++m) {
        std::vector<MetricsReport> folds;
        for (auto& o : outcomes) folds.push_back(o.metrics[m]);
        report.rows.push_back({names[m], average_folds(std::move(folds))});
    }
    for (const auto& o : outcomes) report.compositions.push_back(o.composition);
    return report;
}

ComparisonReport compare_unimodal(const Manifest& manifest, const FoldPlan& pd_plan, const FoldPlan& control_plan,
                                  const FaceClassifier& face_model, const ExperimentConfig& cfg) {
    const auto data = load_subject_data(manifest);
    return compare_unimodal(data, pd_plan, control_plan, face_model, cfg);
}

} // namespace mmpd
