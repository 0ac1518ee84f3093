#include "mmpd/errors.hpp"
#include "mmpd/evaluation.hpp"
#include "mmpd/synthetic_bench.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace mmpd;

namespace {

std::vector<std::string> make_ids(const std::string& prefix, std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
    return ids;
}

SubjectRecord record(const std::string& id, Diagnosis label, bool gait = true, bool face = true) {
    SubjectRecord r;
    r.id = id;
    r.label = label;
    if (gait) r.gait = id + ".kp";
    if (face) r.faces.push_back({id + "_neutral.pfm", ExpressionLabel::neutral});
    return r;
}

Manifest manifest_of(std::size_t pd, std::size_t controls) {
    Manifest m;
    for (const auto& id : make_ids("pd-", pd)) m.subjects.push_back(record(id, Diagnosis::pd));
    for (const auto& id : make_ids("ctrl-", controls)) m.subjects.push_back(record(id, Diagnosis::non_pd));
    return m;
}

void check_partition(const FoldPlan& plan, const std::vector<std::string>& ids) {
    std::multiset<std::string> all;
    std::size_t lo = ids.size(), hi = 0;
    for (const auto& fold : plan.folds) {
        all.insert(fold.begin(), fold.end());
        lo = std::min(lo, fold.size());
        hi = std::max(hi, fold.size());
    }
    CHECK(all == std::multiset<std::string>(ids.begin(), ids.end()));
    CHECK(hi - lo <= 1);
    CHECK(lo >= 1);
    for (std::size_t i = 0; i < plan.k(); ++i) {
        const auto train = plan.train_ids(i);
        const auto& test = plan.test_ids(i);
        CHECK(train.size() + test.size() == ids.size());
        for (const auto& id : test) CHECK(std::find(train.begin(), train.end(), id) == train.end());
    }
}

SubjectPrediction predicted(const std::string& id, Diagnosis d) {
    SubjectPrediction p;
    p.subject_id = id;
    p.diagnosis = d;
    p.pd_probability = d == Diagnosis::pd ? 0.9 : 0.1;
    return p;
}

struct SmallExperiment {
    testutil::TempDir dir;
    Manifest manifest;
    std::vector<SubjectData> subjects;
    FaceClassifier face;
    ExperimentConfig cfg;

    SmallExperiment(const std::string& tag, Uninformative u, std::size_t per_class)
        : dir(tag), face(FaceBackboneConfig{}, 0) {
        BenchSpec spec;
        spec.pd_subjects = per_class;
        spec.control_subjects = per_class;
        spec.uninformative = u;
        spec.seed = 31;
        const auto bench = make_bench(spec);
        manifest = load_manifest(write_bench(bench, dir.path()).manifest);
        subjects = load_subject_data(manifest);
        FaceTrainOptions fopts;
        fopts.seed = 3;
        face = train_expression_classifier(bench.corpus, FaceBackboneConfig{}, fopts).model;
        cfg.gait.blocks = {{8, default_branches(8)}, {8, default_branches(8)}};
        cfg.gait.embedding_dim = 8;
        cfg.gait_training.epochs = 5;
        cfg.fusion.seed = 2;
        cfg.gait_training.seed = 4;
    }
};

} // namespace

TEST_CASE("95 subjects in 5 folds give 76 training and 19 test subjects") {
    const auto ids = make_ids("pd-", 95);
    const auto plan = kfold_split(ids, 5, 42);
    REQUIRE(plan.k() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(plan.train_ids(i).size() == 76);
        CHECK(plan.test_ids(i).size() == 19);
    }
    CHECK(plan.seed == 42);
    check_partition(plan, ids);
    CHECK_NOTHROW(plan.validate());
}

TEST_CASE("the manifest split covers PD subjects and the control split covers controls") {
    const auto m = manifest_of(95, 47);
    const auto pd = kfold_split(m, 5, 1);
    const auto ctrl = control_split(m, 5, 1);
    check_partition(pd, make_ids("pd-", 95));
    check_partition(ctrl, make_ids("ctrl-", 47));
}

TEST_CASE("fold plans are deterministic in the seed") {
    const auto ids = make_ids("s", 40);
    CHECK(kfold_split(ids, 4, 9).folds == kfold_split(ids, 4, 9).folds);
    CHECK(kfold_split(ids, 4, 9).folds != kfold_split(ids, 4, 10).folds);
}

TEST_CASE("fold plans partition random manifests") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 150)(rng);
        const std::size_t k = std::uniform_int_distribution<std::size_t>(2, std::min<std::size_t>(n, 10))(rng);
        auto ids = make_ids("x", n);
        std::shuffle(ids.begin(), ids.end(), rng);
        const auto plan = kfold_split(ids, k, rng());
        CHECK(plan.k() == k);
        check_partition(plan, ids);
    }
}

TEST_CASE("invalid fold requests are rejected") {
    const std::vector<std::string> dup{"a", "b", "a", "c"};
    try {
        kfold_split(dup, 2, 0);
        FAIL("expected a duplicate error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("'a'") != std::string::npos);
    }
    CHECK_THROWS_AS(kfold_split(make_ids("x", 3), 4, 0), DataError);
    CHECK_THROWS_AS(kfold_split(make_ids("x", 3), 1, 0), DataError);
    FoldPlan bad;
    bad.folds = {{"a", "b", "c"}, {"d"}};
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad.folds = {{"a"}, {"a"}};
    CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("19 PD plus 47 controls give a 66-subject test set") {
    const auto m = manifest_of(95, 47);
    const auto plan = kfold_split(m, 5, 3);
    Manifest fold;
    for (const auto& id : plan.test_ids(0)) fold.subjects.push_back(m.find(id));
    std::vector<SubjectRecord> controls;
    for (const auto& s : m.subjects)
        if (s.label == Diagnosis::non_pd) controls.push_back(s);
    const auto test = augment_test_controls(fold, controls);
    CHECK(test.manifest.subjects.size() == 66);
    CHECK(test.composition.pd == 19);
    CHECK(test.composition.non_pd == 47);
    CHECK(test.composition.total() == 66);

    const auto same = augment_test_controls(fold, std::vector<SubjectRecord>{});
    REQUIRE(same.manifest.subjects.size() == fold.subjects.size());
    for (std::size_t i = 0; i < fold.subjects.size(); ++i) CHECK(same.manifest.subjects[i].id == fold.subjects[i].id);
    CHECK(same.composition.non_pd == 0);
}

TEST_CASE("controls lacking a modality or labeled PD are rejected by id") {
    Manifest fold = manifest_of(2, 0);
    const std::vector<SubjectRecord> no_gait{record("ctrl-x", Diagnosis::non_pd, false, true)};
    try {
        augment_test_controls(fold, no_gait);
        FAIL("expected a missing-modality error");
    } catch (const MissingModality& e) {
        CHECK(e.subject_id() == "ctrl-x");
    }
    const std::vector<SubjectRecord> no_face{record("ctrl-y", Diagnosis::non_pd, true, false)};
    CHECK_THROWS_AS(augment_test_controls(fold, no_face), MissingModality);
    const std::vector<SubjectRecord> mislabeled{record("ctrl-z", Diagnosis::pd)};
    try {
        augment_test_controls(fold, mislabeled);
        FAIL("expected a data error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("ctrl-z") != std::string::npos);
    }
}

TEST_CASE("scoring counts confusions and accuracy") {
    const std::vector<Diagnosis> truth{Diagnosis::pd, Diagnosis::pd, Diagnosis::pd, Diagnosis::non_pd, Diagnosis::non_pd};
    const std::vector<SubjectPrediction> perfect{predicted("a", Diagnosis::pd), predicted("b", Diagnosis::pd),
                                                 predicted("c", Diagnosis::pd), predicted("d", Diagnosis::non_pd),
                                                 predicted("e", Diagnosis::non_pd)};
    const auto r = score(truth, perfect);
    CHECK(r.accuracy == 1.0);
    CHECK(r.per_class_accuracy[0] == 1.0);
    CHECK(r.per_class_accuracy[1] == 1.0);

    auto mixed = perfect;
    mixed[1].diagnosis = Diagnosis::non_pd;
    mixed[4].diagnosis = Diagnosis::pd;
    const auto m = score(truth, mixed);
    CHECK(m.confusion[0][0] == 2);
    CHECK(m.confusion[0][1] == 1);
    CHECK(m.confusion[1][0] == 1);
    CHECK(m.confusion[1][1] == 1);
    CHECK(m.accuracy == 3.0 / 5.0);
    CHECK(m.per_class_accuracy[0] == 2.0 / 3.0);
    CHECK(m.per_class_accuracy[1] == 0.5);
    CHECK(m.evaluated == 5);

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 60)(rng);
        std::vector<Diagnosis> t;
        std::vector<SubjectPrediction> p;
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            t.push_back(rng() % 2 ? Diagnosis::pd : Diagnosis::non_pd);
            p.push_back(predicted("s", rng() % 2 ? Diagnosis::pd : Diagnosis::non_pd));
            hits += t.back() == p.back().diagnosis;
        }
        const auto s = score(t, p);
        std::size_t sum = 0;
        for (const auto& row : s.confusion) sum += row[0] + row[1];
        CHECK(sum == n);
        CHECK(s.accuracy == static_cast<double>(hits) / static_cast<double>(n));
        CHECK(s.accuracy >= 0.0);
        CHECK(s.accuracy <= 1.0);
    }
    CHECK_THROWS_AS(score(truth, std::span(perfect).first(2)), ShapeError);
}

TEST_CASE("metrics serialise missing classes as null") {
    const std::vector<Diagnosis> truth{Diagnosis::pd};
    const std::vector<SubjectPrediction> preds{predicted("a", Diagnosis::pd)};
    const auto j = score(truth, preds).to_json();
    CHECK(j.at("accuracy").get<double>() == 1.0);
    CHECK(j.dump().find("null") != std::string::npos);
}

TEST_CASE("fold averaging takes the mean of per-fold accuracies") {
    const std::vector<Diagnosis> t2{Diagnosis::pd, Diagnosis::non_pd};
    const auto a = score(t2, std::vector{predicted("a", Diagnosis::pd), predicted("b", Diagnosis::non_pd)});
    const auto b = score(t2, std::vector{predicted("a", Diagnosis::pd), predicted("b", Diagnosis::pd)});
    const auto avg = average_folds({a, b});
    CHECK(avg.folds.size() == 2);
    CHECK(avg.mean_accuracy == doctest::Approx(0.75));
    CHECK(avg.mean_per_class_accuracy[0] == doctest::Approx(1.0));
    CHECK(avg.mean_per_class_accuracy[1] == doctest::Approx(0.5));
}

TEST_CASE("evaluate aborts on a failed subject unless failures are excluded") {
    testutil::TempDir dir("eval-failure");
    BenchSpec spec;
    spec.pd_subjects = 3;
    spec.control_subjects = 3;
    spec.frames = 64;
    spec.corpus_per_expression = 2;
    spec.seed = 8;
    auto manifest = load_manifest(write_bench(make_bench(spec), dir.path()).manifest);

    GaitModelConfig gcfg;
    gcfg.blocks = {{8, default_branches(8)}};
    gcfg.embedding_dim = 4;
    const GaitClassifier gait(gcfg, 1);
    const FaceClassifier face(FaceBackboneConfig{}, 2);
    FusionTrainConfig fcfg;
    fcfg.epochs = 3;
    const auto fusion = train_fusion(manifest, gait, face, fcfg).model;
    const DiagnosisModels models{&gait, &face, &fusion};

    const auto clean = evaluate(models, manifest);
    CHECK(clean.evaluated == 6);
    CHECK(clean.failures.empty());
    CHECK(evaluate(models, manifest).to_json() == clean.to_json());

    manifest.subjects[1].gait = dir.path() / "does-not-exist.kp";
    CHECK_THROWS_AS(evaluate(models, manifest), Error);
    EvaluateOptions opts;
    opts.exclude_failures = true;
    const auto partial = evaluate(models, manifest, opts);
    CHECK(partial.evaluated == 5);
    REQUIRE(partial.failures.size() == 1);
    CHECK(partial.failures[0].subject_id == manifest.subjects[1].id);
    CHECK(partial.predictions.size() == 5);
    CHECK_THROWS_AS(evaluate(models, Manifest{}), DataError);
}

TEST_CASE("comparison report has three rows, echoes seeds and ignores the worker count") {
    SmallExperiment ex("eval-compare", Uninformative::none, 12);
    const auto pd_plan = kfold_split(ex.manifest, 3, 5);
    const auto ctrl_plan = control_split(ex.manifest, 3, 6);
    ex.cfg.workers = 1;
    const auto one = compare_unimodal(ex.subjects, pd_plan, ctrl_plan, ex.face, ex.cfg);
    ex.cfg.workers = 2;
    const auto two = compare_unimodal(ex.subjects, pd_plan, ctrl_plan, ex.face, ex.cfg);

    REQUIRE(one.rows.size() == 3);
    CHECK(one.rows[0].model == "gait-only");
    CHECK(one.rows[1].model == "face-only");
    CHECK(one.rows[2].model == "fusion");
    CHECK(one.pd_seed == 5);
    CHECK(one.control_seed == 6);
    CHECK(one.k == 3);
    REQUIRE(one.compositions.size() == 3);
    for (const auto& c : one.compositions) {
        CHECK(c.pd == 4);
        CHECK(c.non_pd == 4);
    }
    for (const auto& row : one.rows) {
        CHECK(row.metrics.folds.size() == 3);
        CHECK(row.metrics.mean_accuracy >= 0.0);
        CHECK(row.metrics.mean_accuracy <= 1.0);
    }
    CHECK(one.to_json().dump() == two.to_json().dump());
    const auto table = one.table();
    for (const char* s : {"gait-only", "face-only", "fusion", "Mean Acc."}) CHECK(table.find(s) != std::string::npos);

    FoldPlan mismatched = kfold_split(ex.manifest, 2, 5);
    CHECK_THROWS_AS(compare_unimodal(ex.subjects, mismatched, ctrl_plan, ex.face, ex.cfg), DataError);
}

TEST_CASE("fusion stays close to gait when the face modality carries no label signal") {
    SmallExperiment ex("eval-uninformative", Uninformative::face, 30);
    const auto pd_plan = kfold_split(ex.manifest, 3, 7);
    const auto ctrl_plan = control_split(ex.manifest, 3, 7);
    const auto report = compare_unimodal(ex.subjects, pd_plan, ctrl_plan, ex.face, ex.cfg);
    const double gait = report.rows[0].metrics.mean_accuracy;
    const double fusion = report.rows[2].metrics.mean_accuracy;
    MESSAGE("gait " << gait << " face " << report.rows[1].metrics.mean_accuracy << " fusion " << fusion);
    CHECK(gait >= 0.9);
    CHECK(fusion >= gait - 0.05);
}
