// Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any criterion fails.
// Usage: acceptance <path-to-mmpd-cli> [criterion numbers...]

#include "mmpd/direction_discovery.hpp"
#include "mmpd/errors.hpp"
#include "mmpd/evaluation.hpp"
#include "mmpd/fusion.hpp"
#include "mmpd/gait_network.hpp"
#include "mmpd/latent_editing.hpp"
#include "mmpd/nn.hpp"
#include "mmpd/synthetic_bench.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

using namespace mmpd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_scratch;

struct Verdict {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        notes.push_back(std::string(ok ? "" : "FAILED ") + what);
    }
    void note(const std::string& what) { notes.push_back(what); }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sigma = 1.0) {
    std::normal_distribution<double> nd(0.0, sigma);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = nd(rng);
    return m;
}

double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

struct FdResult {
    double worst = 0.0;
    int kinks = 0;
};

// Central differences per parameter block. Coordinates whose one-sided slopes disagree straddle a
// ReLU or max-pool switch and are excluded and counted.
FdResult fd_check(const nn::ParameterList& params, const std::function<double()>& loss, double h = 1e-6) {
    FdResult r;
    const double f0 = loss();
    for (auto* p : params) {
        Eigen::MatrixXd numeric(p->value.rows(), p->value.cols());
        Eigen::MatrixXd analytic = p->grad;
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            const double keep = p->value(i);
            p->value(i) = keep + h;
            const double up = loss();
            p->value(i) = keep - h;
            const double down = loss();
            p->value(i) = keep;
            const double fwd = (up - f0) / h, bwd = (f0 - down) / h;
            numeric(i) = (up - down) / (2.0 * h);
            if (std::abs(fwd - bwd) > 1e-3 * std::max(1.0, std::abs(numeric(i)))) {
                ++r.kinks;
                numeric(i) = analytic(i) = 0.0;
            }
        }
        r.worst = std::max(r.worst, rel_error(analytic, numeric));
    }
    return r;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = "\"" + g_cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

SubjectRecord record(const std::string& id, Diagnosis label) {
    SubjectRecord r;
    r.id = id;
    r.label = label;
    r.gait = id + ".kp";
    r.faces.push_back({id + "_neutral.pfm", ExpressionLabel::neutral});
    return r;
}

// 1 ------------------------------------------------------------------------------------------
Verdict protocol_fidelity() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    Manifest m;
    for (int i = 0; i < 95; ++i) m.subjects.push_back(record("pd-" + std::to_string(i), Diagnosis::pd));
    std::vector<SubjectRecord> controls;
    for (int i = 0; i < 47; ++i) controls.push_back(record("ctrl-" + std::to_string(i), Diagnosis::non_pd));

    const auto plan = kfold_split(m, 5, 2024);
    v.require(plan.k() == 5, "5 folds");
    bool sizes = true, totals = true;
    std::set<std::string> tested;
    for (std::size_t i = 0; i < plan.k(); ++i) {
        sizes = sizes && plan.train_ids(i).size() == 76 && plan.test_ids(i).size() == 19;
        tested.insert(plan.test_ids(i).begin(), plan.test_ids(i).end());
        Manifest fold;
        for (const auto& id : plan.test_ids(i)) fold.subjects.push_back(m.find(id));
        const auto test = augment_test_controls(fold, controls);
        totals = totals && test.manifest.subjects.size() == 66 && test.composition.pd == 19 &&
                 test.composition.non_pd == 47;
    }
    v.require(sizes, "every fold trains on 76 and tests 19 PD subjects");
    v.require(tested.size() == 95, "each PD subject tested exactly once");
    v.require(totals, "19 PD + 47 controls = 66 test subjects per fold");
    const double t = seconds_since(t0);
    v.require(t < 1.0, "time " + fmt("%.4f", t) + " s < 1 s");
    return v;
}

// 2 ------------------------------------------------------------------------------------------
Verdict direction_oracle() {
    Verdict v;
    const Eigen::Index d = 64;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto t0 = std::chrono::steady_clock::now();
        std::mt19937_64 rng(seed);
        const Eigen::VectorXd mu_a = Eigen::VectorXd::Zero(d);
        const Eigen::VectorXd mu_b = 2.0 * gaussian(d, 1, rng).col(0).normalized();
        const auto clusters = sample_latent_clusters(mu_a, mu_b, 0.3, 200, seed);
        const Eigen::VectorXd oracle = (mu_b - mu_a).normalized();

        FitOptions opts;
        opts.mode = FitMode::standard;
        opts.seed = seed;
        const auto dir = fit_direction(clusters.set, opts);
        const double cosine = dir.values.dot(oracle);
        const double t = seconds_since(t0);
        v.require(cosine >= 0.95 && t < 10.0,
                  "seed " + std::to_string(seed) + " standard cosine " + fmt("%.4f", cosine) + " (" + fmt("%.2f", t) + " s)");

        FitOptions faithful = opts;
        faithful.mode = FitMode::paper_faithful;
        const auto state = fit_logistic(clusters.set, faithful);
        bool finite = std::isfinite(state.initial_loss), monotone = true;
        double prev = state.initial_loss;
        for (double l : state.loss_history) {
            finite = finite && std::isfinite(l);
            monotone = monotone && l <= prev;
            prev = l;
        }
        const auto fdir = fit_direction(clusters.set, faithful);
        v.require(finite && monotone, "seed " + std::to_string(seed) + " paper_faithful loss finite and non-increasing over " +
                                          std::to_string(state.epochs) + " epochs (converged " +
                                          (state.converged ? "yes" : "no") + ", final " +
                                          fmt("%.3e", state.loss_history.back()) + ", cosine " +
                                          fmt("%.4f", fdir.values.dot(oracle)) + ")");
    }
    return v;
}

// 3 ------------------------------------------------------------------------------------------
Verdict inversion_oracle() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    const ToyGenerator g({64, {32, 32, 1}, 0.5, 7});
    InversionConfig cfg;
    cfg.init = InitMode::zeros;
    const ConvPerceptualExtractor px({32, 32, 1}, cfg.perceptual_weights, nn::derive_seed(0, "perceptual"), {4, 4, 8, 8});
    std::mt19937_64 rng(8);
    const LatentVector truth(gaussian(64, 1, rng).col(0));
    const auto target = g.forward(truth);
    const auto result = invert(target, g, px, cfg);
    const double mse = pixel_mse(g.forward(result.latent), target);
    const double dist = (result.latent.values() - g.oracle_inverse(target).values()).norm();
    const double t = seconds_since(t0);
    v.require(mse <= 1e-4, "reconstruction MSE " + fmt("%.3e", mse) + " <= 1e-4");
    v.require(dist <= 1e-2, "latent distance to pseudoinverse " + fmt("%.3e", dist) + " <= 1e-2");
    v.require(t < 30.0, "time " + fmt("%.2f", t) + " s < 30 s (" + std::to_string(result.iterations) + " iterations)");
    return v;
}

// 4 ------------------------------------------------------------------------------------------
Verdict edit_monotonicity() {
    Verdict v;
    const std::size_t d = 64;
    const ToyGenerator g({d, {32, 32, 1}, 0.5, 11});
    std::mt19937_64 rng(12);
    const double sigma = 0.3, scale = 3.5;
    const std::vector<double> lambdas{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0};

    for (int e = 0; e < 6; ++e) {
        DirectionVector dir;
        dir.values = gaussian(d, 1, rng).col(0).normalized();
        dir.source = "neutral";
        dir.target = "expression-" + std::to_string(e);

        // probe: logistic regression on pixels, neutral cluster vs target cluster
        LabeledLatentSet train;
        for (int i = 0; i < 200; ++i) {
            const Eigen::VectorXd za = gaussian(d, 1, rng, sigma).col(0);
            const Eigen::VectorXd zb = scale * dir.values + gaussian(d, 1, rng, sigma).col(0);
            train.a.emplace_back(g.forward(LatentVector(za)).pixels());
            train.b.emplace_back(g.forward(LatentVector(zb)).pixels());
        }
        FitOptions popts;
        popts.mode = FitMode::standard;
        popts.learning_rate = 0.5;
        popts.max_epochs = 500;
        popts.l2 = 1e-4;
        popts.seed = static_cast<std::uint64_t>(e);
        const auto probe = fit_logistic(train, popts);

        int monotone = 0;
        for (int b = 0; b < 100; ++b) {
            const LatentVector base(gaussian(d, 1, rng, sigma).col(0));
            double prev = -1.0;
            bool ok = true;
            for (double lam : lambdas) {
                const LatentVector edited(synthesize(base, dir, lam, g).pixels());
                const double p = predict_prob(edited, 0, probe);  // sigma(a.x + b): probability of the target
                ok = ok && p >= prev;
                prev = p;
            }
            monotone += ok;
        }
        v.require(monotone >= 95, "direction " + std::to_string(e) + ": " + std::to_string(monotone) +
                                      "/100 bases non-decreasing");
    }
    return v;
}

// 5 ------------------------------------------------------------------------------------------
Verdict gradient_correctness() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(21);
    for (auto strategy : {PartitionStrategy::uniform, PartitionStrategy::distance, PartitionStrategy::spatial})
        for (auto act : {nn::Activation::tanh, nn::Activation::relu}) {
            GaitModelConfig cfg;
            cfg.blocks = {{8, default_branches(8)}, {8, default_branches(8)}};
            cfg.blocks[0].branches = {{BranchKind::conv, 4, 3, 1}, {BranchKind::max_pool, 4, 3, 1}};
            cfg.embedding_dim = 6;
            cfg.partition = strategy;
            cfg.activation = act;
            const auto graph = build_adjacency(strategy);
            auto params = init_gait_params(cfg, graph.partition_count(), rng());
            const Eigen::MatrixXd window = gaussian(6 * kJointCount, 3, rng);
            const Eigen::RowVectorXd probe = gaussian(1, cfg.embedding_dim, rng);
            auto loss = [&] { return forward_window(window, graph, cfg, params).dot(probe); };
            nn::zero_grads(params.parameters());
            GaitWindowTrace trace;
            forward_window(window, graph, cfg, params, &trace);
            backward_window(trace, graph, cfg, params, probe);
            const auto fd = fd_check(params.parameters(), loss);
            v.require(fd.worst <= 1e-4, std::string("gait ") + std::string(to_string(strategy)) + "/" +
                                            std::string(nn::to_string(act)) + " " + fmt("%.2e", fd.worst) + " (" +
                                            std::to_string(fd.kinks) + " coordinates on a kink excluded)");
        }

    auto fusion = make_fusion_params(8, 6, 22);
    FeatureVector fg{Modality::gait, gaussian(8, 1, rng).col(0)};
    FeatureVector ff{Modality::face, gaussian(6, 1, rng).col(0)};
    for (int label : {0, 1}) {
        auto loss = [&] { return nn::cross_entropy(hybrid_fuse(fg, ff, fusion), label, nullptr); };
        nn::zero_grads(fusion.parameters());
        const auto og = modality_forward(fg.values, fusion.gait);
        const auto of = modality_forward(ff.values, fusion.face);
        Eigen::VectorXd grad;
        nn::cross_entropy(og.logits + of.logits, label, &grad);
        modality_backward(fg.values, og, fusion.gait, grad);
        modality_backward(ff.values, of, fusion.face, grad);
        const auto fd = fd_check(fusion.parameters(), loss);
        v.require(fd.worst <= 1e-4 && fd.kinks == 0, "fusion head label " + std::to_string(label) + " " + fmt("%.2e", fd.worst));
    }
    const double t = seconds_since(t0);
    v.require(t < 60.0, "time " + fmt("%.2f", t) + " s < 60 s");
    return v;
}

// 6 ------------------------------------------------------------------------------------------
Verdict structural_invariants() {
    Verdict v;
    bool symmetric = true, rows = true;
    for (auto s : {PartitionStrategy::uniform, PartitionStrategy::distance, PartitionStrategy::spatial}) {
        const auto g = build_adjacency(s);
        symmetric = symmetric && g.adjacency == g.adjacency.transpose();
        const Eigen::MatrixXd rn = row_normalized(g.adjacency);
        rows = rows && (rn.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12;
        for (const auto& p : g.partitions) rows = rows && p.allFinite();
        rows = rows && g.partitions.front().diagonal().minCoeff() > 0.0;
    }
    v.require(symmetric, "adjacency symmetric for every partition strategy");
    v.require(rows, "row-normalised adjacency rows sum to 1; partitions finite with self loops");

    auto spec = GaitSimSpec::defaults(GaitClass::parkinsonian);
    spec.frames = 128;
    spec.seed = 3;
    const auto seq = simulate_gait(spec);
    auto moved = seq;
    for (Eigen::Index t = 0; t < moved.frames.rows(); ++t)
        for (int j = 0; j < kJointCount; ++j) {
            moved.frames(t, 3 * j) = 2.0 * moved.frames(t, 3 * j) + 50.0;
            moved.frames(t, 3 * j + 1) = 2.0 * moved.frames(t, 3 * j + 1) - 20.0;
        }
    const auto wa = preprocess(seq, WindowingOptions{});
    const auto wb = preprocess(moved, WindowingOptions{});
    double worst = 0.0;
    for (std::size_t i = 0; i < wa.size(); ++i) worst = std::max(worst, (wa[i] - wb[i]).cwiseAbs().maxCoeff());
    v.require(wa.size() == 3 && worst <= 1e-9, "preprocess invariant to translation and x2 scale, max diff " +
                                                   fmt("%.2e", worst));

    std::vector<int> perm(kJointCount);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(5);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto cfg = GaitModelConfig::defaults();
    const auto graph = build_adjacency(cfg.partition);
    const auto params = init_gait_params(cfg, graph.partition_count(), 6);
    std::vector<GaitWindow> permuted;
    for (const auto& w : wa) permuted.push_back(permute_window(w, perm));
    const auto fa = gait_forward(wa, graph, cfg, params);
    const auto fb = gait_forward(permuted, permute_graph(graph, perm), cfg, params);
    const double perm_err = (fa.values - fb.values).norm() / std::max(1.0, fa.values.norm());
    v.require(perm_err <= 1e-12, "gait_forward joint-permutation equivariance, rel diff " + fmt("%.2e", perm_err));

    const auto dir = g_scratch / "structural";
    BenchSpec bspec;
    bspec.pd_subjects = 6;
    bspec.control_subjects = 6;
    bspec.corpus_per_expression = 2;
    bspec.seed = 9;
    const auto manifest = load_manifest(write_bench(make_bench(bspec), dir).manifest);
    const GaitClassifier gait(cfg, 1);
    const FaceClassifier face(FaceBackboneConfig{}, 2);
    const auto gsum = nn::checksum(gait.all_parameters());
    const auto fsum = nn::checksum(face.parameters());
    FusionTrainConfig fcfg;
    fcfg.epochs = 20;
    const auto trained = train_fusion(manifest, gait, face, fcfg);
    v.require(trained.gait_checksum_before == trained.gait_checksum_after && trained.gait_checksum_after == gsum &&
                  trained.face_checksum_before == trained.face_checksum_after && trained.face_checksum_after == fsum &&
                  nn::checksum(gait.all_parameters()) == gsum && nn::checksum(face.parameters()) == fsum,
              "extractor checksums identical through train_fusion");

    double softmax_worst = 0.0;
    std::normal_distribution<double> wide(0.0, 50.0);
    for (int i = 0; i < 1000; ++i) {
        Eigen::VectorXd l(2 + i % 6);
        for (Eigen::Index k = 0; k < l.size(); ++k) l(k) = wide(rng);
        softmax_worst = std::max(softmax_worst, std::abs(nn::softmax(l).sum() - 1.0));
    }
    const DiagnosisModels models{&gait, &face, &trained.model};
    for (const auto& s : manifest.subjects) {
        const auto pred = predict_subject(s, models);
        softmax_worst = std::max(softmax_worst, std::abs(nn::softmax(pred.logits).sum() - 1.0));
    }
    v.require(softmax_worst <= 1e-9, "softmax sums to 1 within " + fmt("%.1e", softmax_worst));
    return v;
}

// 7 ------------------------------------------------------------------------------------------
Verdict end_to_end() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = g_scratch / "e2e";
    const auto log = g_scratch / "e2e.log";
    const std::string base = "--output-dir \"" + out.string() + "\" ";
    int code = run_cli(base + "simulate --pd 200 --controls 200", log);
    if (code == 0) code = run_cli(base + "compare --bench \"" + (out / "bench").string() + "\"", log);
    v.require(code == 0, "CLI simulate + compare exit code " + std::to_string(code));
    if (code != 0) {
        v.note(slurp(log));
        return v;
    }
    const auto report = json::parse(slurp(out / "comparison.json"));
    double gait = 0.0, face = 0.0, fusion = 0.0;
    for (const auto& r : report.at("rows")) {
        const double acc = r.at("mean_accuracy").get<double>();
        if (r.at("model") == "gait-only") gait = acc;
        if (r.at("model") == "face-only") face = acc;
        if (r.at("model") == "fusion") fusion = acc;
    }
    const double t = seconds_since(t0);
    v.note("held-out mean accuracy over " + std::to_string(report.at("k").get<int>()) + " folds: gait " +
           fmt("%.4f", gait) + ", face " + fmt("%.4f", face) + ", fusion " + fmt("%.4f", fusion));
    v.require(fusion >= std::max(gait, face) - 0.02, "fusion >= max(unimodal) - 0.02");
    v.require(fusion >= 0.90, "fusion >= 0.90");
    v.require(gait >= 0.85 && face >= 0.85, "each unimodal branch >= 0.85");
    v.require(t < 900.0, "time " + fmt("%.1f", t) + " s < 900 s");
    return v;
}

// 8 ------------------------------------------------------------------------------------------
Verdict hand_fusion() {
    Verdict v;
    HybridFusionParams p = make_fusion_params(2, 2, 0);
    const Eigen::Vector2d wg_s(1.0, 0.0), wf_s(0.0, 1.0);
    const double bg_s = 0.0, bf_s = 0.25;
    Eigen::Matrix<double, 3, 2> wg_c, wf_c;
    wg_c << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
    wf_c << 1.0, 0.0, 0.0, 1.0, 2.0, -2.0;
    const Eigen::RowVector2d bg_c(0.5, -0.5), bf_c(0.0, 0.0);
    p.gait.score_weight.value = wg_s;
    p.gait.score_bias.value = Eigen::MatrixXd::Constant(1, 1, bg_s);
    p.gait.class_weight.value = wg_c;
    p.gait.class_bias.value = bg_c;
    p.face.score_weight.value = wf_s;
    p.face.score_bias.value = Eigen::MatrixXd::Constant(1, 1, bf_s);
    p.face.class_weight.value = wf_c;
    p.face.class_bias.value = bf_c;

    const FeatureVector fg{Modality::gait, Eigen::Vector2d(1.0, 0.0)};
    const FeatureVector ff{Modality::face, Eigen::Vector2d(0.0, 1.0)};
    // manual arithmetic: gait score 1, fused (1,0,1) -> (6.5, 7.5); face score 1.25, fused (0,1,1.25) -> (2.5, -1.5)
    const Eigen::Vector2d expected(9.0, 6.0);
    const auto logits = hybrid_fuse(fg, ff, p);
    const double err = (logits - expected).cwiseAbs().maxCoeff();
    const auto og = modality_forward(fg.values, p.gait);
    const auto of = modality_forward(ff.values, p.face);
    v.require(err <= 1e-9, "logits (" + fmt("%.6f", logits(0)) + ", " + fmt("%.6f", logits(1)) + ") vs (9, 6), err " +
                               fmt("%.1e", err));
    v.require(og.fused.size() == 3 && of.fused.size() == 3, "fused features have m+1 = 3 entries");
    v.require(std::abs(og.score - 1.0) <= 1e-9 && std::abs(of.score - 1.25) <= 1e-9, "scalar scores 1 and 1.25");
    return v;
}

// 9 ------------------------------------------------------------------------------------------
Verdict determinism() {
    Verdict v;
    const auto cfg = g_scratch / "det_config.json";
    std::ofstream(cfg) << R"({"seed": 5,
      "bench": {"pd_subjects": 15, "control_subjects": 15, "corpus_per_expression": 10},
      "gait": {"epochs": 3}, "face": {"epochs": 8}, "fusion": {"epochs": 40}, "evaluation": {"folds": 3}})";
    const std::vector<std::pair<std::string, int>> runs{{"a", 1}, {"b", 1}, {"c", 2}};
    std::map<std::string, std::map<std::string, std::string>> files;
    for (const auto& [name, workers] : runs) {
        const auto out = g_scratch / ("det-" + name);
        const auto log = g_scratch / ("det-" + name + ".log");
        const std::string base = "--config \"" + cfg.string() + "\" --output-dir \"" + out.string() + "\" --workers " +
                                 std::to_string(workers) + " ";
        const auto bench = out / "bench";
        const std::vector<std::string> steps{
            "simulate",
            "train-face --corpus \"" + (bench / "corpus.jsonl").string() + "\"",
            "train-gait --manifest \"" + (bench / "manifest.jsonl").string() + "\"",
            "train-fusion --manifest \"" + (bench / "manifest.jsonl").string() + "\" --gait \"" +
                (out / "gait.mmgc").string() + "\" --face \"" + (out / "face.mmfc").string() + "\"",
            "evaluate --manifest \"" + (bench / "manifest.jsonl").string() + "\" --gait \"" +
                (out / "gait.mmgc").string() + "\" --face \"" + (out / "face.mmfc").string() + "\" --fusion \"" +
                (out / "fusion.mmfu").string() + "\"",
            "compare --bench \"" + bench.string() + "\" --face \"" + (out / "face.mmfc").string() + "\""};
        for (const auto& step : steps) {
            const int code = run_cli(base + step, log);
            if (code != 0) {
                v.require(false, "run " + name + " step '" + step.substr(0, step.find(' ')) + "' exit " +
                                     std::to_string(code) + ": " + slurp(log));
                return v;
            }
        }
        for (const char* f : {"metrics.json", "comparison.json", "face_report.json", "gait.mmgc", "fusion.mmfu",
                              "face.mmfc", "bench/manifest.jsonl"})
            files[name][f] = slurp(out / f);
    }
    for (const auto& [f, content] : files["a"]) {
        v.require(!content.empty() && content == files["b"][f], f + " identical on rerun (workers 1)");
        v.require(content == files["c"][f], f + " identical with workers 2");
    }
    return v;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <mmpd-cli> [criteria...]\n";
        return 2;
    }
    g_cli = fs::absolute(argv[1]).string();
    g_scratch = fs::temp_directory_path() / ("mmpd-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(g_scratch);
    fs::create_directories(g_scratch);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"protocol fidelity (76/19 folds, 66 test subjects)", protocol_fidelity},
        {"direction discovery oracle", direction_oracle},
        {"inversion oracle", inversion_oracle},
        {"edit monotonicity", edit_monotonicity},
        {"gradient correctness", gradient_correctness},
        {"structural invariants", structural_invariants},
        {"end-to-end synthetic benchmark (200 subjects/class)", end_to_end},
        {"hand-computed fusion forward", hand_fusion},
        {"CLI determinism", determinism}};

    std::set<int> selected;
    for (int i = 2; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v.require(false, std::string("exception: ") + e.what());
        }
        failures += !v.pass;
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << criteria[i].first << " ["
                  << fmt("%.2f", seconds_since(t0)) << " s]\n";
        for (const auto& n : v.notes) std::cout << "    " << n << "\n";
        std::cout.flush();
    }
    std::error_code ec;
    fs::remove_all(g_scratch, ec);
    std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : std::to_string(failures) + " CRITERIA FAILED") << "\n";
    return failures == 0 ? 0 : 1;
}
