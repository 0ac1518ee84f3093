#include "mmpd/pipeline.hpp"

#include "mmpd/artifact_io.hpp"
#include "mmpd/errors.hpp"
#include "mmpd/evaluation.hpp"
#include "mmpd/pipeline_config.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <ostream>

namespace mmpd {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw Error("write failed on '" + path.string() + "'");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << text;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Context {
    std::string command;
    PipelineConfig cfg;  // stage seeds already derived
    std::uint64_t hash = 0;
    fs::path out_dir;
    std::ostream& out;
    json timings = json::object();
    json artifacts = json::array();

    fs::path artifact(const std::string& name) {
        artifacts.push_back(name);
        return out_dir / name;
    }

    template <typename F>
    auto timed(const std::string& stage, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            timings[stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        } else {
            auto r = f();
            timings[stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            return r;
        }
    }

    ToyGenerator generator() const { return ToyGenerator(cfg.generator); }
    ConvPerceptualExtractor extractor() const {
        return ConvPerceptualExtractor(cfg.generator.shape, cfg.inversion.perceptual_weights,
                                       nn::derive_seed(cfg.seed, "perceptual"), cfg.perceptual_channels);
    }
};

std::vector<GaitSample> gait_samples(const Manifest& m) {
    std::vector<GaitSample> out;
    for (const auto& s : m.subjects) {
        if (!s.has_gait()) throw MissingModality(s.id, "gait");
        out.push_back({load_keypoints(s.gait), s.label});
    }
    return out;
}

json trace_json(const std::vector<EpochStats>& trace) {
    json j = json::array();
    for (const auto& e : trace) j.push_back({{"loss", e.loss}, {"accuracy", e.accuracy}});
    return j;
}

json direction_json(const DirectionVector& d) {
    const auto& g = d.diagnostics;
    return {{"source", d.source},
            {"target", d.target},
            {"dim", d.dim()},
            {"mode", std::string(to_string(g.mode))},
            {"initial_loss", g.initial_loss},
            {"final_loss", g.final_loss},
            {"iterations", g.iterations},
            {"converged", g.converged},
            {"degenerate", g.degenerate},
            {"warning", g.warning}};
}

// ---- subcommands -------------------------------------------------------------------------

struct SimulateArgs {
    std::size_t pd = 0, controls = 0;
    std::string uninformative;
};

void cmd_simulate(Context& ctx, const SimulateArgs& a) {
    BenchSpec spec = ctx.cfg.bench;
    if (a.pd) spec.pd_subjects = a.pd;
    if (a.controls) spec.control_subjects = a.controls;
    if (!a.uninformative.empty()) spec.uninformative = parse_uninformative(a.uninformative);
    const auto bench = ctx.timed("generate", [&] { return make_bench(spec); });
    const auto paths = ctx.timed("write", [&] { return write_bench(bench, ctx.out_dir / "bench", ctx.hash); });
    ctx.artifacts.push_back("bench");
    json summary{{"pd_subjects", spec.pd_subjects},
                 {"control_subjects", spec.control_subjects},
                 {"corpus_images", bench.corpus.size()},
                 {"uninformative", std::string(to_string(spec.uninformative))},
                 {"manifest", "bench/manifest.jsonl"},
                 {"corpus", "bench/corpus.jsonl"}};
    write_json(ctx.artifact("bench.json"), summary);
    ctx.out << "simulated " << spec.pd_subjects << " PD and " << spec.control_subjects << " control subjects, "
            << bench.corpus.size() << " corpus images\n"
            << "manifest: " << paths.manifest.string() << "\n";
}

struct InvertArgs {
    std::vector<std::string> images;
    bool oracle = false;
};

void cmd_invert(Context& ctx, const InvertArgs& a) {
    const auto g = ctx.generator();
    const auto px = ctx.extractor();
    std::vector<LatentVector> latents;
    json records = json::array();
    for (const auto& path : a.images) {
        const auto image = io::read_image(path);
        const auto r = ctx.timed("invert:" + fs::path(path).filename().string(),
                                 [&] { return invert(image, g, px, ctx.cfg.inversion); });
        const double mse = pixel_mse(g.forward(r.latent), image);
        json rec{{"image", path},
                 {"iterations", r.iterations},
                 {"rejected_steps", r.rejected_steps},
                 {"converged", r.converged},
                 {"initial_loss", r.loss_trace.front()},
                 {"final_loss", r.final_loss()},
                 {"reconstruction_mse", mse}};
        ctx.out << path << ": loss " << fmt("%.6g", r.final_loss()) << ", mse " << fmt("%.3g", mse) << ", "
                << r.iterations << " iterations";
        if (a.oracle) {
            const auto o = g.oracle_inverse(image);
            const double dist = (o.values() - r.latent.values()).norm();
            rec["oracle_latent_distance"] = dist;
            ctx.out << ", oracle distance " << fmt("%.3g", dist);
        }
        ctx.out << "\n";
        records.push_back(std::move(rec));
        latents.push_back(r.latent);
    }
    io::write_latents(ctx.artifact("latents.mmlv"), latents, ctx.hash);
    write_json(ctx.artifact("inversion.json"), records);
}

struct FitArgs {
    std::string a, b, oracle, mode, tag_a, tag_b;
};

void cmd_fit_direction(Context& ctx, const FitArgs& a) {
    LabeledLatentSet set;
    set.a = io::read_latents(a.a);
    set.b = io::read_latents(a.b);
    set.tag_a = a.tag_a.empty() ? fs::path(a.a).stem().string() : a.tag_a;
    set.tag_b = a.tag_b.empty() ? fs::path(a.b).stem().string() : a.tag_b;
    FitOptions opts = ctx.cfg.direction;
    if (!a.mode.empty()) opts.mode = parse_fit_mode(a.mode);
    const auto dir = ctx.timed("fit", [&] { return fit_direction(set, opts); });
    io::write_direction(ctx.artifact("direction.mmdv"), dir, ctx.hash);
    json rec = direction_json(dir);
    ctx.out << "direction " << dir.source << " -> " << dir.target << " (" << to_string(opts.mode) << "), "
            << dir.diagnostics.iterations << " epochs, final loss " << fmt("%.6g", dir.diagnostics.final_loss) << "\n";
    if (!dir.diagnostics.warning.empty()) ctx.out << "warning: " << dir.diagnostics.warning << "\n";
    if (!a.oracle.empty()) {
        const auto oracle = io::read_direction(a.oracle);
        if (oracle.dim() != dir.dim()) throw ShapeError("oracle direction dimension differs from the fitted direction");
        const double cos = cosine_similarity(dir.values, oracle.values);
        rec["oracle_cosine"] = cos;
        ctx.out << "cosine " << fmt("%.6f", cos) << "\n";
    }
    write_json(ctx.artifact("direction.json"), rec);
}

struct SynthArgs {
    std::string latents, direction;
    std::vector<double> lambdas;
};

void cmd_synthesize(Context& ctx, const SynthArgs& a) {
    const auto g = ctx.generator();
    const auto latents = io::read_latents(a.latents);
    const auto dir = io::read_direction(a.direction);
    require_unit_norm(dir, 1e-6);
    const auto lambdas = a.lambdas.empty() ? std::vector<double>{ctx.cfg.edit_lambda} : a.lambdas;
    fs::create_directories(ctx.out_dir / "synth");
    ctx.artifacts.push_back("synth");
    json records = json::array();
    ctx.timed("synthesize", [&] {
        for (std::size_t i = 0; i < latents.size(); ++i)
            for (double lam : lambdas) {
                const auto name = "synth/" + std::to_string(i) + "_" + dir.target + "_" + fmt("%g", lam) + ".pfm";
                io::write_image(ctx.out_dir / name, synthesize(latents[i], dir, lam, g), ctx.hash);
                records.push_back({{"latent", i}, {"lambda", lam}, {"image", name}});
            }
    });
    write_json(ctx.artifact("synthesis.json"), records);
    ctx.out << "wrote " << records.size() << " images to " << (ctx.out_dir / "synth").string() << "\n";
}

struct TrainFaceArgs {
    std::string corpus, directions;
};

FaceTrainResult train_face_model(Context& ctx, const TrainFaceArgs& a) {
    const auto refs = load_expression_corpus(a.corpus);
    std::vector<LabeledImage> data;
    for (const auto& r : refs) data.push_back({io::read_image(r.path), r.expression});
    if (ctx.cfg.face_augment > 0) {
        if (a.directions.empty())
            throw ConfigError("face", "augment", "augmentation needs --directions with neutral_to_<expression>.mmdv files");
        ExpressionDirections dirs;
        for (auto e : emotional_expressions())
            dirs[e] = io::read_direction(fs::path(a.directions) / ("neutral_to_" + std::string(to_string(e)) + ".mmdv"));
        const auto g = ctx.generator();
        const auto px = ctx.extractor();
        std::size_t used = 0;
        std::vector<LabeledImage> extra;
        ctx.timed("augment", [&] {
            for (const auto& d : data) {
                if (d.label != ExpressionLabel::neutral || used == ctx.cfg.face_augment) continue;
                auto more = augment_with_synthesized(d.image, dirs, g, px, ctx.cfg.inversion, ctx.cfg.edit_lambda);
                extra.insert(extra.end(), more.begin(), more.end());
                ++used;
            }
        });
        data.insert(data.end(), extra.begin(), extra.end());
    }
    FaceBackboneConfig fcfg = ctx.cfg.face;
    return ctx.timed("train-face", [&] { return train_expression_classifier(data, fcfg, ctx.cfg.face_training); });
}

void save_face_outputs(Context& ctx, const FaceTrainResult& r) {
    r.model.save(ctx.artifact("face.mmfc"), ctx.hash);
    const auto& rep = r.report;
    write_json(ctx.artifact("face_report.json"), {{"model", rep.model_name},
                                                  {"parameter_count", rep.parameter_count},
                                                  {"parameters_mb", rep.parameters_mb},
                                                  {"train_accuracy", rep.train_accuracy},
                                                  {"test_accuracy", rep.test_accuracy},
                                                  {"train_size", rep.train_size},
                                                  {"test_size", rep.test_size},
                                                  {"epoch_loss", rep.epoch_loss}});
    write_text(ctx.artifact("face_report.txt"), rep.table());
}

void cmd_train_face(Context& ctx, const TrainFaceArgs& a) {
    const auto r = train_face_model(ctx, a);
    save_face_outputs(ctx, r);
    ctx.out << r.report.table();
}

void cmd_train_gait(Context& ctx, const std::string& manifest_path) {
    const auto manifest = load_manifest(manifest_path);
    const auto samples = ctx.timed("load", [&] { return gait_samples(manifest); });
    const auto r = ctx.timed("train-gait",
                             [&] { return train_gait_classifier(samples, ctx.cfg.gait, ctx.cfg.gait_training); });
    r.model.save(ctx.artifact("gait.mmgc"), ctx.hash);
    write_json(ctx.artifact("gait_train.json"),
               {{"subjects", samples.size()},
                {"parameter_count", nn::parameter_count(r.model.all_parameters())},
                {"trace", trace_json(r.trace)}});
    ctx.out << "trained gait classifier on " << samples.size() << " subjects, final loss "
            << fmt("%.6g", r.trace.back().loss) << ", training accuracy " << fmt("%.4f", r.trace.back().accuracy)
            << "\n";
}

struct ModelArgs {
    std::string manifest, gait, face, fusion;
};

void cmd_train_fusion(Context& ctx, const ModelArgs& a) {
    const auto manifest = load_manifest(a.manifest);
    const auto gait = GaitClassifier::load(a.gait);
    const auto face = FaceClassifier::load(a.face);
    const auto r = ctx.timed("train-fusion", [&] { return train_fusion(manifest, gait, face, ctx.cfg.fusion); });
    r.model.save(ctx.artifact("fusion.mmfu"), ctx.hash);
    const bool frozen = r.gait_checksum_before == r.gait_checksum_after && r.face_checksum_before == r.face_checksum_after;
    write_json(ctx.artifact("fusion_train.json"), {{"subjects", manifest.subjects.size()},
                                                   {"gait_checksum_before", hex64(r.gait_checksum_before)},
                                                   {"gait_checksum_after", hex64(r.gait_checksum_after)},
                                                   {"face_checksum_before", hex64(r.face_checksum_before)},
                                                   {"face_checksum_after", hex64(r.face_checksum_after)},
                                                   {"extractors_frozen", frozen},
                                                   {"trace", trace_json(r.trace)}});
    ctx.out << "trained fusion head on " << manifest.subjects.size() << " subjects, final loss "
            << fmt("%.6g", r.trace.back().loss) << ", extractors " << (frozen ? "unchanged" : "CHANGED") << "\n";
}

std::string metrics_text(const MetricsReport& m) {
    std::string s;
    s += "Subjects " + std::to_string(m.evaluated) + ", failures " + std::to_string(m.failures.size()) + "\n";
    s += "Accuracy " + fmt("%.4f", m.accuracy) + "  PD " + fmt("%.4f", m.per_class_accuracy[0]) + "  non-PD " +
         fmt("%.4f", m.per_class_accuracy[1]) + "\n";
    s += "Confusion (rows truth, cols prediction)\n";
    s += "            PD  non-PD\n";
    char buf[96];
    std::snprintf(buf, sizeof buf, "PD      %6zu  %6zu\nnon-PD  %6zu  %6zu\n", m.confusion[0][0], m.confusion[0][1],
                  m.confusion[1][0], m.confusion[1][1]);
    return s + buf;
}

void cmd_evaluate(Context& ctx, const ModelArgs& a) {
    const auto manifest = load_manifest(a.manifest);
    const auto gait = GaitClassifier::load(a.gait);
    const auto face = FaceClassifier::load(a.face);
    const auto fusion = FusionModel::load(a.fusion);
    const DiagnosisModels models{&gait, &face, &fusion};
    const auto m = ctx.timed("evaluate", [&] { return evaluate(models, manifest, {ctx.cfg.exclude_failures}); });
    write_json(ctx.artifact("metrics.json"), m.to_json());
    const auto text = metrics_text(m);
    write_text(ctx.artifact("metrics.txt"), text);
    ctx.out << text;
}

struct CompareArgs {
    std::string manifest, bench, face, corpus;
};

json plan_json(const FoldPlan& p) { return {{"seed", p.seed}, {"folds", p.folds}}; }

void cmd_compare(Context& ctx, const CompareArgs& a) {
    if (a.manifest.empty() == a.bench.empty()) throw ConfigError("compare", "manifest", "give exactly one of --manifest or --bench");
    const fs::path manifest_path = a.bench.empty() ? fs::path(a.manifest) : fs::path(a.bench) / "manifest.jsonl";
    std::string corpus = a.corpus;
    if (corpus.empty() && !a.bench.empty()) corpus = (fs::path(a.bench) / "corpus.jsonl").string();

    std::optional<FaceClassifier> face;
    if (!a.face.empty()) {
        face = FaceClassifier::load(a.face);
    } else {
        if (corpus.empty()) throw ConfigError("compare", "face", "need --face, --corpus or --bench to obtain a face model");
        auto r = train_face_model(ctx, {corpus, a.bench.empty() ? std::string() : (fs::path(a.bench) / "oracle").string()});
        save_face_outputs(ctx, r);
        face = std::move(r.model);
    }
    const auto manifest = load_manifest(manifest_path);
    const auto data = ctx.timed("load", [&] { return load_subject_data(manifest); });
    const auto pd_plan = kfold_split(manifest, ctx.cfg.folds, nn::derive_seed(ctx.cfg.seed, "folds-pd"));
    const auto control_plan = control_split(manifest, ctx.cfg.folds, nn::derive_seed(ctx.cfg.seed, "folds-control"));
    write_json(ctx.artifact("folds.json"), {{"pd", plan_json(pd_plan)}, {"control", plan_json(control_plan)}});
    ExperimentConfig ecfg{ctx.cfg.gait, ctx.cfg.gait_training, ctx.cfg.fusion, ctx.cfg.workers};
    const auto report = ctx.timed("compare", [&] { return compare_unimodal(data, pd_plan, control_plan, *face, ecfg); });
    write_json(ctx.artifact("comparison.json"), report.to_json());
    write_text(ctx.artifact("comparison.txt"), report.table());
    ctx.out << report.table();
}

std::string comparison_text(const json& j) {
    std::string s = "Model         Mean Acc.  PD Acc.  non-PD Acc.  Fold Acc.\n";
    auto num = [](const json& v) { return v.is_number() ? fmt("%.4f", v.get<double>()) : std::string("   n/a"); };
    for (const auto& r : j.at("rows")) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%-12s  ", r.at("model").get<std::string>().c_str());
        s += buf;
        s += num(r.at("mean_accuracy")) + "     " + num(r.at("mean_per_class_accuracy").at("PD")) + "   " +
             num(r.at("mean_per_class_accuracy").at("non-PD")) + "       ";
        for (const auto& f : r.at("folds")) s += num(f.at("accuracy")) + " ";
        s += "\n";
    }
    s += "Test folds:";
    for (const auto& c : j.at("compositions"))
        s += " " + std::to_string(c.at("PD").get<std::size_t>()) + "+" + std::to_string(c.at("non-PD").get<std::size_t>());
    return s + "\n";
}

void cmd_report(Context& ctx, const std::string& run_dir) {
    const fs::path dir = run_dir.empty() ? ctx.out_dir : fs::path(run_dir);
    std::string text;
    bool any = false;
    if (fs::exists(dir / "face_report.json")) {
        const auto j = read_json(dir / "face_report.json");
        text += "== Expression classifier\n";
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-12s %12s %12s %12s\n%-12s %9.4f MB %12.4f %12.4f\n", "Model", "Parameters",
                      "Train Acc.", "Test Acc.", j.at("model").get<std::string>().c_str(),
                      j.at("parameters_mb").get<double>(), j.at("train_accuracy").get<double>(),
                      j.at("test_accuracy").get<double>());
        text += buf;
        any = true;
    }
    if (fs::exists(dir / "comparison.json")) {
        text += "== Unimodal vs. multimodal\n" + comparison_text(read_json(dir / "comparison.json"));
        any = true;
    }
    if (fs::exists(dir / "metrics.json")) {
        const auto j = read_json(dir / "metrics.json");
        text += "== Evaluation\n";
        text += "Accuracy " + (j.at("accuracy").is_number() ? fmt("%.4f", j.at("accuracy").get<double>()) : "n/a") +
                " over " + std::to_string(j.at("evaluated").get<std::size_t>()) + " subjects\n";
        any = true;
    }
    if (fs::exists(dir / "direction.json")) {
        const auto j = read_json(dir / "direction.json");
        text += "== Direction " + j.at("source").get<std::string>() + " -> " + j.at("target").get<std::string>() + "\n";
        if (j.contains("oracle_cosine")) text += "cosine " + fmt("%.6f", j.at("oracle_cosine").get<double>()) + "\n";
        any = true;
    }
    if (!any) throw DataError("no reports found in '" + dir.string() + "'");
    write_text(ctx.artifact("report.txt"), text);
    ctx.out << text;
}

// ---- driver ------------------------------------------------------------------------------

json error_record(const std::string& command, const std::exception& e) {
    json j{{"status", "error"}, {"command", command}, {"message", e.what()}};
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        j["kind"] = err->kind();
        if (const auto* ce = dynamic_cast<const ConfigError*>(err)) {
            j["section"] = ce->section();
            j["key"] = ce->key();
        }
        if (const auto* mm = dynamic_cast<const MissingModality*>(err)) j["subject_id"] = mm->subject_id();
        if (const auto* ne = dynamic_cast<const NumericalError*>(err)) j["iteration"] = ne->iteration();
    } else {
        j["kind"] = "internal_error";
    }
    return j;
}

std::size_t parse_workers(const std::string& s, const std::string& origin) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size() || v == 0) throw ConfigError("global", "workers", origin + " must be a positive integer, got '" + s + "'");
    return v;
}

} // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multimodal Parkinson's disease diagnosis pipeline", "mmpd"};
    app.require_subcommand(1, 1);
    std::string config_path, output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "global seed (overrides the config)");
    app.add_option("--output-dir", output_dir, "run directory (overrides MMPD_OUTPUT_DIR and the config)");
    app.add_option("--workers", workers, "worker threads for fold evaluation (overrides MMPD_WORKERS)");

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "write a synthetic benchmark (gait, faces, corpus, latents, oracles)");
    c_sim->add_option("--pd", sim.pd, "PD subjects (default from config)");
    c_sim->add_option("--controls", sim.controls, "control subjects (default from config)");
    c_sim->add_option("--uninformative", sim.uninformative, "none|gait|face: generate that modality label-blind");

    InvertArgs inv;
    auto* c_inv = app.add_subcommand("invert", "invert images into the generator's latent space");
    c_inv->add_option("--image", inv.images, "PFM image(s)")->required()->check(CLI::ExistingFile);
    c_inv->add_flag("--oracle", inv.oracle, "report distance to the toy generator's closed-form inverse");

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit-direction", "fit the latent direction from expression A to B");
    c_fit->add_option("--a", fit.a, "latents of expression A (.mmlv)")->required()->check(CLI::ExistingFile);
    c_fit->add_option("--b", fit.b, "latents of expression B (.mmlv)")->required()->check(CLI::ExistingFile);
    c_fit->add_option("--mode", fit.mode, "standard|paper_faithful (default from config)");
    c_fit->add_option("--oracle", fit.oracle, "oracle direction (.mmdv); prints the cosine similarity")
        ->check(CLI::ExistingFile);
    c_fit->add_option("--tag-a", fit.tag_a, "name of expression A (default: file stem)");
    c_fit->add_option("--tag-b", fit.tag_b, "name of expression B (default: file stem)");

    SynthArgs syn;
    auto* c_syn = app.add_subcommand("synthesize", "edit latents along a direction and render images");
    c_syn->add_option("--latents", syn.latents, "base latents (.mmlv)")->required()->check(CLI::ExistingFile);
    c_syn->add_option("--direction", syn.direction, "direction (.mmdv)")->required()->check(CLI::ExistingFile);
    c_syn->add_option("--lambda", syn.lambdas, "edit strength(s) (default from config)");

    TrainFaceArgs tf;
    auto* c_tf = app.add_subcommand("train-face", "train the expression classifier");
    c_tf->add_option("--corpus", tf.corpus, "expression corpus (.jsonl)")->required()->check(CLI::ExistingFile);
    c_tf->add_option("--directions", tf.directions, "directory of neutral_to_<expression>.mmdv for augmentation");

    std::string tg_manifest;
    auto* c_tg = app.add_subcommand("train-gait", "train the gait classifier");
    c_tg->add_option("--manifest", tg_manifest, "subject manifest (.jsonl)")->required()->check(CLI::ExistingFile);

    ModelArgs tfu;
    auto* c_tfu = app.add_subcommand("train-fusion", "train the fusion head on frozen extractors");
    c_tfu->add_option("--manifest", tfu.manifest)->required()->check(CLI::ExistingFile);
    c_tfu->add_option("--gait", tfu.gait, "gait checkpoint (.mmgc)")->required()->check(CLI::ExistingFile);
    c_tfu->add_option("--face", tfu.face, "face checkpoint (.mmfc)")->required()->check(CLI::ExistingFile);

    ModelArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "score trained models on a test manifest");
    c_ev->add_option("--manifest", ev.manifest)->required()->check(CLI::ExistingFile);
    c_ev->add_option("--gait", ev.gait)->required()->check(CLI::ExistingFile);
    c_ev->add_option("--face", ev.face)->required()->check(CLI::ExistingFile);
    c_ev->add_option("--fusion", ev.fusion, "fusion checkpoint (.mmfu)")->required()->check(CLI::ExistingFile);

    CompareArgs cmp;
    auto* c_cmp = app.add_subcommand("compare", "k-fold comparison of gait-only, face-only and fusion");
    c_cmp->add_option("--manifest", cmp.manifest)->check(CLI::ExistingFile);
    c_cmp->add_option("--bench", cmp.bench, "benchmark directory written by simulate")->check(CLI::ExistingDirectory);
    c_cmp->add_option("--face", cmp.face, "pretrained face checkpoint; otherwise trained from the corpus")
        ->check(CLI::ExistingFile);
    c_cmp->add_option("--corpus", cmp.corpus, "expression corpus for training the face model")->check(CLI::ExistingFile);

    std::string report_dir;
    auto* c_rep = app.add_subcommand("report", "render text tables from a run directory");
    c_rep->add_option("--run", report_dir, "run directory (default: the output directory)")
        ->check(CLI::ExistingDirectory);

    std::string command = "mmpd";
    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        json rec{{"status", "error"}, {"command", command}, {"kind", "usage_error"}, {"message", e.what()}};
        err << rec.dump() << "\n";
        return 2;
    }
    command = app.get_subcommands().front()->get_name();

    fs::path out_dir;
    try {
        PipelineConfig cfg = config_path.empty() ? parse_config(json::object()) : load_config(config_path);
        if (const char* env = std::getenv("MMPD_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
        if (const char* env = std::getenv("MMPD_WORKERS"); env && *env) cfg.workers = parse_workers(env, "MMPD_WORKERS");
        if (!output_dir.empty()) cfg.output_dir = output_dir;
        if (workers) cfg.workers = parse_workers(std::to_string(*workers), "--workers");
        if (seed) cfg.seed = *seed;
        out_dir = cfg.output_dir;
        fs::create_directories(out_dir);

        Context ctx{command, cfg.with_derived_seeds(), cfg.hash(), out_dir, out};
        write_json(out_dir / "config.json", cfg.to_json());
        const auto t0 = std::chrono::steady_clock::now();

        if (command == "simulate") cmd_simulate(ctx, sim);
        else if (command == "invert") cmd_invert(ctx, inv);
        else if (command == "fit-direction") cmd_fit_direction(ctx, fit);
        else if (command == "synthesize") cmd_synthesize(ctx, syn);
        else if (command == "train-face") cmd_train_face(ctx, tf);
        else if (command == "train-gait") cmd_train_gait(ctx, tg_manifest);
        else if (command == "train-fusion") cmd_train_fusion(ctx, tfu);
        else if (command == "evaluate") cmd_evaluate(ctx, ev);
        else if (command == "compare") cmd_compare(ctx, cmp);
        else if (command == "report") cmd_report(ctx, report_dir);

        ctx.timings["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_json(out_dir / ("run_" + command + ".json"), {{"status", "ok"},
                                                            {"command", command},
                                                            {"args", args},
                                                            {"seed", cfg.seed},
                                                            {"config_hash", hex64(ctx.hash)},
                                                            {"workers", cfg.workers},
                                                            {"timings", ctx.timings},
                                                            {"artifacts", ctx.artifacts}});
        return 0;
    } catch (const std::exception& e) {
        const auto rec = error_record(command, e);
        err << rec.dump() << "\n";
        if (out_dir.empty()) {
            // the config never resolved; fall back to the flag or environment directory
            if (!output_dir.empty()) out_dir = output_dir;
            else if (const char* env = std::getenv("MMPD_OUTPUT_DIR"); env && *env) out_dir = env;
        }
        if (!out_dir.empty()) {
            try {
                fs::create_directories(out_dir);
                write_json(out_dir / ("error_" + command + ".json"), rec);
            } catch (const std::exception&) {
            }
        }
        return dynamic_cast<const ConfigError*>(&e) ? 2 : 1;
    }
}

} // namespace mmpd
