#include "mmpd/pipeline_config.hpp"

#include "mmpd/errors.hpp"
#include "mmpd/nn.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <type_traits>

namespace mmpd {

namespace {

using nlohmann::json;

class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError(name_, "", "section must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        if (!j_.contains(key)) return;
        used_.insert(key);
        const json& v = j_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) fail(key, "expected a boolean");
            out = v.get<bool>();
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) fail(key, "expected a nonnegative integer");
            out = v.get<T>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) fail(key, "expected an integer");
            out = v.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) fail(key, "expected a number");
            out = v.get<T>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) fail(key, "expected a string");
            out = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
            if (!v.is_array()) fail(key, "expected an array of integers");
            out.clear();
            for (const auto& e : v) {
                if (!e.is_number_integer()) fail(key, "expected an array of integers");
                out.push_back(e.get<int>());
            }
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            if (!v.is_array()) fail(key, "expected an array of numbers");
            out.clear();
            for (const auto& e : v) {
                if (!e.is_number()) fail(key, "expected an array of numbers");
                out.push_back(e.get<double>());
            }
        } else {
            static_assert(sizeof(T) == 0, "unsupported config type");
        }
    }

    // Parses a string-valued enum with `parse`, reporting failures against this key.
    template <typename T, typename Parse>
    void get_enum(const char* key, T& out, Parse parse) {
        std::string s;
        if (!j_.contains(key)) return;
        get(key, s);
        try {
            out = parse(s);
        } catch (const Error& e) {
            fail(key, e.what());
        }
    }

    bool has(const char* key) const { return j_.contains(key); }
    Section sub(const char* key) {
        used_.insert(key);
        return Section(j_.at(key), name_ == "global" ? std::string(key) : name_ + "." + key);
    }
    const json& raw(const char* key) {
        used_.insert(key);
        return j_.at(key);
    }
    const std::string& name() const { return name_; }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const { throw ConfigError(name_, key, msg); }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!used_.count(k)) throw ConfigError(name_, k, "unknown key");
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> used_;
};

InitMode parse_init_mode(const std::string& s) {
    if (s == "zeros") return InitMode::zeros;
    if (s == "random") return InitMode::random;
    throw ParseError("unknown init mode '" + s + "' (expected zeros or random)");
}

std::string to_string(InitMode m) { return m == InitMode::random ? "random" : "zeros"; }

json gait_blocks_json(const std::vector<BlockSpec>& blocks) {
    json arr = json::array();
    for (const auto& b : blocks) {
        json br = json::array();
        for (const auto& t : b.branches)
            br.push_back({{"kind", std::string(to_string(t.kind))},
                          {"channels", t.channels},
                          {"kernel", t.kernel},
                          {"dilation", t.dilation}});
        arr.push_back({{"channels", b.channels}, {"branches", br}});
    }
    return arr;
}

std::vector<BlockSpec> parse_gait_blocks(const json& arr, const std::string& section) {
    if (!arr.is_array()) throw ConfigError(section, "blocks", "expected an array of block objects");
    std::vector<BlockSpec> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        Section s(arr[i], section + ".blocks[" + std::to_string(i) + "]");
        BlockSpec b;
        s.get("channels", b.channels);
        if (s.has("branches")) {
            const auto& brs = s.raw("branches");
            if (!brs.is_array()) s.fail("branches", "expected an array of branch objects");
            for (std::size_t k = 0; k < brs.size(); ++k) {
                Section t(brs[k], s.name() + ".branches[" + std::to_string(k) + "]");
                TemporalBranch br;
                t.get_enum("kind", br.kind, [](const std::string& v) { return parse_branch_kind(v); });
                t.get("channels", br.channels);
                t.get("kernel", br.kernel);
                t.get("dilation", br.dilation);
                t.finish();
                if (br.kind == BranchKind::pointwise) br.kernel = 1;
                b.branches.push_back(br);
            }
        } else if (b.channels > 0) {
            b.branches = default_branches(b.channels);
        }
        s.finish();
        out.push_back(std::move(b));
    }
    return out;
}

} // namespace

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

PipelineConfig PipelineConfig::with_derived_seeds() const {
    PipelineConfig c = *this;
    c.inversion.seed = nn::derive_seed(seed, "inversion");
    c.direction.seed = nn::derive_seed(seed, "direction");
    c.face_training.seed = nn::derive_seed(seed, "face");
    c.gait_training.seed = nn::derive_seed(seed, "gait");
    c.fusion.seed = nn::derive_seed(seed, "fusion");
    c.bench.seed = nn::derive_seed(seed, "bench");
    c.bench.generator = generator;
    return c;
}

nlohmann::json PipelineConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["output_dir"] = output_dir.generic_string();
    j["workers"] = workers;
    j["generator"] = {{"latent_dim", generator.latent_dim},
                      {"height", generator.shape.height},
                      {"width", generator.shape.width},
                      {"channels", generator.shape.channels},
                      {"bias_sigma", generator.bias_sigma},
                      {"seed", generator.seed}};
    j["perceptual"] = {{"channels", perceptual_channels}};
    j["inversion"] = {{"mse_weight", inversion.mse_weight},
                      {"perceptual_weights", inversion.perceptual_weights},
                      {"max_iterations", inversion.max_iterations},
                      {"step_size", inversion.step_size},
                      {"step_decay", inversion.step_decay},
                      {"min_step_size", inversion.min_step_size},
                      {"tolerance", inversion.tolerance},
                      {"tolerance_window", inversion.tolerance_window},
                      {"init", to_string(inversion.init)},
                      {"init_scale", inversion.init_scale}};
    j["direction"] = {{"mode", std::string(to_string(direction.mode))},
                      {"learning_rate", direction.learning_rate},
                      {"max_epochs", direction.max_epochs},
                      {"tolerance", direction.tolerance},
                      {"l2", direction.l2},
                      {"init_scale", direction.init_scale}};
    j["edit"] = {{"lambda", edit_lambda}};
    j["face"] = {{"conv_channels", face.conv_channels},
                 {"embedding_dim", face.embedding_dim},
                 {"epochs", face_training.epochs},
                 {"learning_rate", face_training.learning_rate},
                 {"batch_size", face_training.batch_size},
                 {"test_fraction", face_training.test_fraction},
                 {"augment", face_augment}};
    j["gait"] = {{"blocks", gait_blocks_json(gait.blocks)},
                 {"embedding_dim", gait.embedding_dim},
                 {"window", gait.windowing.window},
                 {"stride", gait.windowing.stride},
                 {"min_confidence", gait.windowing.min_confidence},
                 {"partition", std::string(to_string(gait.partition))},
                 {"activation", std::string(nn::to_string(gait.activation))},
                 {"epochs", gait_training.epochs},
                 {"learning_rate", gait_training.learning_rate},
                 {"batch_size", gait_training.batch_size}};
    j["fusion"] = {{"learning_rate", fusion.learning_rate},
                   {"epochs", fusion.epochs},
                   {"batch_size", fusion.batch_size},
                   {"standardize", fusion.standardize}};
    j["evaluation"] = {{"folds", folds}, {"exclude_failures", exclude_failures}};
    j["bench"] = {{"pd_subjects", bench.pd_subjects},
                  {"control_subjects", bench.control_subjects},
                  {"frames", bench.frames},
                  {"frame_rate", bench.frame_rate},
                  {"expression_scale", bench.expression_scale},
                  {"identity_sigma", bench.identity_sigma},
                  {"image_jitter", bench.image_jitter},
                  {"pd_hypomimia_min", bench.pd_hypomimia_min},
                  {"pd_hypomimia_max", bench.pd_hypomimia_max},
                  {"pd_stride_min", bench.pd_stride_min},
                  {"pd_stride_max", bench.pd_stride_max},
                  {"corpus_per_expression", bench.corpus_per_expression},
                  {"uninformative", std::string(to_string(bench.uninformative))}};
    return j;
}

std::uint64_t PipelineConfig::hash() const {
    json j = to_json();
    j.erase("output_dir");
    j.erase("workers");
    return nn::fnv1a(j.dump());
}

PipelineConfig parse_config(const nlohmann::json& doc) {
    PipelineConfig c;
    Section root(doc, "global");
    root.get("seed", c.seed);
    std::string out_dir;
    root.get("output_dir", out_dir);
    if (!out_dir.empty()) c.output_dir = out_dir;
    root.get("workers", c.workers);
    if (c.workers == 0) root.fail("workers", "must be at least 1");

    if (root.has("generator")) {
        auto s = root.sub("generator");
        s.get("latent_dim", c.generator.latent_dim);
        s.get("height", c.generator.shape.height);
        s.get("width", c.generator.shape.width);
        s.get("channels", c.generator.shape.channels);
        s.get("bias_sigma", c.generator.bias_sigma);
        s.get("seed", c.generator.seed);
        s.finish();
        try {
            c.generator.validate();
        } catch (const Error& e) {
            throw ConfigError("generator", "latent_dim", e.what());
        }
    }
    if (root.has("perceptual")) {
        auto s = root.sub("perceptual");
        s.get("channels", c.perceptual_channels);
        s.finish();
        for (int ch : c.perceptual_channels)
            if (ch < 1) s.fail("channels", "channel counts must be positive");
    }
    if (root.has("inversion")) {
        auto s = root.sub("inversion");
        s.get("mse_weight", c.inversion.mse_weight);
        s.get("perceptual_weights", c.inversion.perceptual_weights);
        s.get("max_iterations", c.inversion.max_iterations);
        s.get("step_size", c.inversion.step_size);
        s.get("step_decay", c.inversion.step_decay);
        s.get("min_step_size", c.inversion.min_step_size);
        s.get("tolerance", c.inversion.tolerance);
        s.get("tolerance_window", c.inversion.tolerance_window);
        s.get_enum("init", c.inversion.init, parse_init_mode);
        s.get("init_scale", c.inversion.init_scale);
        s.finish();
    }
    c.inversion.perceptual_layers = c.inversion.perceptual_weights.size();
    if (c.inversion.perceptual_layers != c.perceptual_channels.size())
        throw ConfigError("inversion", "perceptual_weights",
                          "needs one weight per perceptual layer (" + std::to_string(c.perceptual_channels.size()) +
                              ")");
    try {
        c.inversion.validate();
    } catch (const Error& e) {
        throw ConfigError("inversion", "", e.what());
    }
    if (root.has("direction")) {
        auto s = root.sub("direction");
        s.get_enum("mode", c.direction.mode, [](const std::string& v) { return parse_fit_mode(v); });
        s.get("learning_rate", c.direction.learning_rate);
        s.get("max_epochs", c.direction.max_epochs);
        s.get("tolerance", c.direction.tolerance);
        s.get("l2", c.direction.l2);
        s.get("init_scale", c.direction.init_scale);
        s.finish();
        if (!(c.direction.learning_rate > 0.0)) s.fail("learning_rate", "must be positive");
    }
    if (root.has("edit")) {
        auto s = root.sub("edit");
        s.get("lambda", c.edit_lambda);
        s.finish();
    }
    if (root.has("face")) {
        auto s = root.sub("face");
        s.get("conv_channels", c.face.conv_channels);
        s.get("embedding_dim", c.face.embedding_dim);
        s.get("epochs", c.face_training.epochs);
        s.get("learning_rate", c.face_training.learning_rate);
        s.get("batch_size", c.face_training.batch_size);
        s.get("test_fraction", c.face_training.test_fraction);
        s.get("augment", c.face_augment);
        s.finish();
        if (!(c.face_training.test_fraction > 0.0 && c.face_training.test_fraction < 1.0))
            s.fail("test_fraction", "must lie in (0, 1)");
        if (c.face_training.batch_size == 0) s.fail("batch_size", "must be positive");
    }
    c.face.input = c.generator.shape;
    c.face.validate();
    if (root.has("gait")) {
        auto s = root.sub("gait");
        if (s.has("blocks")) c.gait.blocks = parse_gait_blocks(s.raw("blocks"), s.name());
        s.get("embedding_dim", c.gait.embedding_dim);
        s.get("window", c.gait.windowing.window);
        s.get("stride", c.gait.windowing.stride);
        s.get("min_confidence", c.gait.windowing.min_confidence);
        s.get_enum("partition", c.gait.partition, [](const std::string& v) { return parse_partition_strategy(v); });
        s.get_enum("activation", c.gait.activation, [](const std::string& v) { return nn::parse_activation(v); });
        s.get("epochs", c.gait_training.epochs);
        s.get("learning_rate", c.gait_training.learning_rate);
        s.get("batch_size", c.gait_training.batch_size);
        s.finish();
        if (c.gait.windowing.window < 1) s.fail("window", "must be positive");
        if (c.gait.windowing.stride < 1) s.fail("stride", "must be positive");
        if (c.gait_training.batch_size == 0) s.fail("batch_size", "must be positive");
    }
    c.gait.validate();
    if (root.has("fusion")) {
        auto s = root.sub("fusion");
        s.get("learning_rate", c.fusion.learning_rate);
        s.get("epochs", c.fusion.epochs);
        s.get("batch_size", c.fusion.batch_size);
        s.get("standardize", c.fusion.standardize);
        s.finish();
        if (c.fusion.batch_size == 0) s.fail("batch_size", "must be positive");
    }
    if (root.has("evaluation")) {
        auto s = root.sub("evaluation");
        s.get("folds", c.folds);
        s.get("exclude_failures", c.exclude_failures);
        s.finish();
        if (c.folds < 2) s.fail("folds", "must be at least 2");
    }
    if (root.has("bench")) {
        auto s = root.sub("bench");
        s.get("pd_subjects", c.bench.pd_subjects);
        s.get("control_subjects", c.bench.control_subjects);
        s.get("frames", c.bench.frames);
        s.get("frame_rate", c.bench.frame_rate);
        s.get("expression_scale", c.bench.expression_scale);
        s.get("identity_sigma", c.bench.identity_sigma);
        s.get("image_jitter", c.bench.image_jitter);
        s.get("pd_hypomimia_min", c.bench.pd_hypomimia_min);
        s.get("pd_hypomimia_max", c.bench.pd_hypomimia_max);
        s.get("pd_stride_min", c.bench.pd_stride_min);
        s.get("pd_stride_max", c.bench.pd_stride_max);
        s.get("corpus_per_expression", c.bench.corpus_per_expression);
        s.get_enum("uninformative", c.bench.uninformative, [](const std::string& v) { return parse_uninformative(v); });
        s.finish();
        c.bench.generator = c.generator;
        try {
            c.bench.validate();
        } catch (const Error& e) {
            throw ConfigError("bench", "", e.what());
        }
    }
    root.finish();
    c.bench.generator = c.generator;
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("global", "", "cannot open config file '" + path.string() + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("global", "", "config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

} // namespace mmpd
