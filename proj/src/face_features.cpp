#include "mmpd/face_features.hpp"

#include "mmpd/binary_io.hpp"
#include "mmpd/conv2d.hpp"
#include "mmpd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

namespace mmpd {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::array<std::string_view, kExpressionCount> kExpressionNames{
    "neutral", "anger", "disgust", "fear", "happiness", "sadness", "surprise"};

conv::FeatureMap image_map(const ImageTensor& image) {
    const auto& s = image.shape();
    conv::FeatureMap fm{s.height, s.width,
                        Eigen::Map<const RowMajor>(image.pixels().data(),
                                                   static_cast<Eigen::Index>(s.height) * s.width, s.channels)};
    fm.data.array() -= 0.5;
    return fm;
}

} // namespace

ExpressionLabel parse_expression(std::string_view name) {
    for (int i = 0; i < kExpressionCount; ++i)
        if (kExpressionNames[static_cast<std::size_t>(i)] == name) return static_cast<ExpressionLabel>(i);
    throw ParseError("unknown expression '" + std::string(name) + "'");
}

std::string_view to_string(ExpressionLabel e) { return kExpressionNames[static_cast<std::size_t>(e)]; }

const std::array<ExpressionLabel, 6>& emotional_expressions() {
    static const std::array<ExpressionLabel, 6> all{ExpressionLabel::anger,     ExpressionLabel::disgust,
                                                    ExpressionLabel::fear,      ExpressionLabel::happiness,
                                                    ExpressionLabel::sadness,   ExpressionLabel::surprise};
    return all;
}

void FaceBackboneConfig::validate() const {
    if (input.height <= 0 || input.width <= 0 || input.channels <= 0)
        throw ConfigError("face", "input", "image dimensions must be positive");
    const int div = 1 << conv_channels.size();
    if (input.height % div != 0 || input.width % div != 0)
        throw ConfigError("face", "conv_channels",
                          "input " + input.to_string() + " is not divisible by 2^" + std::to_string(conv_channels.size()));
    for (int c : conv_channels)
        if (c < 1) throw ConfigError("face", "conv_channels", "channel counts must be positive");
    if (embedding_dim < 2) throw ConfigError("face", "embedding_dim", "must be at least 2");
    if (classes != kExpressionCount) throw ConfigError("face", "classes", "the expression head has 7 classes");
}

FaceClassifier::FaceClassifier(FaceBackboneConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    int cin = cfg_.input.channels, h = cfg_.input.height, w = cfg_.input.width;
    for (std::size_t l = 0; l < cfg_.conv_channels.size(); ++l) {
        conv_weight_.emplace_back("conv" + std::to_string(l), 9 * cin, cfg_.conv_channels[l]);
        nn::glorot_init(conv_weight_.back(), rng);
        conv_bias_.emplace_back("conv_bias" + std::to_string(l), 1, cfg_.conv_channels[l]);
        cin = cfg_.conv_channels[l];
        h /= 2;
        w /= 2;
    }
    embed_weight_ = nn::Parameter("embed_weight", static_cast<Eigen::Index>(h) * w * cin, cfg_.embedding_dim);
    nn::glorot_init(embed_weight_, rng);
    embed_bias_ = nn::Parameter("embed_bias", 1, cfg_.embedding_dim);
    head_weight_ = nn::Parameter("head_weight", cfg_.embedding_dim, cfg_.classes);
    nn::glorot_init(head_weight_, rng);
    head_bias_ = nn::Parameter("head_bias", 1, cfg_.classes);
}

Eigen::VectorXd FaceClassifier::forward(const ImageTensor& image, Trace& trace) const {
    if (!(image.shape() == cfg_.input))
        throw ShapeError("face classifier expects " + cfg_.input.to_string() + " images, got " +
                         image.shape().to_string());
    trace = Trace{};
    conv::FeatureMap x = image_map(image);
    for (std::size_t l = 0; l < conv_weight_.size(); ++l) {
        Eigen::MatrixXd cols;
        conv::FeatureMap y = conv::conv3x3_forward(x, conv_weight_[l].value, conv_bias_[l].value, &cols);
        trace.relu_mask.push_back(nn::activate(y.data, nn::Activation::relu));
        trace.cols.push_back(std::move(cols));
        trace.conv_hw.push_back({y.height, y.width});
        x = conv::avg_pool2_forward(y);
    }
    trace.flat = Eigen::Map<const Eigen::RowVectorXd>(x.data.data(), x.data.size());
    trace.embedding = (trace.flat * embed_weight_.value + embed_bias_.value).array().tanh();
    return (trace.embedding * head_weight_.value + head_bias_.value).transpose();
}

void FaceClassifier::backward(const Trace& trace, const Eigen::VectorXd& grad_logits) {
    const Eigen::RowVectorXd gl = grad_logits.transpose();
    head_weight_.grad.noalias() += trace.embedding.transpose() * gl;
    head_bias_.grad.row(0) += gl;
    const Eigen::RowVectorXd ge =
        (gl * head_weight_.value.transpose()).array() * (1.0 - trace.embedding.array().square());
    embed_weight_.grad.noalias() += trace.flat.transpose() * ge;
    embed_bias_.grad.row(0) += ge;
    const Eigen::RowVectorXd gflat = ge * embed_weight_.value.transpose();

    const auto& last_hw = trace.conv_hw.back();
    conv::FeatureMap g{last_hw[0] / 2, last_hw[1] / 2,
                       Eigen::Map<const Eigen::MatrixXd>(gflat.data(),
                                                         static_cast<Eigen::Index>(last_hw[0] / 2) * (last_hw[1] / 2),
                                                         conv_weight_.back().value.cols())};
    for (std::size_t l = conv_weight_.size(); l-- > 0;) {
        const auto [h, w] = trace.conv_hw[l];
        conv::FeatureMap gy = conv::avg_pool2_backward(g, h, w);
        gy.data.array() *= trace.relu_mask[l].array();
        const int cin = static_cast<int>(conv_weight_[l].value.rows() / 9);
        if (l == 0) {
            conv_weight_[l].grad.noalias() += trace.cols[l].transpose() * gy.data;
            conv_bias_[l].grad.row(0) += gy.data.colwise().sum();
        } else {
            g = conv::conv3x3_backward(trace.cols[l], h, w, cin, conv_weight_[l].value, gy.data, conv_weight_[l].grad,
                                       conv_bias_[l].grad);
        }
    }
}

Eigen::RowVectorXd FaceClassifier::embed(const ImageTensor& image) const {
    Trace t;
    forward(image, t);
    return t.embedding;
}

Eigen::VectorXd FaceClassifier::logits(const ImageTensor& image) const {
    Trace t;
    return forward(image, t);
}

nn::ParameterList FaceClassifier::parameters() {
    nn::ParameterList out;
    for (std::size_t l = 0; l < conv_weight_.size(); ++l) {
        out.push_back(&conv_weight_[l]);
        out.push_back(&conv_bias_[l]);
    }
    for (auto* p : {&embed_weight_, &embed_bias_, &head_weight_, &head_bias_}) out.push_back(p);
    return out;
}

nn::ConstParameterList FaceClassifier::parameters() const {
    auto list = const_cast<FaceClassifier*>(this)->parameters();
    return {list.begin(), list.end()};
}

void FaceClassifier::save(const std::filesystem::path& path, std::uint64_t config_hash) const {
    io::BinaryWriter w(path, "MMFC", config_hash);
    w.i64(cfg_.input.height);
    w.i64(cfg_.input.width);
    w.i64(cfg_.input.channels);
    w.u64(cfg_.conv_channels.size());
    for (int c : cfg_.conv_channels) w.i64(c);
    w.i64(cfg_.embedding_dim);
    w.i64(cfg_.classes);
    io::write_parameters(w, parameters());
    w.close();
}

FaceClassifier FaceClassifier::load(const std::filesystem::path& path) {
    io::BinaryReader r(path, "MMFC");
    FaceBackboneConfig cfg;
    cfg.input.height = static_cast<int>(r.i64());
    cfg.input.width = static_cast<int>(r.i64());
    cfg.input.channels = static_cast<int>(r.i64());
    const auto n = r.u64();
    if (n > 16) throw FormatError("implausible conv stage count in '" + path.string() + "'");
    cfg.conv_channels.clear();
    for (std::uint64_t i = 0; i < n; ++i) cfg.conv_channels.push_back(static_cast<int>(r.i64()));
    cfg.embedding_dim = static_cast<int>(r.i64());
    cfg.classes = static_cast<int>(r.i64());
    FaceClassifier model(std::move(cfg), 0);
    io::read_parameters(r, model.parameters());
    r.expect_end();
    return model;
}

std::string ClassifierReport::table() const {
    char line[160];
    std::ostringstream out;
    std::snprintf(line, sizeof line, "%-12s %12s %12s %12s\n", "Model", "Parameters", "Train Acc.", "Test Acc.");
    out << line;
    std::snprintf(line, sizeof line, "%-12s %9.4f MB %12.4f %12.4f\n", model_name.c_str(), parameters_mb,
                  train_accuracy, test_accuracy);
    out << line;
    return out.str();
}

FaceTrainResult train_expression_classifier(std::span<const LabeledImage> dataset, const FaceBackboneConfig& cfg,
                                            const FaceTrainOptions& opts) {
    cfg.validate();
    if (opts.batch_size == 0) throw Error("batch size must be positive");
    if (!(opts.test_fraction > 0.0 && opts.test_fraction < 1.0)) throw Error("test_fraction must lie in (0,1)");

    std::array<std::vector<std::size_t>, kExpressionCount> by_class;
    for (std::size_t i = 0; i < dataset.size(); ++i) by_class[static_cast<std::size_t>(dataset[i].label)].push_back(i);
    const auto present = std::count_if(by_class.begin(), by_class.end(), [](const auto& v) { return !v.empty(); });
    if (present < 2) throw DataError("expression dataset must cover at least two classes");

    std::mt19937_64 rng(nn::derive_seed(opts.seed, "face-split"));
    std::vector<std::size_t> train, test;
    for (int c = 0; c < kExpressionCount; ++c) {
        auto idx = by_class[static_cast<std::size_t>(c)];
        if (idx.empty()) continue;
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_test = static_cast<std::size_t>(std::lround(opts.test_fraction * static_cast<double>(idx.size())));
        if (n_test == 0 || n_test >= idx.size())
            throw DataError("degenerate split: class '" + std::string(to_string(static_cast<ExpressionLabel>(c))) +
                            "' with " + std::to_string(idx.size()) + " images leaves an empty train or test side");
        test.insert(test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());

    FaceTrainResult result{FaceClassifier(cfg, nn::derive_seed(opts.seed, "face-init")), {}};
    auto& model = result.model;
    auto params = model.parameters();
    nn::Adam adam(params, {opts.learning_rate});
    std::vector<std::size_t> order = train;
    FaceClassifier::Trace trace;
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t end = std::min(order.size(), start + opts.batch_size);
            nn::zero_grads(params);
            for (std::size_t i = start; i < end; ++i) {
                const auto& item = dataset[order[i]];
                const Eigen::VectorXd logits = model.forward(item.image, trace);
                Eigen::VectorXd g;
                const double loss = nn::cross_entropy(logits, static_cast<int>(item.label), &g);
                if (!std::isfinite(loss)) throw NumericalError("non-finite expression training loss", epoch + 1);
                loss_sum += loss;
                model.backward(trace, g);
            }
            for (auto* p : params) p->grad /= static_cast<double>(end - start);
            adam.step();
        }
        result.report.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
    }

    auto accuracy = [&](const std::vector<std::size_t>& idx) {
        std::size_t ok = 0;
        for (auto i : idx)
            if (nn::argmax(model.logits(dataset[i].image)) == static_cast<int>(dataset[i].label)) ++ok;
        return static_cast<double>(ok) / static_cast<double>(idx.size());
    };
    auto& rep = result.report;
    rep.parameter_count = nn::parameter_count(std::as_const(model).parameters());
    rep.parameters_mb = static_cast<double>(rep.parameter_count) * 4.0 / (1024.0 * 1024.0);
    rep.train_size = train.size();
    rep.test_size = test.size();
    rep.train_accuracy = accuracy(train);
    rep.test_accuracy = accuracy(test);
    return result;
}

FeatureVector extract_face_features(std::span<const ImageTensor> images, const FaceClassifier& model) {
    if (images.empty()) throw DataError("face feature extraction needs at least one image");
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(model.config().embedding_dim);
    for (const auto& img : images) sum += model.embed(img);
    FeatureVector f;
    f.modality = Modality::face;
    f.values = (sum / static_cast<double>(images.size())).transpose();
    return f;
}

std::vector<LabeledImage> augment_from_latent(const LatentVector& neutral_latent, const ExpressionDirections& directions,
                                              const Generator& g, double lambda) {
    std::vector<LabeledImage> out;
    for (auto e : emotional_expressions()) {
        const auto it = directions.find(e);
        if (it == directions.end())
            throw DataError("missing neutral->" + std::string(to_string(e)) + " direction for augmentation");
        const auto& dir = it->second;
        if (dir.source != "neutral" || dir.target != to_string(e))
            throw DataError("direction registered for '" + std::string(to_string(e)) + "' is tagged " + dir.source +
                            "->" + dir.target);
        out.push_back({synthesize(neutral_latent, dir, lambda, g), e});
    }
    return out;
}

std::vector<LabeledImage> augment_with_synthesized(const ImageTensor& neutral, const ExpressionDirections& directions,
                                                   const Generator& g, const PerceptualExtractor& px,
                                                   const InversionConfig& inversion, double lambda) {
    for (auto e : emotional_expressions())
        if (!directions.count(e))
            throw DataError("missing neutral->" + std::string(to_string(e)) + " direction for augmentation");
    const auto inv = invert(neutral, g, px, inversion);
    return augment_from_latent(inv.latent, directions, g, lambda);
}

} // namespace mmpd
