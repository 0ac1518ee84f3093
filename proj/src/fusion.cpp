#include "mmpd/fusion.hpp"

#include "mmpd/artifact_io.hpp"
#include "mmpd/binary_io.hpp"
#include "mmpd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mmpd {

nn::ParameterList ModalityHead::parameters() { return {&score_weight, &score_bias, &class_weight, &class_bias}; }

nn::ConstParameterList ModalityHead::parameters() const {
    return {&score_weight, &score_bias, &class_weight, &class_bias};
}

ModalityHead make_modality_head(const std::string& prefix, int dim, std::uint64_t seed) {
    if (dim < 1) throw ShapeError("modality feature dimension must be positive");
    std::mt19937_64 rng(seed);
    ModalityHead h;
    h.score_weight = nn::Parameter(prefix + ".score_weight", dim, 1);
    nn::glorot_init(h.score_weight, rng);
    h.score_bias = nn::Parameter(prefix + ".score_bias", 1, 1);
    h.class_weight = nn::Parameter(prefix + ".class_weight", dim + 1, 2);
    nn::glorot_init(h.class_weight, rng);
    h.class_bias = nn::Parameter(prefix + ".class_bias", 1, 2);
    return h;
}

ModalityOutput modality_forward(const Eigen::VectorXd& feature, const ModalityHead& head) {
    if (feature.size() != head.dim())
        throw ShapeError("feature has dimension " + std::to_string(feature.size()) + ", head expects " +
                         std::to_string(head.dim()));
    ModalityOutput out;
    out.score = feature.dot(head.score_weight.value.col(0)) + head.score_bias.value(0, 0);
    out.fused.resize(feature.size() + 1);
    out.fused << feature, out.score;
    out.logits = head.class_weight.value.transpose() * out.fused + head.class_bias.value.row(0).transpose();
    return out;
}

void modality_backward(const Eigen::VectorXd& feature, const ModalityOutput& out, ModalityHead& head,
                       const Eigen::VectorXd& grad_logits) {
    head.class_weight.grad.noalias() += out.fused * grad_logits.transpose();
    head.class_bias.grad.row(0) += grad_logits.transpose();
    const double grad_score = head.class_weight.value.row(head.dim()).dot(grad_logits);
    head.score_weight.grad.col(0) += grad_score * feature;
    head.score_bias.grad(0, 0) += grad_score;
}

nn::ParameterList HybridFusionParams::parameters() {
    auto list = gait.parameters();
    for (auto* p : face.parameters()) list.push_back(p);
    return list;
}

nn::ConstParameterList HybridFusionParams::parameters() const {
    auto list = gait.parameters();
    for (const auto* p : face.parameters()) list.push_back(p);
    return list;
}

HybridFusionParams make_fusion_params(int gait_dim, int face_dim, std::uint64_t seed) {
    return {make_modality_head("gait", gait_dim, nn::derive_seed(seed, "fusion-gait")),
            make_modality_head("face", face_dim, nn::derive_seed(seed, "fusion-face"))};
}

Eigen::VectorXd hybrid_fuse(const FeatureVector& gait, const FeatureVector& face, const HybridFusionParams& p) {
    if (gait.modality != Modality::gait || face.modality != Modality::face)
        throw ShapeError("hybrid_fuse expects a gait feature and a face feature");
    return modality_forward(gait.values, p.gait).logits + modality_forward(face.values, p.face).logits;
}

FeatureScaler FeatureScaler::identity(int dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

FeatureScaler FeatureScaler::fit(std::span<const Eigen::VectorXd> features) {
    if (features.empty()) throw DataError("cannot fit a scaler on no features");
    const auto d = features.front().size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d), sq = Eigen::VectorXd::Zero(d);
    for (const auto& f : features) mean += f;
    mean /= static_cast<double>(features.size());
    for (const auto& f : features) sq += (f - mean).cwiseAbs2();
    Eigen::VectorXd inv(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double sd = std::sqrt(sq(i) / static_cast<double>(features.size()));
        inv(i) = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    return {mean, inv};
}

Eigen::VectorXd FeatureScaler::apply(const Eigen::VectorXd& f) const {
    if (f.size() != mean.size()) throw ShapeError("scaler dimension mismatch");
    return (f - mean).cwiseProduct(inv_std);
}

Eigen::VectorXd FusionModel::logits(const FeatureVector& gait, const FeatureVector& face, double* gait_score,
                                    double* face_score) const {
    if (gait.modality != Modality::gait || face.modality != Modality::face)
        throw ShapeError("fusion expects a gait feature and a face feature");
    const auto g = modality_forward(gait_scaler.apply(gait.values), params.gait);
    const auto f = modality_forward(face_scaler.apply(face.values), params.face);
    if (gait_score) *gait_score = g.score;
    if (face_score) *face_score = f.score;
    return g.logits + f.logits;
}

void FusionModel::save(const std::filesystem::path& path, std::uint64_t config_hash) const {
    io::BinaryWriter w(path, "MMFU", config_hash);
    w.i64(params.gait.dim());
    w.i64(params.face.dim());
    w.vector(gait_scaler.mean);
    w.vector(gait_scaler.inv_std);
    w.vector(face_scaler.mean);
    w.vector(face_scaler.inv_std);
    io::write_parameters(w, params.parameters());
    w.close();
}

FusionModel FusionModel::load(const std::filesystem::path& path) {
    io::BinaryReader r(path, "MMFU");
    const auto gd = r.i64();
    const auto fd = r.i64();
    if (gd < 1 || fd < 1 || gd > 1 << 20 || fd > 1 << 20) throw FormatError("implausible fusion dimensions");
    FusionModel m;
    m.params = make_fusion_params(static_cast<int>(gd), static_cast<int>(fd), 0);
    m.gait_scaler.mean = r.vector();
    m.gait_scaler.inv_std = r.vector();
    m.face_scaler.mean = r.vector();
    m.face_scaler.inv_std = r.vector();
    if (m.gait_scaler.mean.size() != gd || m.gait_scaler.inv_std.size() != gd || m.face_scaler.mean.size() != fd ||
        m.face_scaler.inv_std.size() != fd)
        throw FormatError("fusion scaler dimensions disagree with the header in '" + path.string() + "'");
    io::read_parameters(r, m.params.parameters());
    r.expect_end();
    return m;
}

namespace {

void require_both_classes(std::span<const FusionSample> samples) {
    bool pd = false, ctrl = false;
    for (const auto& s : samples) (s.label == Diagnosis::pd ? pd : ctrl) = true;
    if (!pd || !ctrl) throw DataError("training needs subjects from both classes");
}

FeatureScaler make_scaler(std::span<const FusionSample> samples, Modality m, bool standardize) {
    std::vector<Eigen::VectorXd> fs;
    for (const auto& s : samples) fs.push_back(m == Modality::gait ? s.gait.values : s.face.values);
    return standardize ? FeatureScaler::fit(fs) : FeatureScaler::identity(static_cast<int>(fs.front().size()));
}

// Shared minibatch Adam loop; `step` returns the sample's logits after accumulating gradients.
template <typename Step>
std::vector<EpochStats> train_heads(std::span<const FusionSample> samples, const FusionTrainConfig& cfg,
                                    const nn::ParameterList& params, Step&& step) {
    if (cfg.batch_size == 0) throw Error("batch size must be positive");
    nn::Adam adam(params, {cfg.learning_rate});
    std::mt19937_64 rng(nn::derive_seed(cfg.seed, "fusion-shuffle"));
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<EpochStats> trace;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            nn::zero_grads(params);
            for (std::size_t i = start; i < end; ++i) {
                const auto& s = samples[order[i]];
                const int label = class_index(s.label);
                double loss = 0.0;
                const Eigen::VectorXd logits = step(s, label, loss);
                if (!std::isfinite(loss))
                    throw NumericalError("non-finite fusion loss in epoch " + std::to_string(epoch + 1), epoch + 1);
                loss_sum += loss;
                if (nn::argmax(logits) == label) ++correct;
            }
            for (auto* p : params) p->grad /= static_cast<double>(end - start);
            adam.step();
        }
        trace.push_back({loss_sum / static_cast<double>(samples.size()),
                         static_cast<double>(correct) / static_cast<double>(samples.size())});
    }
    return trace;
}

} // namespace

FusionTrainResult train_fusion(std::span<const FusionSample> samples, const FusionTrainConfig& cfg) {
    if (samples.empty()) throw DataError("fusion training set is empty");
    require_both_classes(samples);
    FusionTrainResult result;
    auto& model = result.model;
    model.params = make_fusion_params(static_cast<int>(samples.front().gait.dim()),
                                      static_cast<int>(samples.front().face.dim()), cfg.seed);
    model.gait_scaler = make_scaler(samples, Modality::gait, cfg.standardize);
    model.face_scaler = make_scaler(samples, Modality::face, cfg.standardize);

    result.trace = train_heads(samples, cfg, model.params.parameters(),
                               [&](const FusionSample& s, int label, double& loss) {
                                   const Eigen::VectorXd g = model.gait_scaler.apply(s.gait.values);
                                   const Eigen::VectorXd f = model.face_scaler.apply(s.face.values);
                                   const auto go = modality_forward(g, model.params.gait);
                                   const auto fo = modality_forward(f, model.params.face);
                                   const Eigen::VectorXd logits = go.logits + fo.logits;
                                   Eigen::VectorXd grad;
                                   loss = nn::cross_entropy(logits, label, &grad);
                                   modality_backward(g, go, model.params.gait, grad);
                                   modality_backward(f, fo, model.params.face, grad);
                                   return logits;
                               });
    return result;
}

SubjectFeatures extract_subject_features(const SubjectRecord& subject, const GaitClassifier& gait_model,
                                         const FaceClassifier& face_model) {
    if (!subject.has_gait()) throw MissingModality(subject.id, "gait");
    if (!subject.has_face()) throw MissingModality(subject.id, "face");
    SubjectFeatures out;
    out.gait = gait_model.features(load_keypoints(subject.gait));
    std::vector<ImageTensor> images;
    for (const auto& f : subject.faces) images.push_back(io::read_image(f.path));
    out.face = extract_face_features(images, face_model);
    return out;
}

FusionTrainResult train_fusion(const Manifest& manifest, const GaitClassifier& gait_model,
                               const FaceClassifier& face_model, const FusionTrainConfig& cfg) {
    manifest.validate();
    const auto gait_before = nn::checksum(gait_model.all_parameters());
    const auto face_before = nn::checksum(face_model.parameters());
    std::vector<FusionSample> samples;
    for (const auto& s : manifest.subjects) {
        auto f = extract_subject_features(s, gait_model, face_model);
        samples.push_back({std::move(f.gait), std::move(f.face), s.label});
    }
    auto result = train_fusion(samples, cfg);
    result.gait_checksum_before = gait_before;
    result.face_checksum_before = face_before;
    result.gait_checksum_after = nn::checksum(gait_model.all_parameters());
    result.face_checksum_after = nn::checksum(face_model.parameters());
    return result;
}

Eigen::VectorXd UnimodalModel::logits(const FeatureVector& f) const {
    if (f.modality != modality) throw ShapeError("unimodal head received the wrong modality");
    return modality_forward(scaler.apply(f.values), head).logits;
}

UnimodalTrainResult train_unimodal(std::span<const FusionSample> samples, Modality modality,
                                   const FusionTrainConfig& cfg) {
    if (samples.empty()) throw DataError("unimodal training set is empty");
    require_both_classes(samples);
    UnimodalTrainResult result;
    auto& model = result.model;
    model.modality = modality;
    const auto& first = modality == Modality::gait ? samples.front().gait : samples.front().face;
    model.head = make_modality_head(std::string(to_string(modality)), static_cast<int>(first.dim()),
                                    nn::derive_seed(cfg.seed, std::string("unimodal-") + std::string(to_string(modality))));
    model.scaler = make_scaler(samples, modality, cfg.standardize);
    result.trace = train_heads(samples, cfg, model.head.parameters(),
                               [&](const FusionSample& s, int label, double& loss) {
                                   const auto& raw = modality == Modality::gait ? s.gait.values : s.face.values;
                                   const Eigen::VectorXd x = model.scaler.apply(raw);
                                   const auto out = modality_forward(x, model.head);
                                   Eigen::VectorXd grad;
                                   loss = nn::cross_entropy(out.logits, label, &grad);
                                   modality_backward(x, out, model.head, grad);
                                   return out.logits;
                               });
    return result;
}

SubjectPrediction decide(const std::string& subject_id, const Eigen::VectorXd& logits) {
    if (logits.size() != 2 || !logits.allFinite()) throw NumericalError("diagnosis logits must be two finite values", 0);
    SubjectPrediction p;
    p.subject_id = subject_id;
    p.logits = logits;
    const Eigen::VectorXd prob = nn::softmax(logits);
    p.pd_probability = prob(class_index(Diagnosis::pd));
    p.diagnosis = static_cast<Diagnosis>(nn::argmax(logits));
    return p;
}

SubjectPrediction predict_subject(const SubjectRecord& subject, const DiagnosisModels& models) {
    if (!models.gait || !models.face || !models.fusion) throw Error("predict_subject needs gait, face and fusion models");
    const auto f = extract_subject_features(subject, *models.gait, *models.face);
    double gs = 0.0, fs = 0.0;
    auto p = decide(subject.id, models.fusion->logits(f.gait, f.face, &gs, &fs));
    p.gait_score = gs;
    p.face_score = fs;
    return p;
}

} // namespace mmpd
