#include "mmpd/latent_editing.hpp"

#include "mmpd/conv2d.hpp"
#include "mmpd/errors.hpp"

#include <cmath>
#include <random>

namespace mmpd {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

conv::FeatureMap to_feature_map(const ImageTensor& image) {
    const auto& s = image.shape();
    conv::FeatureMap fm;
    fm.height = s.height;
    fm.width = s.width;
    fm.data = Eigen::Map<const RowMajor>(image.pixels().data(), static_cast<Eigen::Index>(s.height) * s.width,
                                         s.channels);
    return fm;
}

Eigen::VectorXd to_pixel_vector(const Eigen::MatrixXd& hw_by_c) {
    RowMajor rm = hw_by_c;
    return Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size());
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

void require_shape(const ImageTensor& img, const ImageShape& expected, const char* what) {
    if (!(img.shape() == expected))
        throw ShapeError(std::string(what) + ": image shape " + img.shape().to_string() + " does not match expected " +
                         expected.to_string());
}

} // namespace

LatentVector::LatentVector(Eigen::VectorXd values) : values_(std::move(values)) {
    if (!values_.allFinite()) throw DataError("latent vector has non-finite entries");
}

LatentVector LatentVector::zeros(std::size_t dim) {
    return LatentVector(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim)));
}

FitMode parse_fit_mode(std::string_view name) {
    if (name == "standard") return FitMode::standard;
    if (name == "paper_faithful" || name == "paper-faithful" || name == "faithful") return FitMode::paper_faithful;
    throw Error("unknown fit mode '" + std::string(name) + "' (expected standard or paper_faithful)");
}

std::string_view to_string(FitMode mode) { return mode == FitMode::standard ? "standard" : "paper_faithful"; }

void require_unit_norm(const DirectionVector& dir, double tolerance) {
    if (dir.values.size() == 0 || !dir.values.allFinite())
        throw ShapeError("direction vector is empty or non-finite");
    const double n = dir.values.norm();
    if (std::abs(n - 1.0) > tolerance)
        throw ShapeError("direction vector must have unit norm, got " + std::to_string(n));
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw ShapeError("cosine_similarity: dimension mismatch");
    const double denom = a.norm() * b.norm();
    if (denom == 0.0) throw DataError("cosine_similarity of a zero vector");
    return a.dot(b) / denom;
}

std::string ImageShape::to_string() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

ImageTensor::ImageTensor(ImageShape shape, Eigen::VectorXd pixels) : shape_(shape), pixels_(std::move(pixels)) {
    if (shape_.height <= 0 || shape_.width <= 0 || shape_.channels <= 0)
        throw ShapeError("image dimensions must be positive, got " + shape_.to_string());
    if (static_cast<std::size_t>(pixels_.size()) != shape_.size())
        throw ShapeError("image " + shape_.to_string() + " needs " + std::to_string(shape_.size()) + " pixels, got " +
                         std::to_string(pixels_.size()));
    for (Eigen::Index i = 0; i < pixels_.size(); ++i) {
        const double v = pixels_(i);
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw DataError("pixel " + std::to_string(i) + " = " + std::to_string(v) + " outside [0,1]");
    }
}

IdentityExtractor::IdentityExtractor(ImageShape shape, double weight) : shape_(shape), weights_{weight} {}

std::vector<Eigen::VectorXd> IdentityExtractor::features(const ImageTensor& image) const {
    require_shape(image, shape_, "IdentityExtractor");
    return {image.pixels()};
}

Eigen::VectorXd IdentityExtractor::pullback(const ImageTensor&, std::span<const Eigen::VectorXd> feature_grads) const {
    return feature_grads[0];
}

ConvPerceptualExtractor::ConvPerceptualExtractor(ImageShape shape, std::vector<double> layer_weights,
                                                 std::uint64_t seed, std::vector<int> channels)
    : shape_(shape), weights_(std::move(layer_weights)) {
    if (weights_.empty()) throw Error("perceptual extractor needs at least one layer");
    for (double w : weights_)
        if (!(w >= 0.0)) throw Error("perceptual layer weights must be nonnegative");
    if (channels.empty()) {
        for (std::size_t j = 0; j < weights_.size(); ++j) channels.push_back(j < 2 ? 4 : 8);
    }
    if (channels.size() != weights_.size()) throw Error("one channel count per perceptual layer is required");

    std::mt19937_64 rng(seed);
    int in_c = shape.channels, h = shape.height, w = shape.width;
    for (std::size_t j = 0; j < weights_.size(); ++j) {
        Layer layer;
        layer.pool_before = j > 0 && j % 2 == 0 && h % 2 == 0 && w % 2 == 0 && h > 2 && w > 2;
        if (layer.pool_before) {
            h /= 2;
            w /= 2;
        }
        std::normal_distribution<double> dist(0.0, 1.5 / std::sqrt(9.0 * in_c));
        layer.weight.resize(9 * in_c, channels[j]);
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
        layer.bias = Eigen::MatrixXd::Zero(1, channels[j]);
        layers_.push_back(std::move(layer));
        in_c = channels[j];
    }
}

std::vector<Eigen::VectorXd> ConvPerceptualExtractor::features(const ImageTensor& image) const {
    require_shape(image, shape_, "ConvPerceptualExtractor");
    conv::FeatureMap x = to_feature_map(image);
    x.data.array() -= 0.5;
    std::vector<Eigen::VectorXd> out;
    for (const auto& layer : layers_) {
        if (layer.pool_before) x = conv::avg_pool2_forward(x);
        x = conv::conv3x3_forward(x, layer.weight, layer.bias);
        x.data = x.data.array().tanh();
        out.push_back(flatten(x.data));
    }
    return out;
}

Eigen::VectorXd ConvPerceptualExtractor::pullback(const ImageTensor& image,
                                                  std::span<const Eigen::VectorXd> feature_grads) const {
    require_shape(image, shape_, "ConvPerceptualExtractor");
    if (feature_grads.size() != layers_.size()) throw ShapeError("one feature gradient per layer is required");

    struct Saved {
        int height, width, in_channels;
        int pre_pool_height, pre_pool_width;
        Eigen::MatrixXd output;
    };
    std::vector<Saved> saved;
    conv::FeatureMap x = to_feature_map(image);
    x.data.array() -= 0.5;
    for (const auto& layer : layers_) {
        Saved s{};
        s.pre_pool_height = x.height;
        s.pre_pool_width = x.width;
        if (layer.pool_before) x = conv::avg_pool2_forward(x);
        s.height = x.height;
        s.width = x.width;
        s.in_channels = x.channels();
        x = conv::conv3x3_forward(x, layer.weight, layer.bias);
        x.data = x.data.array().tanh();
        s.output = x.data;
        saved.push_back(std::move(s));
    }

    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(saved.back().output.rows(), saved.back().output.cols());
    for (std::size_t jj = layers_.size(); jj-- > 0;) {
        const auto& s = saved[jj];
        const auto& fg = feature_grads[jj];
        if (fg.size() != s.output.size()) throw ShapeError("feature gradient size mismatch at layer " + std::to_string(jj));
        g += Eigen::Map<const Eigen::MatrixXd>(fg.data(), s.output.rows(), s.output.cols());
        const Eigen::MatrixXd pre = g.array() * (1.0 - s.output.array().square());
        conv::FeatureMap gin = conv::conv3x3_input_grad(s.height, s.width, s.in_channels, layers_[jj].weight, pre);
        if (layers_[jj].pool_before) gin = conv::avg_pool2_backward(gin, s.pre_pool_height, s.pre_pool_width);
        g = std::move(gin.data);
    }
    return to_pixel_vector(g);
}

void InversionConfig::validate() const {
    if (!(mse_weight >= 0.0)) throw Error("inversion mse_weight must be nonnegative");
    if (perceptual_weights.size() != perceptual_layers)
        throw Error("inversion needs one perceptual weight per layer (" + std::to_string(perceptual_layers) + ")");
    for (double w : perceptual_weights)
        if (!(w >= 0.0)) throw Error("perceptual weights must be nonnegative");
    if (!(step_size > 0.0)) throw Error("inversion step_size must be positive");
    if (!(step_decay > 0.0 && step_decay < 1.0)) throw Error("inversion step_decay must lie in (0,1)");
    if (tolerance_window == 0) throw Error("inversion tolerance_window must be positive");
}

double perceptual_loss(const ImageTensor& a, const ImageTensor& b, const PerceptualExtractor& px) {
    return perceptual_loss(a, b, px, px.layer_weights());
}

double perceptual_loss(const ImageTensor& a, const ImageTensor& b, const PerceptualExtractor& px,
                       std::span<const double> weights) {
    require_shape(a, px.input_shape(), "perceptual_loss (first image)");
    require_shape(b, px.input_shape(), "perceptual_loss (second image)");
    if (weights.size() != px.layer_count())
        throw ShapeError("perceptual_loss: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(px.layer_count()) + " layers");
    return perceptual_distance(px.features(a), px.features(b), weights);
}

double perceptual_distance(std::span<const Eigen::VectorXd> fa, std::span<const Eigen::VectorXd> fb,
                           std::span<const double> weights) {
    if (fa.size() != fb.size() || fa.size() != weights.size())
        throw ShapeError("perceptual_distance: layer counts differ (" + std::to_string(fa.size()) + ", " +
                         std::to_string(fb.size()) + ", " + std::to_string(weights.size()) + " weights)");
    double loss = 0.0;
    for (std::size_t j = 0; j < fa.size(); ++j) {
        if (fa[j].size() != fb[j].size() || fa[j].size() == 0)
            throw ShapeError("perceptual_distance: layer " + std::to_string(j) + " sizes differ or are empty");
        loss += weights[j] / static_cast<double>(fa[j].size()) * (fa[j] - fb[j]).squaredNorm();
    }
    return loss;
}

double inversion_objective(const LatentVector& latent, const ImageTensor& target, const Generator& g,
                           const PerceptualExtractor& px, const InversionConfig& cfg, Eigen::VectorXd* grad) {
    if (latent.dim() != g.latent_dim())
        throw ShapeError("latent has dimension " + std::to_string(latent.dim()) + ", generator expects " +
                         std::to_string(g.latent_dim()));
    require_shape(target, g.output_shape(), "invert");
    if (px.layer_count() != cfg.perceptual_layers)
        throw ShapeError("extractor has " + std::to_string(px.layer_count()) + " layers, config expects " +
                         std::to_string(cfg.perceptual_layers));

    const ImageTensor image = g.forward(latent);
    const auto f_img = px.features(image);
    const auto f_tgt = px.features(target);
    const double n_pixels = static_cast<double>(image.pixels().size());
    const Eigen::VectorXd diff = image.pixels() - target.pixels();

    double loss = cfg.mse_weight / n_pixels * diff.squaredNorm();
    std::vector<Eigen::VectorXd> feature_grads(f_img.size());
    for (std::size_t j = 0; j < f_img.size(); ++j) {
        const double scale = cfg.perceptual_weights[j] / static_cast<double>(f_img[j].size());
        const Eigen::VectorXd d = f_img[j] - f_tgt[j];
        loss += scale * d.squaredNorm();
        feature_grads[j] = 2.0 * scale * d;
    }
    if (grad) {
        Eigen::VectorXd pixel_grad = px.pullback(image, feature_grads);
        pixel_grad += 2.0 * cfg.mse_weight / n_pixels * diff;
        *grad = g.pullback(latent, pixel_grad);
    }
    return loss;
}

InversionResult invert(const ImageTensor& target, const Generator& g, const PerceptualExtractor& px,
                       const InversionConfig& cfg) {
    cfg.validate();
    require_shape(target, g.output_shape(), "invert");
    const auto d = static_cast<Eigen::Index>(g.latent_dim());

    Eigen::VectorXd c;
    switch (cfg.init) {
    case InitMode::zeros:
        c = Eigen::VectorXd::Zero(d);
        break;
    case InitMode::random: {
        std::mt19937_64 rng(cfg.seed);
        std::normal_distribution<double> dist(0.0, cfg.init_scale);
        c.resize(d);
        for (Eigen::Index i = 0; i < d; ++i) c(i) = dist(rng);
        break;
    }
    case InitMode::warm_start:
        if (cfg.warm_start.dim() != g.latent_dim()) throw ShapeError("warm-start latent dimension mismatch");
        c = cfg.warm_start.values();
        break;
    }

    InversionResult result;
    Eigen::VectorXd grad;
    double loss = inversion_objective(LatentVector(c), target, g, px, cfg, &grad);
    if (!std::isfinite(loss)) throw NumericalError("non-finite inversion objective at initialisation", 0);
    result.loss_trace.push_back(loss);

    Eigen::VectorXd m = Eigen::VectorXd::Zero(d), v = Eigen::VectorXd::Zero(d);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-12;
    double step = cfg.step_size;
    long t = 0;

    for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
        if (loss == 0.0) {
            result.converged = true;
            break;
        }
        const Eigen::VectorXd m_next = beta1 * m + (1.0 - beta1) * grad;
        const Eigen::VectorXd v_next = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t + 1));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t + 1));
        const Eigen::VectorXd proposal =
            c - step * ((m_next / c1).array() / ((v_next / c2).array().sqrt() + eps)).matrix();

        Eigen::VectorXd proposal_grad;
        const double proposal_loss = inversion_objective(LatentVector(proposal), target, g, px, cfg, &proposal_grad);
        if (!std::isfinite(proposal_loss)) throw NumericalError("non-finite inversion objective", it);

        if (proposal_loss <= loss) {
            c = proposal;
            loss = proposal_loss;
            grad = std::move(proposal_grad);
            m = m_next;
            v = v_next;
            ++t;
        } else {
            step *= cfg.step_decay;
            ++result.rejected_steps;
        }
        result.loss_trace.push_back(loss);
        result.iterations = it;

        if (step < cfg.min_step_size) {
            result.converged = true;
            break;
        }
        if (it >= cfg.tolerance_window) {
            const double before = result.loss_trace[it - cfg.tolerance_window];
            if (before > 0.0 && (before - loss) / before < cfg.tolerance) {
                result.converged = true;
                break;
            }
        }
    }
    result.latent = LatentVector(std::move(c));
    return result;
}

LatentVector edit_latent(const LatentVector& base, const DirectionVector& dir, double lambda) {
    if (base.dim() != dir.dim())
        throw ShapeError("latent dimension " + std::to_string(base.dim()) + " does not match direction dimension " +
                         std::to_string(dir.dim()));
    require_unit_norm(dir);
    return LatentVector(base.values() + lambda * dir.values);
}

ImageTensor synthesize(const LatentVector& base, const DirectionVector& dir, double lambda, const Generator& g) {
    if (base.dim() != g.latent_dim())
        throw ShapeError("latent dimension " + std::to_string(base.dim()) + " does not match generator dimension " +
                         std::to_string(g.latent_dim()));
    return g.forward(edit_latent(base, dir, lambda));
}

double pixel_mse(const ImageTensor& a, const ImageTensor& b) {
    if (!(a.shape() == b.shape())) throw ShapeError("pixel_mse: shape mismatch");
    return (a.pixels() - b.pixels()).squaredNorm() / static_cast<double>(a.pixels().size());
}

} // namespace mmpd
