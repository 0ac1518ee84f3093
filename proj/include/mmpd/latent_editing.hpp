#pragma once

// Optimisation-based inversion of images into a generator's latent space and
// expression editing by latent arithmetic.

#include "mmpd/latent.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mmpd {

struct ImageShape {
    int height = 0;
    int width = 0;
    int channels = 0;

    std::size_t size() const { return static_cast<std::size_t>(height) * width * channels; }
    bool operator==(const ImageShape&) const = default;
    std::string to_string() const;
};

// Row-major H x W x C pixels in [0,1].
class ImageTensor {
public:
    ImageTensor() = default;
    // Throws ShapeError / DataError when the size does not match or a pixel is outside [0,1].
    ImageTensor(ImageShape shape, Eigen::VectorXd pixels);

    const ImageShape& shape() const { return shape_; }
    const Eigen::VectorXd& pixels() const { return pixels_; }
    double at(int y, int x, int c) const {
        return pixels_((static_cast<Eigen::Index>(y) * shape_.width + x) * shape_.channels + c);
    }

private:
    ImageShape shape_;
    Eigen::VectorXd pixels_;
};

// A differentiable decoder from latents to images. Implementations must be
// deterministic and read-only after construction.
class Generator {
public:
    virtual ~Generator() = default;
    virtual std::size_t latent_dim() const = 0;
    virtual ImageShape output_shape() const = 0;
    virtual ImageTensor forward(const LatentVector& latent) const = 0;
    // Vector-Jacobian product: given dL/d(pixels) at forward(latent), returns dL/d(latent).
    virtual Eigen::VectorXd pullback(const LatentVector& latent, const Eigen::VectorXd& pixel_grad) const = 0;
};

// Fixed multi-layer feature extractor for perceptual distances.
class PerceptualExtractor {
public:
    virtual ~PerceptualExtractor() = default;
    virtual ImageShape input_shape() const = 0;
    virtual std::size_t layer_count() const = 0;
    virtual const std::vector<double>& layer_weights() const = 0;
    // Flattened output of every layer, in order.
    virtual std::vector<Eigen::VectorXd> features(const ImageTensor& image) const = 0;
    // Given dL/d(layer j output) for every layer, returns dL/d(pixels).
    virtual Eigen::VectorXd pullback(const ImageTensor& image, std::span<const Eigen::VectorXd> feature_grads) const = 0;
};

// Single layer whose output is the image itself.
class IdentityExtractor final : public PerceptualExtractor {
public:
    IdentityExtractor(ImageShape shape, double weight = 1.0);
    ImageShape input_shape() const override { return shape_; }
    std::size_t layer_count() const override { return 1; }
    const std::vector<double>& layer_weights() const override { return weights_; }
    std::vector<Eigen::VectorXd> features(const ImageTensor& image) const override;
    Eigen::VectorXd pullback(const ImageTensor& image, std::span<const Eigen::VectorXd> feature_grads) const override;

private:
    ImageShape shape_;
    std::vector<double> weights_;
};

// Desk-scale stand-in for a pretrained VGG trunk: k stacked 3x3 conv + tanh layers with
// fixed seeded filters, 2x2 average pooling after every second layer.
class ConvPerceptualExtractor final : public PerceptualExtractor {
public:
    ConvPerceptualExtractor(ImageShape shape, std::vector<double> layer_weights, std::uint64_t seed,
                            std::vector<int> channels = {});
    ImageShape input_shape() const override { return shape_; }
    std::size_t layer_count() const override { return weights_.size(); }
    const std::vector<double>& layer_weights() const override { return weights_; }
    std::vector<Eigen::VectorXd> features(const ImageTensor& image) const override;
    Eigen::VectorXd pullback(const ImageTensor& image, std::span<const Eigen::VectorXd> feature_grads) const override;

private:
    struct Layer {
        Eigen::MatrixXd weight;  // (9*Cin) x Cout
        Eigen::MatrixXd bias;    // 1 x Cout
        bool pool_before = false;
    };
    ImageShape shape_;
    std::vector<double> weights_;
    std::vector<Layer> layers_;
};

enum class InitMode { zeros, random, warm_start };

struct InversionConfig {
    double mse_weight = 1.0;
    std::size_t perceptual_layers = 4;
    std::vector<double> perceptual_weights{1.0, 1.0, 1.0, 1.0};
    std::size_t max_iterations = 500;
    double step_size = 0.05;
    double step_decay = 0.5;     // applied to the step size whenever a step is rejected
    double min_step_size = 1e-10;
    double tolerance = 1e-6;     // relative objective change over `tolerance_window` iterations
    std::size_t tolerance_window = 10;
    InitMode init = InitMode::zeros;
    double init_scale = 1.0;
    std::uint64_t seed = 0;
    LatentVector warm_start;

    void validate() const;
};

struct InversionResult {
    LatentVector latent;
    std::vector<double> loss_trace;  // objective after each iteration, starting at the initial point
    std::size_t iterations = 0;
    std::size_t rejected_steps = 0;
    bool converged = false;

    double final_loss() const { return loss_trace.back(); }
};

// Sum_j (lambda_j / N_j) * ||C_j(a) - C_j(b)||^2 with the extractor's own weights.
double perceptual_loss(const ImageTensor& a, const ImageTensor& b, const PerceptualExtractor& px);
double perceptual_loss(const ImageTensor& a, const ImageTensor& b, const PerceptualExtractor& px,
                       std::span<const double> weights);
// The same weighted sum on precomputed layer features.
double perceptual_distance(std::span<const Eigen::VectorXd> fa, std::span<const Eigen::VectorXd> fb,
                           std::span<const double> weights);

// Perceptual term plus (mse_weight / N) * ||G(c) - target||^2; fills `grad` when non-null.
double inversion_objective(const LatentVector& latent, const ImageTensor& target, const Generator& g,
                           const PerceptualExtractor& px, const InversionConfig& cfg, Eigen::VectorXd* grad);

// Adam on the latent with step rejection: a step that raises the objective is undone and
// the step size decays, so loss_trace is non-increasing.
InversionResult invert(const ImageTensor& target, const Generator& g, const PerceptualExtractor& px,
                       const InversionConfig& cfg);

// base + lambda * dir
LatentVector edit_latent(const LatentVector& base, const DirectionVector& dir, double lambda);

ImageTensor synthesize(const LatentVector& base, const DirectionVector& dir, double lambda, const Generator& g);

double pixel_mse(const ImageTensor& a, const ImageTensor& b);

} // namespace mmpd
