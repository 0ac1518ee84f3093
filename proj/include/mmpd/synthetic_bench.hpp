#pragma once

// Synthetic stand-ins for the clinical data and pretrained models: an invertible toy image
// generator with known expression directions, latent cluster samplers and a kinematic
// gait simulator. Magnitudes are fixed defaults with no claim of clinical fidelity.

#include "mmpd/common.hpp"
#include "mmpd/direction_discovery.hpp"
#include "mmpd/face_features.hpp"
#include "mmpd/latent_editing.hpp"
#include "mmpd/manifest.hpp"
#include "mmpd/skeleton.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mmpd {

struct ToyGeneratorSpec {
    std::size_t latent_dim = 512;
    ImageShape shape{32, 32, 1};
    double bias_sigma = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

// pixels = sigmoid(W c + b) with W ~ N(0, 1/d) of full column rank.
class ToyGenerator final : public Generator {
public:
    // Throws NumericalError when the sampled map is rank deficient; reseed and retry.
    explicit ToyGenerator(ToyGeneratorSpec spec);

    const ToyGeneratorSpec& spec() const { return spec_; }
    std::size_t latent_dim() const override { return spec_.latent_dim; }
    ImageShape output_shape() const override { return spec_.shape; }
    ImageTensor forward(const LatentVector& latent) const override;
    Eigen::VectorXd pullback(const LatentVector& latent, const Eigen::VectorXd& pixel_grad) const override;

    // Closed-form inverse W^+ (logit(image) - b); exact on the generator's range.
    LatentVector oracle_inverse(const ImageTensor& image) const;

    const Eigen::MatrixXd& weight() const { return weight_; }
    const Eigen::VectorXd& bias() const { return bias_; }

private:
    ToyGeneratorSpec spec_;
    Eigen::MatrixXd weight_;  // pixels x d
    Eigen::VectorXd bias_;
    Eigen::MatrixXd pinv_;    // d x pixels
};

struct LatentClusters {
    LabeledLatentSet set;
    Eigen::VectorXd oracle;  // (mu_b - mu_a) / |mu_b - mu_a|
};

LatentClusters sample_latent_clusters(const Eigen::VectorXd& mu_a, const Eigen::VectorXd& mu_b, double sigma,
                                      std::size_t n, std::uint64_t seed);

enum class GaitClass { control, parkinsonian };

GaitClass parse_gait_class(std::string_view s);
std::string_view to_string(GaitClass c);

struct GaitSimSpec {
    GaitClass gait_class = GaitClass::control;
    double stride_scale = 1.0;
    double arm_swing_scale = 1.0;
    double tremor_hz = 5.0;
    double tremor_amplitude = 0.0;  // pixels, wrists only
    double cadence_hz = 1.0;
    double noise_sigma = 1.0;       // pixels
    double body_scale = 1.0;        // overall size multiplier
    std::size_t frames = 96;
    double frame_rate = 30.0;
    std::string subject_id = "sim";
    std::uint64_t seed = 0;

    // Class defaults: parkinsonian stride 0.5, arm swing 0.3, 5 Hz wrist tremor of 3.5 px.
    static GaitSimSpec defaults(GaitClass c);
    void validate() const;
};

// Side-view walker with torso length 100 px * body_scale, sinusoidal leg and arm
// oscillation at the cadence, additive wrist tremor and Gaussian coordinate noise.
SkeletonSequence simulate_gait(const GaitSimSpec& spec);

enum class Uninformative { none, gait, face };

Uninformative parse_uninformative(std::string_view s);
std::string_view to_string(Uninformative u);

struct BenchSpec {
    std::size_t pd_subjects = 95;
    std::size_t control_subjects = 95;
    std::size_t frames = 96;
    double frame_rate = 30.0;
    ToyGeneratorSpec generator{64, {32, 32, 1}, 0.5, 0};
    double expression_scale = 3.5;   // norm of each emotion's offset from neutral
    double identity_sigma = 0.3;     // per-subject latent spread
    double image_jitter = 0.15;      // per-image latent noise
    double pd_hypomimia_min = 0.35;  // PD expression displacement scale range
    double pd_hypomimia_max = 0.5;
    double pd_stride_min = 0.4;
    double pd_stride_max = 0.6;
    std::size_t corpus_per_expression = 40;
    Uninformative uninformative = Uninformative::none;
    std::uint64_t seed = 0;

    void validate() const;
};

struct BenchSubject {
    std::string id;
    Diagnosis label = Diagnosis::pd;
    SkeletonSequence gait;
    std::vector<LabeledImage> faces;
};

struct SyntheticBench {
    BenchSpec spec;
    std::vector<BenchSubject> subjects;
    std::map<ExpressionLabel, Eigen::VectorXd> expression_means;  // neutral is the origin
    std::vector<LabeledImage> corpus;                              // expression training corpus
    std::map<ExpressionLabel, std::vector<LatentVector>> corpus_latents;
    ExpressionDirections oracle_directions;                        // neutral -> X

    ToyGenerator generator() const { return ToyGenerator(spec.generator); }
};

SyntheticBench make_bench(const BenchSpec& spec);

struct BenchPaths {
    std::filesystem::path manifest;
    std::filesystem::path corpus;
    std::filesystem::path latents_dir;
    std::filesystem::path oracle_dir;
};

// Writes keypoint files, images, manifest.jsonl, the expression corpus (corpus.jsonl),
// latent sets (latents/<expr>.mmlv) and oracle directions (oracle/neutral_to_<expr>.mmdv).
BenchPaths write_bench(const SyntheticBench& bench, const std::filesystem::path& dir, std::uint64_t config_hash = 0);

} // namespace mmpd
