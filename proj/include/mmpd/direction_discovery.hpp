#pragma once

// Fits the latent direction that carries expression A to expression B with a
// logistic model over latent vectors.
//
// Two objectives are available:
//  - standard: ordinary logistic regression, B is the positive class,
//    f = a.x + b, cross-entropy loss.
//  - paper_faithful: f = (1 - 2y) a.x + b and per-sample loss
//    -[y log(1 - P) + (1 - y) log P], exactly as the published listing accumulates it.
//    Under this objective both classes are pushed towards positive projections, so the
//    resulting direction carries no orientation guarantee beyond the final sign fix.
// Both modes return the fitted weight vector normalised and oriented A -> B; the bias is
// discarded.

#include "mmpd/latent.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mmpd {

// label 0 for `a`, label 1 for `b`.
struct LabeledLatentSet {
    std::vector<LatentVector> a;
    std::vector<LatentVector> b;
    std::string tag_a = "A";
    std::string tag_b = "B";

    std::size_t dim() const { return a.empty() ? 0 : a.front().dim(); }
    // Throws DataError if either class is empty or dimensions differ.
    void validate() const;
};

struct FitOptions {
    FitMode mode = FitMode::standard;
    double learning_rate = 0.01;
    std::size_t max_epochs = 2000;
    double tolerance = 1e-8;  // stop once |loss change| falls below this
    double l2 = 0.0;          // optional ridge penalty (l2/2)*||a||^2
    double init_scale = 0.01;
    std::uint64_t seed = 0;
};

struct FitState {
    Eigen::VectorXd weights;  // a
    double bias = 0.0;        // b
    double learning_rate = 0.01;
    std::size_t epochs = 0;
    double initial_loss = 0.0;
    std::vector<double> loss_history;  // one entry per completed epoch
    bool converged = false;
};

// sigma((1 - 2*label) * a.latent + b)
double predict_prob(const LatentVector& latent, int label, const FitState& state);

// Mean loss of the chosen objective at the current state (plus the ridge term).
double fit_loss(const LabeledLatentSet& data, const FitState& state, FitMode mode, double l2 = 0.0);

// Full-batch gradient descent on the mean per-sample loss.
FitState fit_logistic(const LabeledLatentSet& data, const FitOptions& opts);

// a / ||a||, flipped so that mean projection of B strictly exceeds that of A.
// Throws DegenerateDirection if ||a|| < 1e-12 or the class projections tie.
DirectionVector orient_and_normalize(const Eigen::VectorXd& a, const LabeledLatentSet& data);

// Runs fit_logistic then orient_and_normalize. Degenerate data (class means that
// coincide) yields a flagged result instead of an exception.
DirectionVector fit_direction(const LabeledLatentSet& data, const FitOptions& opts);

} // namespace mmpd
