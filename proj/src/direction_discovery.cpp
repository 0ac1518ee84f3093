#include "mmpd/direction_discovery.hpp"

#include "mmpd/errors.hpp"
#include "mmpd/nn.hpp"

#include <cmath>
#include <random>

namespace mmpd {

namespace {

Eigen::VectorXd class_mean(const std::vector<LatentVector>& xs) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(xs.front().dim()));
    for (const auto& x : xs) m += x.values();
    return m / static_cast<double>(xs.size());
}

double mean_projection(const std::vector<LatentVector>& xs, const Eigen::VectorXd& dir) {
    double s = 0.0;
    for (const auto& x : xs) s += x.values().dot(dir);
    return s / static_cast<double>(xs.size());
}

// Per-sample loss and dL/df for the chosen objective.
struct SampleTerm {
    double loss;
    double dloss_df;
    double sign;  // df/d(a.x)
};

SampleTerm sample_term(double projection, double bias, int label, FitMode mode) {
    if (mode == FitMode::standard) {
        const double f = projection + bias;
        const double p = nn::sigmoid(f);
        const double loss = label == 1 ? -nn::log_sigmoid(f) : -nn::log_sigmoid(-f);
        return {loss, p - label, 1.0};
    }
    const double sign = 1.0 - 2.0 * label;
    const double f = sign * projection + bias;
    const double p = nn::sigmoid(f);
    // -[y log(1-P) + (1-y) log P]
    const double loss = label == 1 ? -nn::log_sigmoid(-f) : -nn::log_sigmoid(f);
    return {loss, p - (1.0 - label), sign};
}

double loss_and_grad(const LabeledLatentSet& data, const Eigen::VectorXd& a, double b, FitMode mode, double l2,
                     Eigen::VectorXd* grad_a, double* grad_b) {
    const double n = static_cast<double>(data.a.size() + data.b.size());
    double loss = 0.0;
    if (grad_a) grad_a->setZero(a.size());
    if (grad_b) *grad_b = 0.0;
    auto accumulate = [&](const std::vector<LatentVector>& xs, int label) {
        for (const auto& x : xs) {
            const auto t = sample_term(x.values().dot(a), b, label, mode);
            loss += t.loss;
            if (grad_a) *grad_a += (t.dloss_df * t.sign) * x.values();
            if (grad_b) *grad_b += t.dloss_df;
        }
    };
    accumulate(data.a, 0);
    accumulate(data.b, 1);
    loss /= n;
    if (grad_a) {
        *grad_a /= n;
        *grad_a += l2 * a;
    }
    if (grad_b) *grad_b /= n;
    return loss + 0.5 * l2 * a.squaredNorm();
}

} // namespace

void LabeledLatentSet::validate() const {
    if (a.empty() || b.empty()) throw DataError("both expression classes need at least one latent");
    const auto d = a.front().dim();
    if (d == 0) throw DataError("latents must have positive dimension");
    for (const auto* xs : {&a, &b})
        for (const auto& x : *xs)
            if (x.dim() != d) throw ShapeError("latent set mixes dimensions " + std::to_string(d) + " and " +
                                               std::to_string(x.dim()));
}

double predict_prob(const LatentVector& latent, int label, const FitState& state) {
    if (latent.dim() != static_cast<std::size_t>(state.weights.size()))
        throw ShapeError("predict_prob: latent dimension " + std::to_string(latent.dim()) + " vs weights " +
                         std::to_string(state.weights.size()));
    if (label != 0 && label != 1) throw DataError("label must be 0 or 1");
    return nn::sigmoid((1.0 - 2.0 * label) * state.weights.dot(latent.values()) + state.bias);
}

double fit_loss(const LabeledLatentSet& data, const FitState& state, FitMode mode, double l2) {
    return loss_and_grad(data, state.weights, state.bias, mode, l2, nullptr, nullptr);
}

FitState fit_logistic(const LabeledLatentSet& data, const FitOptions& opts) {
    data.validate();
    if (!(opts.learning_rate > 0.0)) throw Error("learning rate must be positive");
    const auto d = static_cast<Eigen::Index>(data.dim());

    FitState s;
    s.learning_rate = opts.learning_rate;
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> init(0.0, opts.init_scale);
    s.weights.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) s.weights(i) = init(rng);
    s.bias = init(rng);

    Eigen::VectorXd ga;
    double gb = 0.0;
    double loss = loss_and_grad(data, s.weights, s.bias, opts.mode, opts.l2, &ga, &gb);
    s.initial_loss = loss;
    for (std::size_t epoch = 0; epoch < opts.max_epochs; ++epoch) {
        s.weights -= opts.learning_rate * ga;
        s.bias -= opts.learning_rate * gb;
        const double next = loss_and_grad(data, s.weights, s.bias, opts.mode, opts.l2, &ga, &gb);
        if (!std::isfinite(next)) throw NumericalError("non-finite direction-fitting loss", epoch + 1);
        s.loss_history.push_back(next);
        s.epochs = epoch + 1;
        const bool done = std::abs(next - loss) < opts.tolerance;
        loss = next;
        if (done) {
            s.converged = true;
            break;
        }
    }
    return s;
}

DirectionVector orient_and_normalize(const Eigen::VectorXd& a, const LabeledLatentSet& data) {
    data.validate();
    if (static_cast<std::size_t>(a.size()) != data.dim())
        throw ShapeError("direction dimension " + std::to_string(a.size()) + " does not match latents " +
                         std::to_string(data.dim()));
    const double norm = a.norm();
    if (!(norm >= 1e-12)) throw DegenerateDirection("direction norm " + std::to_string(norm) + " is below 1e-12");

    DirectionVector dir;
    dir.values = a / norm;
    dir.source = data.tag_a;
    dir.target = data.tag_b;
    const double gap = mean_projection(data.b, dir.values) - mean_projection(data.a, dir.values);
    if (gap == 0.0 || !std::isfinite(gap))
        throw DegenerateDirection("classes '" + data.tag_a + "' and '" + data.tag_b +
                                  "' have equal mean projections; orientation undefined");
    if (gap < 0.0) dir.values = -dir.values;
    return dir;
}

DirectionVector fit_direction(const LabeledLatentSet& data, const FitOptions& opts) {
    data.validate();
    const FitState state = fit_logistic(data, opts);

    DirectionDiagnostics diag;
    diag.mode = opts.mode;
    diag.iterations = state.epochs;
    diag.converged = state.converged;
    diag.initial_loss = state.initial_loss;
    diag.final_loss = state.loss_history.empty() ? diag.initial_loss : state.loss_history.back();

    // Coinciding class means leave nothing to orient against.
    const Eigen::VectorXd mean_gap = class_mean(data.b) - class_mean(data.a);
    double scale = 0.0;
    for (const auto* xs : {&data.a, &data.b})
        for (const auto& x : *xs) scale = std::max(scale, x.values().cwiseAbs().maxCoeff());
    const bool means_coincide = mean_gap.norm() <= 1e-12 * std::max(1.0, scale);

    if (!means_coincide) {
        try {
            DirectionVector dir = orient_and_normalize(state.weights, data);
            dir.diagnostics = diag;
            return dir;
        } catch (const DegenerateDirection& e) {
            diag.warning = e.what();
        }
    } else {
        diag.warning = "class means of '" + data.tag_a + "' and '" + data.tag_b + "' coincide; no separating direction";
    }

    DirectionVector dir;
    dir.source = data.tag_a;
    dir.target = data.tag_b;
    const double norm = state.weights.norm();
    dir.values = norm >= 1e-12 ? Eigen::VectorXd(state.weights / norm)
                               : Eigen::VectorXd(Eigen::VectorXd::Unit(state.weights.size(), 0));
    diag.degenerate = true;
    dir.diagnostics = diag;
    return dir;
}

} // namespace mmpd
