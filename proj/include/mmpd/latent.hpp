#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <string_view>

namespace mmpd {

// A point in a generator's latent space.
class LatentVector {
public:
    LatentVector() = default;
    explicit LatentVector(Eigen::VectorXd values);
    static LatentVector zeros(std::size_t dim);

    std::size_t dim() const { return static_cast<std::size_t>(values_.size()); }
    const Eigen::VectorXd& values() const { return values_; }
    Eigen::VectorXd& values() { return values_; }

private:
    Eigen::VectorXd values_;
};

enum class FitMode { paper_faithful, standard };

FitMode parse_fit_mode(std::string_view name);
std::string_view to_string(FitMode mode);

struct DirectionDiagnostics {
    FitMode mode = FitMode::standard;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    bool degenerate = false;
    std::string warning;
};

// Unit-norm latent direction pointing from the `source` expression to `target`.
struct DirectionVector {
    Eigen::VectorXd values;
    std::string source;
    std::string target;
    DirectionDiagnostics diagnostics;

    std::size_t dim() const { return static_cast<std::size_t>(values.size()); }
};

// Throws ShapeError when the vector is not unit norm within `tolerance` or not finite.
void require_unit_norm(const DirectionVector& dir, double tolerance = 1e-9);

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

} // namespace mmpd
