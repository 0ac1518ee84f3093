#pragma once

// Small training toolkit shared by the gait, face and fusion models: parameters with
// gradient buffers, an Adam optimizer, softmax/cross-entropy and parameter checksums.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmpd::nn {

struct Parameter {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;

    Parameter() = default;
    Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), value(Eigen::MatrixXd::Zero(rows, cols)), grad(Eigen::MatrixXd::Zero(rows, cols)) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParameterList = std::vector<Parameter*>;
using ConstParameterList = std::vector<const Parameter*>;

void zero_grads(const ParameterList& params);
std::size_t parameter_count(const ConstParameterList& params);

// FNV-1a over names, shapes and raw value bytes. Bitwise equality of parameters
// implies equal checksums.
std::uint64_t checksum(const ConstParameterList& params);

// Glorot-uniform initialisation for a fan_in x fan_out weight matrix.
void glorot_init(Parameter& p, std::mt19937_64& rng);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    Adam(ParameterList params, AdamConfig cfg);
    void step();
    const AdamConfig& config() const { return cfg_; }

private:
    ParameterList params_;
    AdamConfig cfg_;
    std::vector<Eigen::MatrixXd> m_;
    std::vector<Eigen::MatrixXd> v_;
    long t_ = 0;
};

enum class Activation { relu, tanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

// Applies the activation in place and returns the derivative mask d(act)/d(input).
Eigen::MatrixXd activate(Eigen::MatrixXd& x, Activation a);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Cross-entropy of softmax(logits) against `label`; writes dL/dlogits when grad != nullptr.
double cross_entropy(const Eigen::VectorXd& logits, int label, Eigen::VectorXd* grad);

int argmax(const Eigen::VectorXd& v);

double log_sigmoid(double z);
double sigmoid(double z);

// Seeds for named pipeline stages: splitmix64(global ^ fnv1a(stage)).
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage);
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

} // namespace mmpd::nn
