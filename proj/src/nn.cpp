#include "mmpd/nn.hpp"

#include "mmpd/errors.hpp"

#include <cmath>
#include <cstring>

namespace mmpd::nn {

void zero_grads(const ParameterList& params) {
    for (auto* p : params) p->zero_grad();
}

std::size_t parameter_count(const ConstParameterList& params) {
    std::size_t n = 0;
    for (const auto* p : params) n += static_cast<std::size_t>(p->value.size());
    return n;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t checksum(const ConstParameterList& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* p : params) {
        h = fnv1a(p->name, h);
        const std::int64_t shape[2] = {p->value.rows(), p->value.cols()};
        h = fnv1a({reinterpret_cast<const char*>(shape), sizeof(shape)}, h);
        h = fnv1a({reinterpret_cast<const char*>(p->value.data()),
                   static_cast<std::size_t>(p->value.size()) * sizeof(double)},
                  h);
    }
    return h;
}

void glorot_init(Parameter& p, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
    p.zero_grad();
}

Adam::Adam(ParameterList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
        m_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i];
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
        p.value.array() -= cfg_.learning_rate * (m_[i].array() / c1) /
                           ((v_[i].array() / c2).sqrt() + cfg_.epsilon);
    }
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw Error("unknown activation '" + std::string(name) + "' (expected relu or tanh)");
}

std::string_view to_string(Activation a) {
    return a == Activation::relu ? "relu" : "tanh";
}

Eigen::MatrixXd activate(Eigen::MatrixXd& x, Activation a) {
    Eigen::MatrixXd d(x.rows(), x.cols());
    if (a == Activation::relu) {
        d = (x.array() > 0.0).cast<double>();
        x = x.cwiseMax(0.0);
    } else {
        x = x.array().tanh();
        d = 1.0 - x.array().square();
    }
    return d;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    const double mx = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - mx).exp();
    return e / e.sum();
}

double cross_entropy(const Eigen::VectorXd& logits, int label, Eigen::VectorXd* grad) {
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    if (grad) {
        *grad = (logits.array() - lse).exp();
        (*grad)(label) -= 1.0;
    }
    return lse - logits(label);
}

int argmax(const Eigen::VectorXd& v) {
    // first maximum wins, so exact ties resolve to the lowest index
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;
    return static_cast<int>(best);
}

double log_sigmoid(double z) {
    return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage) {
    std::uint64_t z = global_seed ^ fnv1a(stage);
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace mmpd::nn
