#pragma once

// Spatial-temporal graph convolution network over COCO17 windows.
//
// Each block maps (T*V) x Cin -> (T*V) x Cout:
//   H   = act( sum_p (A_p X) W_p + b )                 spatial graph convolution
//   Z   = concat_b branch_b(H)                          parallel temporal branches
//   out = act( Z + residual(X) )                        identity or 1x1 projection
// Branches are pointwise (1x1), dilated temporal convolution (kernel k, dilation r), or
// 1x1 followed by a stride-1 temporal max pool of width 3. After the last block the map is
// averaged over time and joints and projected to the embedding.

#include "mmpd/common.hpp"
#include "mmpd/nn.hpp"
#include "mmpd/skeleton.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmpd {

enum class BranchKind { pointwise, conv, max_pool };

BranchKind parse_branch_kind(std::string_view name);
std::string_view to_string(BranchKind kind);

struct TemporalBranch {
    BranchKind kind = BranchKind::pointwise;
    int channels = 1;
    int kernel = 1;    // odd; conv and max_pool only
    int dilation = 1;  // conv only
};

struct BlockSpec {
    int channels = 8;
    std::vector<TemporalBranch> branches;
};

// pointwise | kernel 3 dilation 1 | kernel 3 dilation 2 | max-pool 3, channels split evenly
// (remainder to the first branch).
std::vector<TemporalBranch> default_branches(int channels);

struct GaitModelConfig {
    std::vector<BlockSpec> blocks;
    int embedding_dim = 16;
    WindowingOptions windowing;
    PartitionStrategy partition = PartitionStrategy::distance;
    nn::Activation activation = nn::Activation::relu;

    static GaitModelConfig defaults();
    // Throws ConfigError on channel/branch mismatches.
    void validate() const;
};

inline constexpr int kGaitInputChannels = 3;

struct GaitBlockParams {
    std::vector<nn::Parameter> spatial;  // per partition, Cin x Cout
    nn::Parameter spatial_bias;          // 1 x Cout
    std::vector<nn::Parameter> branch_weight;  // conv: (kernel*Cout) x c_b, otherwise Cout x c_b
    std::vector<nn::Parameter> branch_bias;    // 1 x c_b
    std::optional<nn::Parameter> residual;     // Cin x Cout when Cin != Cout
};

struct GaitParams {
    std::vector<GaitBlockParams> blocks;
    nn::Parameter embed_weight;  // C_last x m_g
    nn::Parameter embed_bias;    // 1 x m_g

    nn::ParameterList parameters();
    nn::ConstParameterList parameters() const;
};

GaitParams init_gait_params(const GaitModelConfig& cfg, std::size_t partitions, std::uint64_t seed);

struct GaitBlockTrace {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> propagated;  // A_p X per partition
    Eigen::MatrixXd hidden;                   // after activation
    Eigen::MatrixXd hidden_grad_mask;
    std::vector<Eigen::MatrixXd> pool_input;      // per branch, max-pool branches only
    std::vector<std::vector<Eigen::Index>> pool_argmax;
    Eigen::MatrixXd out_grad_mask;
};

struct GaitWindowTrace {
    int frames = 0;
    std::vector<GaitBlockTrace> blocks;
    Eigen::MatrixXd last;
    Eigen::RowVectorXd pooled;
};

// Embedding of one window; fills `trace` for a later backward pass when non-null.
Eigen::RowVectorXd forward_window(const GaitWindow& window, const SkeletonGraph& graph, const GaitModelConfig& cfg,
                                  const GaitParams& params, GaitWindowTrace* trace = nullptr);

// Accumulates parameter gradients for dL/d(embedding) = grad_embedding.
void backward_window(const GaitWindowTrace& trace, const SkeletonGraph& graph, const GaitModelConfig& cfg,
                     GaitParams& params, const Eigen::RowVectorXd& grad_embedding);

// Mean of per-window embeddings: one m_g-dimensional gait feature per subject.
FeatureVector gait_forward(std::span<const GaitWindow> windows, const SkeletonGraph& graph,
                           const GaitModelConfig& cfg, const GaitParams& params);

} // namespace mmpd
