#include "mmpd/gait_network.hpp"

#include "mmpd/errors.hpp"

#include <random>

namespace mmpd {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

MatrixXd apply_graph(const MatrixXd& a, const MatrixXd& x, Index frames, Index joints) {
    MatrixXd y(x.rows(), x.cols());
    for (Index t = 0; t < frames; ++t) y.middleRows(t * joints, joints).noalias() = a * x.middleRows(t * joints, joints);
    return y;
}

void add_graph_transpose(const MatrixXd& a, const MatrixXd& g, Index frames, Index joints, MatrixXd& out) {
    for (Index t = 0; t < frames; ++t)
        out.middleRows(t * joints, joints).noalias() += a.transpose() * g.middleRows(t * joints, joints);
}

// Rows [lo, hi) of time steps t for which t + shift stays inside [0, frames).
std::pair<Index, Index> valid_range(Index shift, Index frames) {
    const Index lo = std::max<Index>(0, -shift);
    const Index hi = std::min<Index>(frames, frames - shift);
    return {lo, hi};
}

MatrixXd temporal_conv(const MatrixXd& x, const MatrixXd& w, int kernel, int dilation, Index frames, Index joints) {
    const Index cin = x.cols();
    MatrixXd out = MatrixXd::Zero(x.rows(), w.cols());
    for (int tap = 0; tap < kernel; ++tap) {
        const Index shift = static_cast<Index>(tap - (kernel - 1) / 2) * dilation;
        const auto [lo, hi] = valid_range(shift, frames);
        if (hi <= lo) continue;
        out.middleRows(lo * joints, (hi - lo) * joints).noalias() +=
            x.middleRows((lo + shift) * joints, (hi - lo) * joints) * w.middleRows(tap * cin, cin);
    }
    return out;
}

void temporal_conv_backward(const MatrixXd& x, const MatrixXd& w, const MatrixXd& g, int kernel, int dilation,
                            Index frames, Index joints, MatrixXd& grad_w, MatrixXd& grad_x) {
    const Index cin = x.cols();
    for (int tap = 0; tap < kernel; ++tap) {
        const Index shift = static_cast<Index>(tap - (kernel - 1) / 2) * dilation;
        const auto [lo, hi] = valid_range(shift, frames);
        if (hi <= lo) continue;
        const auto g_rows = g.middleRows(lo * joints, (hi - lo) * joints);
        grad_w.middleRows(tap * cin, cin).noalias() += x.middleRows((lo + shift) * joints, (hi - lo) * joints).transpose() * g_rows;
        grad_x.middleRows((lo + shift) * joints, (hi - lo) * joints).noalias() += g_rows * w.middleRows(tap * cin, cin).transpose();
    }
}

// Stride-1 temporal max pool; argmax holds the source row for every output element.
MatrixXd temporal_max_pool(const MatrixXd& x, int kernel, Index frames, Index joints, std::vector<Index>& argmax) {
    MatrixXd out(x.rows(), x.cols());
    argmax.assign(static_cast<std::size_t>(x.size()), 0);
    const int half = (kernel - 1) / 2;
    for (Index c = 0; c < x.cols(); ++c)
        for (Index t = 0; t < frames; ++t)
            for (Index v = 0; v < joints; ++v) {
                Index best = t * joints + v;
                for (Index s = std::max<Index>(0, t - half); s <= std::min<Index>(frames - 1, t + half); ++s) {
                    const Index r = s * joints + v;
                    if (x(r, c) > x(best, c)) best = r;
                }
                out(t * joints + v, c) = x(best, c);
                argmax[static_cast<std::size_t>(c * x.rows() + t * joints + v)] = best;
            }
    return out;
}

MatrixXd temporal_max_pool_backward(const MatrixXd& g, const std::vector<Index>& argmax) {
    MatrixXd out = MatrixXd::Zero(g.rows(), g.cols());
    for (Index c = 0; c < g.cols(); ++c)
        for (Index r = 0; r < g.rows(); ++r) out(argmax[static_cast<std::size_t>(c * g.rows() + r)], c) += g(r, c);
    return out;
}

} // namespace

BranchKind parse_branch_kind(std::string_view name) {
    if (name == "pointwise") return BranchKind::pointwise;
    if (name == "conv") return BranchKind::conv;
    if (name == "max_pool" || name == "maxpool") return BranchKind::max_pool;
    throw Error("unknown temporal branch kind '" + std::string(name) + "' (expected pointwise, conv or max_pool)");
}

std::string_view to_string(BranchKind kind) {
    switch (kind) {
    case BranchKind::pointwise: return "pointwise";
    case BranchKind::conv: return "conv";
    case BranchKind::max_pool: return "max_pool";
    }
    return "pointwise";
}

std::vector<TemporalBranch> default_branches(int channels) {
    if (channels < 4) throw ConfigError("gait", "channels", "default branches need at least 4 channels");
    const int base = channels / 4;
    const int first = channels - 3 * base;
    return {{BranchKind::pointwise, first, 1, 1},
            {BranchKind::conv, base, 3, 1},
            {BranchKind::conv, base, 3, 2},
            {BranchKind::max_pool, base, 3, 1}};
}

GaitModelConfig GaitModelConfig::defaults() {
    GaitModelConfig cfg;
    cfg.blocks = {{8, default_branches(8)}, {16, default_branches(16)}};
    cfg.embedding_dim = 16;
    return cfg;
}

void GaitModelConfig::validate() const {
    if (blocks.empty()) throw ConfigError("gait", "blocks", "at least one block is required");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        const std::string key = "blocks[" + std::to_string(i) + "]";
        if (b.channels < 1) throw ConfigError("gait", key + ".channels", "must be positive");
        if (b.branches.empty()) throw ConfigError("gait", key + ".branches", "at least one temporal branch is required");
        int sum = 0;
        for (const auto& br : b.branches) {
            if (br.channels < 1) throw ConfigError("gait", key + ".branches", "branch channels must be positive");
            if (br.kernel < 1 || br.kernel % 2 == 0)
                throw ConfigError("gait", key + ".branches", "branch kernel must be a positive odd number");
            if (br.dilation < 1) throw ConfigError("gait", key + ".branches", "branch dilation must be positive");
            sum += br.channels;
        }
        if (sum != b.channels)
            throw ConfigError("gait", key + ".branches",
                              "branch channels sum to " + std::to_string(sum) + " but the block has " +
                                  std::to_string(b.channels) + " output channels");
    }
    if (embedding_dim < 1) throw ConfigError("gait", "embedding_dim", "must be positive");
    if (windowing.window < 1) throw ConfigError("gait", "window", "must be positive");
    if (windowing.stride < 1) throw ConfigError("gait", "stride", "must be positive");
    if (!(windowing.min_confidence >= 0.0 && windowing.min_confidence <= 1.0))
        throw ConfigError("gait", "min_confidence", "must lie in [0,1]");
}

nn::ParameterList GaitParams::parameters() {
    nn::ParameterList out;
    for (auto& b : blocks) {
        for (auto& p : b.spatial) out.push_back(&p);
        out.push_back(&b.spatial_bias);
        for (std::size_t i = 0; i < b.branch_weight.size(); ++i) {
            out.push_back(&b.branch_weight[i]);
            out.push_back(&b.branch_bias[i]);
        }
        if (b.residual) out.push_back(&*b.residual);
    }
    out.push_back(&embed_weight);
    out.push_back(&embed_bias);
    return out;
}

nn::ConstParameterList GaitParams::parameters() const {
    auto list = const_cast<GaitParams*>(this)->parameters();
    return {list.begin(), list.end()};
}

GaitParams init_gait_params(const GaitModelConfig& cfg, std::size_t partitions, std::uint64_t seed) {
    cfg.validate();
    if (partitions == 0) throw Error("graph has no partitions");
    std::mt19937_64 rng(seed);
    GaitParams params;
    int cin = kGaitInputChannels;
    for (std::size_t bi = 0; bi < cfg.blocks.size(); ++bi) {
        const auto& spec = cfg.blocks[bi];
        const std::string prefix = "block" + std::to_string(bi) + ".";
        GaitBlockParams bp;
        for (std::size_t p = 0; p < partitions; ++p) {
            bp.spatial.emplace_back(prefix + "spatial" + std::to_string(p), cin, spec.channels);
            nn::glorot_init(bp.spatial.back(), rng);
        }
        bp.spatial_bias = nn::Parameter(prefix + "spatial_bias", 1, spec.channels);
        for (std::size_t k = 0; k < spec.branches.size(); ++k) {
            const auto& br = spec.branches[k];
            const int rows = br.kind == BranchKind::conv ? br.kernel * spec.channels : spec.channels;
            bp.branch_weight.emplace_back(prefix + "branch" + std::to_string(k), rows, br.channels);
            nn::glorot_init(bp.branch_weight.back(), rng);
            bp.branch_bias.emplace_back(prefix + "branch_bias" + std::to_string(k), 1, br.channels);
        }
        if (cin != spec.channels) {
            bp.residual = nn::Parameter(prefix + "residual", cin, spec.channels);
            nn::glorot_init(*bp.residual, rng);
        }
        params.blocks.push_back(std::move(bp));
        cin = spec.channels;
    }
    params.embed_weight = nn::Parameter("embed_weight", cin, cfg.embedding_dim);
    nn::glorot_init(params.embed_weight, rng);
    params.embed_bias = nn::Parameter("embed_bias", 1, cfg.embedding_dim);
    return params;
}

Eigen::RowVectorXd forward_window(const GaitWindow& window, const SkeletonGraph& graph, const GaitModelConfig& cfg,
                                  const GaitParams& params, GaitWindowTrace* trace) {
    const Index joints = graph.joints;
    if (window.cols() != kGaitInputChannels || window.rows() == 0 || window.rows() % joints != 0)
        throw ShapeError("gait window must be (T*" + std::to_string(joints) + ") x 3, got " +
                         std::to_string(window.rows()) + "x" + std::to_string(window.cols()));
    if (params.blocks.size() != cfg.blocks.size()) throw ShapeError("gait parameters do not match the block count");
    const Index frames = window.rows() / joints;
    if (trace) {
        trace->frames = static_cast<int>(frames);
        trace->blocks.assign(cfg.blocks.size(), {});
    }

    MatrixXd x = window;
    for (std::size_t bi = 0; bi < cfg.blocks.size(); ++bi) {
        const auto& spec = cfg.blocks[bi];
        const auto& bp = params.blocks[bi];
        if (bp.spatial.size() != graph.partition_count())
            throw ShapeError("block " + std::to_string(bi) + " has " + std::to_string(bp.spatial.size()) +
                             " spatial kernels for a graph with " + std::to_string(graph.partition_count()) +
                             " partitions");
        if (bp.spatial.front().value.rows() != x.cols())
            throw ShapeError("block " + std::to_string(bi) + " expects " +
                             std::to_string(bp.spatial.front().value.rows()) + " input channels, got " +
                             std::to_string(x.cols()));

        MatrixXd g = MatrixXd::Zero(x.rows(), spec.channels);
        std::vector<MatrixXd> propagated;
        for (std::size_t p = 0; p < graph.partition_count(); ++p) {
            MatrixXd ax = apply_graph(graph.partitions[p], x, frames, joints);
            g.noalias() += ax * bp.spatial[p].value;
            if (trace) propagated.push_back(std::move(ax));
        }
        g.rowwise() += bp.spatial_bias.value.row(0);
        MatrixXd h_mask = nn::activate(g, cfg.activation);
        const MatrixXd& h = g;

        MatrixXd z(x.rows(), spec.channels);
        std::vector<MatrixXd> pool_input(spec.branches.size());
        std::vector<std::vector<Index>> pool_argmax(spec.branches.size());
        Index offset = 0;
        for (std::size_t k = 0; k < spec.branches.size(); ++k) {
            const auto& br = spec.branches[k];
            const auto& w = bp.branch_weight[k].value;
            auto dst = z.middleCols(offset, br.channels);
            switch (br.kind) {
            case BranchKind::pointwise:
                dst.noalias() = h * w;
                dst.rowwise() += bp.branch_bias[k].value.row(0);
                break;
            case BranchKind::conv:
                dst = temporal_conv(h, w, br.kernel, br.dilation, frames, joints);
                dst.rowwise() += bp.branch_bias[k].value.row(0);
                break;
            case BranchKind::max_pool: {
                MatrixXd pre = h * w;
                pre.rowwise() += bp.branch_bias[k].value.row(0);
                dst = temporal_max_pool(pre, br.kernel, frames, joints, pool_argmax[k]);
                if (trace) pool_input[k] = std::move(pre);
                break;
            }
            }
            offset += br.channels;
        }

        MatrixXd s = bp.residual ? MatrixXd(z + x * bp.residual->value) : MatrixXd(z + x);
        MatrixXd out_mask = nn::activate(s, cfg.activation);
        if (trace) {
            auto& bt = trace->blocks[bi];
            bt.input = std::move(x);
            bt.propagated = std::move(propagated);
            bt.hidden = h;
            bt.hidden_grad_mask = std::move(h_mask);
            bt.pool_input = std::move(pool_input);
            bt.pool_argmax = std::move(pool_argmax);
            bt.out_grad_mask = std::move(out_mask);
        }
        x = std::move(s);
    }

    const Eigen::RowVectorXd pooled = x.colwise().mean();
    Eigen::RowVectorXd embedding = pooled * params.embed_weight.value + params.embed_bias.value.row(0);
    if (trace) {
        trace->last = std::move(x);
        trace->pooled = pooled;
    }
    return embedding;
}

void backward_window(const GaitWindowTrace& trace, const SkeletonGraph& graph, const GaitModelConfig& cfg,
                     GaitParams& params, const Eigen::RowVectorXd& grad_embedding) {
    const Index joints = graph.joints;
    const Index frames = trace.frames;
    if (trace.blocks.size() != cfg.blocks.size()) throw ShapeError("gait trace does not match the configuration");

    params.embed_weight.grad.noalias() += trace.pooled.transpose() * grad_embedding;
    params.embed_bias.grad.row(0) += grad_embedding;
    const Eigen::RowVectorXd grad_pooled = grad_embedding * params.embed_weight.value.transpose();
    MatrixXd grad_out = grad_pooled.replicate(trace.last.rows(), 1) / static_cast<double>(trace.last.rows());

    for (std::size_t bi = cfg.blocks.size(); bi-- > 0;) {
        const auto& spec = cfg.blocks[bi];
        const auto& bt = trace.blocks[bi];
        auto& bp = params.blocks[bi];

        const MatrixXd grad_s = grad_out.cwiseProduct(bt.out_grad_mask);
        MatrixXd grad_x;
        if (bp.residual) {
            bp.residual->grad.noalias() += bt.input.transpose() * grad_s;
            grad_x = grad_s * bp.residual->value.transpose();
        } else {
            grad_x = grad_s;
        }

        MatrixXd grad_h = MatrixXd::Zero(bt.hidden.rows(), bt.hidden.cols());
        Index offset = 0;
        for (std::size_t k = 0; k < spec.branches.size(); ++k) {
            const auto& br = spec.branches[k];
            auto& w = bp.branch_weight[k];
            const MatrixXd gz = grad_s.middleCols(offset, br.channels);
            switch (br.kind) {
            case BranchKind::pointwise:
                w.grad.noalias() += bt.hidden.transpose() * gz;
                bp.branch_bias[k].grad.row(0) += gz.colwise().sum();
                grad_h.noalias() += gz * w.value.transpose();
                break;
            case BranchKind::conv:
                temporal_conv_backward(bt.hidden, w.value, gz, br.kernel, br.dilation, frames, joints, w.grad, grad_h);
                bp.branch_bias[k].grad.row(0) += gz.colwise().sum();
                break;
            case BranchKind::max_pool: {
                const MatrixXd gp = temporal_max_pool_backward(gz, bt.pool_argmax[k]);
                w.grad.noalias() += bt.hidden.transpose() * gp;
                bp.branch_bias[k].grad.row(0) += gp.colwise().sum();
                grad_h.noalias() += gp * w.value.transpose();
                break;
            }
            }
            offset += br.channels;
        }

        const MatrixXd grad_g = grad_h.cwiseProduct(bt.hidden_grad_mask);
        bp.spatial_bias.grad.row(0) += grad_g.colwise().sum();
        for (std::size_t p = 0; p < graph.partition_count(); ++p) {
            bp.spatial[p].grad.noalias() += bt.propagated[p].transpose() * grad_g;
            add_graph_transpose(graph.partitions[p], grad_g * bp.spatial[p].value.transpose(), frames, joints, grad_x);
        }
        grad_out = std::move(grad_x);
    }
}

FeatureVector gait_forward(std::span<const GaitWindow> windows, const SkeletonGraph& graph,
                           const GaitModelConfig& cfg, const GaitParams& params) {
    if (windows.empty()) throw DataError("gait_forward needs at least one window");
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(cfg.embedding_dim);
    for (const auto& w : windows) sum += forward_window(w, graph, cfg, params);
    FeatureVector f;
    f.modality = Modality::gait;
    f.values = (sum / static_cast<double>(windows.size())).transpose();
    return f;
}

} // namespace mmpd
