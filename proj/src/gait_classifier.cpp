#include "mmpd/gait_classifier.hpp"

#include "mmpd/binary_io.hpp"
#include "mmpd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mmpd {

GaitClassifier::GaitClassifier(GaitModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), graph_(build_adjacency(cfg_.partition)) {
    cfg_.validate();
    params_ = init_gait_params(cfg_, graph_.partition_count(), seed);
    std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
    head_weight_ = nn::Parameter("head_weight", cfg_.embedding_dim, 2);
    nn::glorot_init(head_weight_, rng);
    head_bias_ = nn::Parameter("head_bias", 1, 2);
}

std::vector<GaitWindow> GaitClassifier::windows(const SkeletonSequence& seq) const {
    return preprocess(seq, cfg_.windowing);
}

FeatureVector GaitClassifier::features(const SkeletonSequence& seq) const {
    const auto w = windows(seq);
    return features(w);
}

FeatureVector GaitClassifier::features(std::span<const GaitWindow> windows) const {
    return gait_forward(windows, graph_, cfg_, params_);
}

Eigen::VectorXd GaitClassifier::head_logits(const Eigen::RowVectorXd& embedding) const {
    return (embedding * head_weight_.value + head_bias_.value).transpose();
}

nn::ParameterList GaitClassifier::head_parameters() { return {&head_weight_, &head_bias_}; }

nn::ParameterList GaitClassifier::all_parameters() {
    auto list = params_.parameters();
    list.push_back(&head_weight_);
    list.push_back(&head_bias_);
    return list;
}

nn::ConstParameterList GaitClassifier::all_parameters() const {
    auto list = const_cast<GaitClassifier*>(this)->all_parameters();
    return {list.begin(), list.end()};
}

void GaitClassifier::save(const std::filesystem::path& path, std::uint64_t config_hash) const {
    io::BinaryWriter w(path, "MMGC", config_hash);
    w.u64(cfg_.blocks.size());
    for (const auto& b : cfg_.blocks) {
        w.i64(b.channels);
        w.u64(b.branches.size());
        for (const auto& br : b.branches) {
            w.str(to_string(br.kind));
            w.i64(br.channels);
            w.i64(br.kernel);
            w.i64(br.dilation);
        }
    }
    w.i64(cfg_.embedding_dim);
    w.i64(cfg_.windowing.window);
    w.i64(cfg_.windowing.stride);
    w.f64(cfg_.windowing.min_confidence);
    w.str(to_string(cfg_.partition));
    w.str(nn::to_string(cfg_.activation));
    io::write_parameters(w, all_parameters());
    w.close();
}

GaitClassifier GaitClassifier::load(const std::filesystem::path& path) {
    io::BinaryReader r(path, "MMGC");
    GaitModelConfig cfg;
    const auto blocks = r.u64();
    if (blocks == 0 || blocks > 64) throw FormatError("implausible block count in '" + path.string() + "'");
    for (std::uint64_t i = 0; i < blocks; ++i) {
        BlockSpec b;
        b.channels = static_cast<int>(r.i64());
        const auto branches = r.u64();
        if (branches > 64) throw FormatError("implausible branch count in '" + path.string() + "'");
        for (std::uint64_t k = 0; k < branches; ++k) {
            TemporalBranch br;
            br.kind = parse_branch_kind(r.str());
            br.channels = static_cast<int>(r.i64());
            br.kernel = static_cast<int>(r.i64());
            br.dilation = static_cast<int>(r.i64());
            b.branches.push_back(br);
        }
        cfg.blocks.push_back(std::move(b));
    }
    cfg.embedding_dim = static_cast<int>(r.i64());
    cfg.windowing.window = static_cast<int>(r.i64());
    cfg.windowing.stride = static_cast<int>(r.i64());
    cfg.windowing.min_confidence = r.f64();
    cfg.partition = parse_partition_strategy(r.str());
    cfg.activation = nn::parse_activation(r.str());
    GaitClassifier model(std::move(cfg), 0);
    io::read_parameters(r, model.all_parameters());
    r.expect_end();
    return model;
}

GaitTrainResult train_gait_classifier(std::span<const GaitSample> samples, const GaitModelConfig& cfg,
                                      const GaitTrainOptions& opts) {
    bool has_pd = false, has_control = false;
    for (const auto& s : samples) (s.label == Diagnosis::pd ? has_pd : has_control) = true;
    if (!has_pd || !has_control) throw DataError("gait training needs subjects from both classes");
    if (opts.batch_size == 0) throw Error("batch size must be positive");

    GaitClassifier model(cfg, opts.seed);
    struct Item {
        GaitWindow window;
        int label;
    };
    std::vector<Item> items;
    for (const auto& s : samples)
        for (auto& w : model.windows(s.sequence)) items.push_back({std::move(w), class_index(s.label)});

    GaitTrainResult result{std::move(model), {}};
    auto& m = result.model;
    auto params = m.all_parameters();
    auto head = m.head_parameters();
    nn::Adam adam(params, {opts.learning_rate});
    std::mt19937_64 rng(nn::derive_seed(opts.seed, "gait-shuffle"));
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t end = std::min(order.size(), start + opts.batch_size);
            nn::zero_grads(params);
            for (std::size_t i = start; i < end; ++i) {
                const auto& item = items[order[i]];
                GaitWindowTrace trace;
                const Eigen::RowVectorXd emb = forward_window(item.window, m.graph(), m.config(), m.params(), &trace);
                const Eigen::VectorXd logits = m.head_logits(emb);
                Eigen::VectorXd dlogits;
                const double loss = nn::cross_entropy(logits, item.label, &dlogits);
                if (!std::isfinite(loss)) throw NumericalError("non-finite gait training loss", epoch + 1);
                loss_sum += loss;
                if (nn::argmax(logits) == item.label) ++correct;
                head[0]->grad.noalias() += emb.transpose() * dlogits.transpose();
                head[1]->grad.row(0) += dlogits.transpose();
                const Eigen::RowVectorXd demb = dlogits.transpose() * head[0]->value.transpose();
                backward_window(trace, m.graph(), m.config(), m.params(), demb);
            }
            const double scale = 1.0 / static_cast<double>(end - start);
            for (auto* p : params) p->grad *= scale;
            adam.step();
        }
        result.trace.push_back({loss_sum / static_cast<double>(items.size()),
                                static_cast<double>(correct) / static_cast<double>(items.size())});
    }
    return result;
}

} // namespace mmpd
