#include "mmpd/skeleton.hpp"

#include "mmpd/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

namespace mmpd {

void SkeletonSequence::validate() const {
    if (frames.rows() < 1) throw DataError("skeleton sequence '" + subject_id + "' has no frames");
    if (frames.cols() != 3 * kJointCount)
        throw DataError("skeleton sequence '" + subject_id + "' has " + std::to_string(frames.cols() / 3) +
                        " joints per frame, expected 17");
    if (!(frame_rate > 0.0) || !std::isfinite(frame_rate))
        throw DataError("skeleton sequence '" + subject_id + "' has invalid frame rate");
    for (Eigen::Index t = 0; t < frames.rows(); ++t) {
        for (int j = 0; j < kJointCount; ++j) {
            if (!std::isfinite(x(t, j)) || !std::isfinite(y(t, j)) || !std::isfinite(confidence(t, j)))
                throw DataError("frame " + std::to_string(t) + " joint " + std::to_string(j) + ": non-finite value");
            const double c = confidence(t, j);
            if (c < 0.0 || c > 1.0)
                throw DataError("frame " + std::to_string(t) + " joint " + std::to_string(j) + ": confidence " +
                                std::to_string(c) + " outside [0,1]");
        }
    }
}

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view tok, const std::string& where) {
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ParseError(where + ": '" + std::string(tok) + "' is not a number");
    return v;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

std::vector<std::string_view> header_line(std::istream& in, std::string& storage, std::string_view key,
                                          std::size_t values, const std::string& file) {
    if (!std::getline(in, storage)) throw ParseError(file + ": missing header line '" + std::string(key) + "'");
    auto toks = split_ws(storage);
    if (toks.size() != values + 1 || toks[0] != key)
        throw ParseError(file + ": malformed header, expected '" + std::string(key) + "' line, got '" + storage + "'");
    return toks;
}

} // namespace

void write_keypoints(const std::filesystem::path& path, const SkeletonSequence& seq, std::uint64_t config_hash) {
    seq.validate();
    if (seq.subject_id.empty() || seq.subject_id.find_first_of(" \t\r\n") != std::string::npos)
        throw DataError("subject id '" + seq.subject_id + "' must be a non-empty token without whitespace");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
    out << "MMPD-KEYPOINTS 1\n"
        << "config " << hash << '\n'
        << "subject " << seq.subject_id << '\n'
        << "fps " << format_double(seq.frame_rate) << '\n'
        << "frames " << seq.length() << '\n'
        << "joints " << kJointCount << '\n';
    for (Eigen::Index t = 0; t < seq.frames.rows(); ++t) {
        for (Eigen::Index k = 0; k < seq.frames.cols(); ++k) {
            if (k) out << ' ';
            out << format_double(seq.frames(t, k));
        }
        out << '\n';
    }
    if (!out) throw Error("write failed on '" + path.string() + "'");
}

SkeletonSequence load_keypoints(const std::filesystem::path& path) {
    std::ifstream in(path);
    const std::string file = path.string();
    if (!in) throw ParseError("cannot open keypoint file '" + file + "'");
    std::string line;
    auto magic = header_line(in, line, "MMPD-KEYPOINTS", 1, file);
    if (magic[1] != "1") throw ParseError(file + ": unsupported keypoint format version '" + std::string(magic[1]) + "'");
    header_line(in, line, "config", 1, file);

    SkeletonSequence seq;
    seq.subject_id = std::string(header_line(in, line, "subject", 1, file)[1]);
    seq.frame_rate = parse_double(header_line(in, line, "fps", 1, file)[1], file + " fps");
    const double frames = parse_double(header_line(in, line, "frames", 1, file)[1], file + " frames");
    const double joints = parse_double(header_line(in, line, "joints", 1, file)[1], file + " joints");
    if (frames < 1 || frames != std::floor(frames) || frames > 1e7)
        throw ParseError(file + ": invalid frame count");
    if (joints != kJointCount)
        throw ParseError(file + ": header declares " + format_double(joints) + " joints, expected 17");

    const auto t_count = static_cast<Eigen::Index>(frames);
    seq.frames.resize(t_count, 3 * kJointCount);
    for (Eigen::Index t = 0; t < t_count; ++t) {
        if (!std::getline(in, line))
            throw ParseError(file + ": expected " + std::to_string(t_count) + " frames, found " + std::to_string(t));
        const auto toks = split_ws(line);
        if (toks.size() != 3 * kJointCount) {
            std::string detail = toks.size() % 3 == 0 ? " (" + std::to_string(toks.size() / 3) + " joints)" : "";
            throw ParseError(file + ": frame " + std::to_string(t) + " has " + std::to_string(toks.size()) +
                             " values" + detail + ", expected 51 (17 joints x 3)");
        }
        for (std::size_t k = 0; k < toks.size(); ++k)
            seq.frames(t, static_cast<Eigen::Index>(k)) =
                parse_double(toks[k], file + " frame " + std::to_string(t));
    }
    while (std::getline(in, line))
        if (!split_ws(line).empty()) throw ParseError(file + ": unexpected data after the last frame");
    try {
        seq.validate();
    } catch (const DataError& e) {
        throw ParseError(file + ": " + e.what());
    }
    return seq;
}

std::size_t window_count(std::size_t frames, const WindowingOptions& opts) {
    if (opts.window < 1 || opts.stride < 1) throw Error("window and stride must be positive");
    if (frames < static_cast<std::size_t>(opts.window)) return 0;
    return (frames - static_cast<std::size_t>(opts.window)) / static_cast<std::size_t>(opts.stride) + 1;
}

std::vector<GaitWindow> preprocess(const SkeletonSequence& seq, const WindowingOptions& opts) {
    seq.validate();
    if (seq.length() < static_cast<std::size_t>(opts.window))
        throw DataError("sequence '" + seq.subject_id + "' has " + std::to_string(seq.length()) +
                        " frames, shorter than the window length " + std::to_string(opts.window));
    const std::size_t count = window_count(seq.length(), opts);
    std::vector<GaitWindow> out;
    std::string diagnostics;
    for (std::size_t w = 0; w < count; ++w) {
        const Eigen::Index start = static_cast<Eigen::Index>(w) * opts.stride;
        double conf_sum = 0.0, torso_sum = 0.0;
        for (Eigen::Index t = start; t < start + opts.window; ++t) {
            for (int j = 0; j < kJointCount; ++j) conf_sum += seq.confidence(t, j);
            const double hx = 0.5 * (seq.x(t, joint::left_hip) + seq.x(t, joint::right_hip));
            const double hy = 0.5 * (seq.y(t, joint::left_hip) + seq.y(t, joint::right_hip));
            const double sx = 0.5 * (seq.x(t, joint::left_shoulder) + seq.x(t, joint::right_shoulder));
            const double sy = 0.5 * (seq.y(t, joint::left_shoulder) + seq.y(t, joint::right_shoulder));
            torso_sum += std::hypot(sx - hx, sy - hy);
        }
        const double mean_conf = conf_sum / (static_cast<double>(opts.window) * kJointCount);
        const double torso = torso_sum / opts.window;
        if (mean_conf < opts.min_confidence) {
            diagnostics += "\n  window " + std::to_string(w) + " (frames " + std::to_string(start) + "-" +
                           std::to_string(start + opts.window - 1) + "): mean confidence " +
                           std::to_string(mean_conf) + " < " + std::to_string(opts.min_confidence);
            continue;
        }
        if (!(torso > 1e-9)) {
            diagnostics += "\n  window " + std::to_string(w) + ": degenerate torso length " + std::to_string(torso);
            continue;
        }
        GaitWindow win(static_cast<Eigen::Index>(opts.window) * kJointCount, 3);
        for (Eigen::Index t = 0; t < opts.window; ++t) {
            const Eigen::Index f = start + t;
            const double hx = 0.5 * (seq.x(f, joint::left_hip) + seq.x(f, joint::right_hip));
            const double hy = 0.5 * (seq.y(f, joint::left_hip) + seq.y(f, joint::right_hip));
            for (int j = 0; j < kJointCount; ++j) {
                const Eigen::Index r = t * kJointCount + j;
                win(r, 0) = (seq.x(f, j) - hx) / torso;
                win(r, 1) = (seq.y(f, j) - hy) / torso;
                win(r, 2) = seq.confidence(f, j);
            }
        }
        out.push_back(std::move(win));
    }
    if (out.empty())
        throw DataError("sequence '" + seq.subject_id + "': all " + std::to_string(count) +
                        " windows were dropped:" + diagnostics);
    return out;
}

PartitionStrategy parse_partition_strategy(std::string_view name) {
    if (name == "uniform") return PartitionStrategy::uniform;
    if (name == "distance" || name == "distance-partitioned") return PartitionStrategy::distance;
    if (name == "spatial") return PartitionStrategy::spatial;
    throw Error("unknown partition strategy '" + std::string(name) + "' (expected uniform, distance or spatial)");
}

std::string_view to_string(PartitionStrategy s) {
    switch (s) {
    case PartitionStrategy::uniform: return "uniform";
    case PartitionStrategy::distance: return "distance";
    case PartitionStrategy::spatial: return "spatial";
    }
    return "uniform";
}

const std::vector<std::pair<int, int>>& coco17_edges() {
    static const std::vector<std::pair<int, int>> edges{
        {15, 13}, {13, 11}, {16, 14}, {14, 12}, {11, 12}, {5, 11}, {6, 12}, {5, 6}, {5, 7}, {6, 8},
        {7, 9},   {8, 10},  {1, 2},   {0, 1},   {0, 2},   {1, 3},  {2, 4},  {3, 5}, {4, 6}};
    return edges;
}

Eigen::MatrixXd symmetric_normalized(const Eigen::MatrixXd& adjacency) {
    const Eigen::MatrixXd a = adjacency + Eigen::MatrixXd::Identity(adjacency.rows(), adjacency.cols());
    const Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt();
    return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

Eigen::MatrixXd row_normalized(const Eigen::MatrixXd& adjacency) {
    const Eigen::MatrixXd a = adjacency + Eigen::MatrixXd::Identity(adjacency.rows(), adjacency.cols());
    const Eigen::VectorXd inv = a.rowwise().sum().cwiseInverse();
    return inv.asDiagonal() * a;
}

namespace {

Eigen::MatrixXi hop_distances(const Eigen::MatrixXd& adjacency) {
    const auto n = adjacency.rows();
    const int inf = std::numeric_limits<int>::max();
    Eigen::MatrixXi hop = Eigen::MatrixXi::Constant(n, n, inf);
    for (Eigen::Index s = 0; s < n; ++s) {
        std::queue<Eigen::Index> q;
        hop(s, s) = 0;
        q.push(s);
        while (!q.empty()) {
            const auto u = q.front();
            q.pop();
            for (Eigen::Index v = 0; v < n; ++v)
                if (adjacency(u, v) != 0.0 && hop(s, v) == inf) {
                    hop(s, v) = hop(s, u) + 1;
                    q.push(v);
                }
        }
    }
    return hop;
}

} // namespace

SkeletonGraph build_graph(int joints, std::vector<std::pair<int, int>> edges, PartitionStrategy strategy,
                          int center) {
    if (joints < 1) throw Error("graph needs at least one joint");
    SkeletonGraph g;
    g.joints = joints;
    g.strategy = strategy;
    g.adjacency = Eigen::MatrixXd::Zero(joints, joints);
    for (auto [i, j] : edges) {
        if (i < 0 || j < 0 || i >= joints || j >= joints || i == j)
            throw Error("invalid skeleton edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
        g.adjacency(i, j) = 1.0;
        g.adjacency(j, i) = 1.0;
    }
    g.edges = std::move(edges);

    const Eigen::MatrixXd norm = symmetric_normalized(g.adjacency);
    const Eigen::MatrixXi hop = hop_distances(g.adjacency);
    auto masked = [&](auto&& keep) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(joints, joints);
        for (int i = 0; i < joints; ++i)
            for (int j = 0; j < joints; ++j)
                if (hop(i, j) <= 1 && keep(i, j)) m(i, j) = norm(i, j);
        return m;
    };

    switch (strategy) {
    case PartitionStrategy::uniform:
        g.partitions.push_back(norm);
        break;
    case PartitionStrategy::distance:
        g.partitions.push_back(masked([&](int i, int j) { return hop(i, j) == 0; }));
        g.partitions.push_back(masked([&](int i, int j) { return hop(i, j) == 1; }));
        break;
    case PartitionStrategy::spatial: {
        if (center < 0 || center >= joints) throw Error("graph center joint out of range");
        auto level = [&](int i) { return hop(center, i); };
        g.partitions.push_back(masked([&](int i, int j) { return level(j) == level(i); }));
        g.partitions.push_back(masked([&](int i, int j) { return level(j) < level(i); }));
        g.partitions.push_back(masked([&](int i, int j) { return level(j) > level(i); }));
        break;
    }
    }
    return g;
}

SkeletonGraph build_adjacency(PartitionStrategy strategy) {
    return build_graph(kJointCount, coco17_edges(), strategy, joint::nose);
}

SkeletonGraph build_adjacency(std::string_view strategy) { return build_adjacency(parse_partition_strategy(strategy)); }

namespace {

Eigen::MatrixXd permutation_matrix(const std::vector<int>& perm) {
    const auto n = static_cast<Eigen::Index>(perm.size());
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    std::vector<bool> seen(perm.size(), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int k = perm[static_cast<std::size_t>(i)];
        if (k < 0 || k >= n || seen[static_cast<std::size_t>(k)]) throw Error("invalid joint permutation");
        seen[static_cast<std::size_t>(k)] = true;
        p(k, i) = 1.0;
    }
    return p;
}

} // namespace

SkeletonGraph permute_graph(const SkeletonGraph& graph, const std::vector<int>& perm) {
    if (static_cast<int>(perm.size()) != graph.joints) throw Error("permutation size does not match joint count");
    const Eigen::MatrixXd p = permutation_matrix(perm);
    SkeletonGraph out = graph;
    out.adjacency = p * graph.adjacency * p.transpose();
    for (auto& m : out.partitions) m = p * m * p.transpose();
    for (auto& [i, j] : out.edges) {
        i = perm[static_cast<std::size_t>(i)];
        j = perm[static_cast<std::size_t>(j)];
    }
    return out;
}

GaitWindow permute_window(const GaitWindow& window, const std::vector<int>& perm) {
    const auto v = static_cast<Eigen::Index>(perm.size());
    if (window.rows() % v != 0) throw ShapeError("window rows are not a multiple of the joint count");
    permutation_matrix(perm);
    GaitWindow out(window.rows(), window.cols());
    for (Eigen::Index t = 0; t < window.rows() / v; ++t)
        for (Eigen::Index j = 0; j < v; ++j) out.row(t * v + perm[static_cast<std::size_t>(j)]) = window.row(t * v + j);
    return out;
}

} // namespace mmpd
