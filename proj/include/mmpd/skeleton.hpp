#pragma once

// COCO17 keypoint sequences: file format, window preprocessing and the skeleton graph.
//
// Keypoint file (text, one record per file):
//   MMPD-KEYPOINTS 1
//   config <16 hex digits>
//   subject <id without whitespace>
//   fps <frame rate>
//   frames <T>
//   joints 17
//   <T lines of 51 reals: x0 y0 c0 x1 y1 c1 ... x16 y16 c16>
// Header lines must appear in exactly this order.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mmpd {

inline constexpr int kJointCount = 17;

namespace joint {
inline constexpr int nose = 0;
inline constexpr int left_eye = 1, right_eye = 2, left_ear = 3, right_ear = 4;
inline constexpr int left_shoulder = 5, right_shoulder = 6;
inline constexpr int left_elbow = 7, right_elbow = 8;
inline constexpr int left_wrist = 9, right_wrist = 10;
inline constexpr int left_hip = 11, right_hip = 12;
inline constexpr int left_knee = 13, right_knee = 14;
inline constexpr int left_ankle = 15, right_ankle = 16;
} // namespace joint

struct SkeletonSequence {
    std::string subject_id;
    double frame_rate = 30.0;
    Eigen::MatrixXd frames;  // T x 51, column 3*j + {0: x, 1: y, 2: confidence}

    std::size_t length() const { return static_cast<std::size_t>(frames.rows()); }
    double x(Eigen::Index t, int j) const { return frames(t, 3 * j); }
    double y(Eigen::Index t, int j) const { return frames(t, 3 * j + 1); }
    double confidence(Eigen::Index t, int j) const { return frames(t, 3 * j + 2); }

    // Throws DataError naming the first offending frame/joint.
    void validate() const;
};

void write_keypoints(const std::filesystem::path& path, const SkeletonSequence& seq, std::uint64_t config_hash = 0);
SkeletonSequence load_keypoints(const std::filesystem::path& path);

// A normalised window: (T_w * 17) x 3 matrix, row t*17 + j, columns (x, y, confidence).
using GaitWindow = Eigen::MatrixXd;

struct WindowingOptions {
    int window = 64;
    int stride = 32;
    double min_confidence = 0.3;
};

std::size_t window_count(std::size_t frames, const WindowingOptions& opts);

// Slices the sequence into windows, centres every frame on the mid-hip, divides by the
// window's mean torso length and drops windows whose mean confidence is too low.
std::vector<GaitWindow> preprocess(const SkeletonSequence& seq, const WindowingOptions& opts);

enum class PartitionStrategy { uniform, distance, spatial };

PartitionStrategy parse_partition_strategy(std::string_view name);
std::string_view to_string(PartitionStrategy s);

struct SkeletonGraph {
    int joints = kJointCount;
    std::vector<std::pair<int, int>> edges;
    Eigen::MatrixXd adjacency;               // symmetric 0/1, no self loops
    std::vector<Eigen::MatrixXd> partitions; // normalised; partition 0 holds the self loops
    PartitionStrategy strategy = PartitionStrategy::uniform;

    std::size_t partition_count() const { return partitions.size(); }
};

const std::vector<std::pair<int, int>>& coco17_edges();

SkeletonGraph build_adjacency(PartitionStrategy strategy);
SkeletonGraph build_adjacency(std::string_view strategy);
SkeletonGraph build_graph(int joints, std::vector<std::pair<int, int>> edges, PartitionStrategy strategy,
                          int center = 0);

// D^-1/2 (A + I) D^-1/2
Eigen::MatrixXd symmetric_normalized(const Eigen::MatrixXd& adjacency);
// D^-1 (A + I)
Eigen::MatrixXd row_normalized(const Eigen::MatrixXd& adjacency);

// Relabels joint i as perm[i] in every matrix and edge.
SkeletonGraph permute_graph(const SkeletonGraph& graph, const std::vector<int>& perm);
GaitWindow permute_window(const GaitWindow& window, const std::vector<int>& perm);

} // namespace mmpd
