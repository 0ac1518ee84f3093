#pragma once

// Subject manifests: one JSON object per line,
//   {"id": "...", "label": "PD"|"non-PD", "source": "clinical"|"control"|"synthetic",
//    "gait": "<keypoint file>", "faces": [{"path": "<image>", "expression": "<label>"}, ...]}
// Relative paths are resolved against the manifest's directory.

#include "mmpd/common.hpp"
#include "mmpd/face_features.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mmpd {

enum class SubjectSource { clinical, control, synthetic };

SubjectSource parse_subject_source(std::string_view s);
std::string_view to_string(SubjectSource s);

struct FaceImageRef {
    std::filesystem::path path;
    ExpressionLabel expression = ExpressionLabel::neutral;
};

struct SubjectRecord {
    std::string id;
    Diagnosis label = Diagnosis::pd;
    SubjectSource source = SubjectSource::clinical;
    std::filesystem::path gait;        // empty when the modality is missing
    std::vector<FaceImageRef> faces;   // empty when the modality is missing

    bool has_gait() const { return !gait.empty(); }
    bool has_face() const { return !faces.empty(); }
};

struct Manifest {
    std::vector<SubjectRecord> subjects;

    // Throws DataError on duplicate ids.
    void validate() const;
    const SubjectRecord& find(const std::string& id) const;
    std::size_t count(Diagnosis label) const;
};

Manifest load_manifest(const std::filesystem::path& path);
// Paths are written relative to the manifest's directory when possible.
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

} // namespace mmpd

namespace mmpd {

// Expression corpus: one {"path": "...", "expression": "..."} object per line.
std::vector<FaceImageRef> load_expression_corpus(const std::filesystem::path& path);
void save_expression_corpus(const std::filesystem::path& path, const std::vector<FaceImageRef>& images);

} // namespace mmpd
