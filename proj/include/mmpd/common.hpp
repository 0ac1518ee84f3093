#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>

namespace mmpd {

// Class index 0 is PD; exact ties between logits resolve to PD.
enum class Diagnosis : int { pd = 0, non_pd = 1 };

Diagnosis parse_diagnosis(std::string_view s);
std::string_view to_string(Diagnosis d);
inline int class_index(Diagnosis d) { return static_cast<int>(d); }

enum class Modality { gait, face };

std::string_view to_string(Modality m);

struct FeatureVector {
    Modality modality = Modality::gait;
    Eigen::VectorXd values;

    std::size_t dim() const { return static_cast<std::size_t>(values.size()); }
};

} // namespace mmpd
