#include "mmpd/common.hpp"

#include "mmpd/errors.hpp"

namespace mmpd {

Diagnosis parse_diagnosis(std::string_view s) {
    if (s == "PD" || s == "pd") return Diagnosis::pd;
    if (s == "non-PD" || s == "non_pd" || s == "nonPD" || s == "control") return Diagnosis::non_pd;
    throw ParseError("unknown diagnosis label '" + std::string(s) + "' (expected PD or non-PD)");
}

std::string_view to_string(Diagnosis d) { return d == Diagnosis::pd ? "PD" : "non-PD"; }

std::string_view to_string(Modality m) { return m == Modality::gait ? "gait" : "face"; }

} // namespace mmpd
