#include "mmpd/errors.hpp"

namespace mmpd {

NumericalError::NumericalError(const std::string& message, std::size_t iteration)
    : Error(message + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

MissingModality::MissingModality(const std::string& subject_id, const std::string& modality)
    : Error("subject '" + subject_id + "' is missing the " + modality + " modality"),
      subject_id_(subject_id) {}

ConfigError::ConfigError(const std::string& section, const std::string& key, const std::string& message)
    : Error("config [" + section + "] key '" + key + "': " + message), section_(section), key_(key) {}

} // namespace mmpd
