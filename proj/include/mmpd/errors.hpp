#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmpd {

// Base of every error the library throws. `kind()` is a stable machine-readable tag
// used by the CLI error record.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& message) : std::runtime_error(message) {}
    virtual const char* kind() const noexcept { return "error"; }
};

class ShapeError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "shape_error"; }
};

class ParseError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "parse_error"; }
};

class FormatError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "format_error"; }
};

class DataError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "data_error"; }
};

class NumericalError : public Error {
public:
    NumericalError(const std::string& message, std::size_t iteration);
    std::size_t iteration() const noexcept { return iteration_; }
    const char* kind() const noexcept override { return "numerical_error"; }

private:
    std::size_t iteration_;
};

class DegenerateDirection : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "degenerate_direction"; }
};

class MissingModality : public Error {
public:
    MissingModality(const std::string& subject_id, const std::string& modality);
    const std::string& subject_id() const noexcept { return subject_id_; }
    const char* kind() const noexcept override { return "missing_modality"; }

private:
    std::string subject_id_;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& section, const std::string& key, const std::string& message);
    const std::string& section() const noexcept { return section_; }
    const std::string& key() const noexcept { return key_; }
    const char* kind() const noexcept override { return "config_error"; }

private:
    std::string section_;
    std::string key_;
};

} // namespace mmpd
