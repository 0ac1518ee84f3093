#pragma once

// Versioned little-endian binary records. Every artifact starts with
//   magic[4] | u32 format_version | u64 config_hash
// followed by a kind-specific body written through BinaryWriter.

#include "mmpd/nn.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

namespace mmpd::io {

inline constexpr std::uint32_t kFormatVersion = 1;

struct RecordHeader {
    std::array<char, 4> magic{};
    std::uint32_t version = kFormatVersion;
    std::uint64_t config_hash = 0;
};

class BinaryWriter {
public:
    BinaryWriter(const std::filesystem::path& path, std::string_view magic, std::uint64_t config_hash);

    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void i64(std::int64_t v);
    void f64(double v);
    void str(std::string_view s);
    void matrix(const Eigen::MatrixXd& m);
    void vector(const Eigen::VectorXd& v);
    void close();

private:
    void raw(const void* data, std::size_t n);
    std::filesystem::path path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    // Throws FormatError when the magic or version do not match.
    BinaryReader(const std::filesystem::path& path, std::string_view magic);

    const RecordHeader& header() const { return header_; }
    std::uint32_t u32();
    std::uint64_t u64();
    std::int64_t i64();
    double f64();
    std::string str();
    Eigen::MatrixXd matrix();
    Eigen::VectorXd vector();
    // Throws unless the whole file has been consumed.
    void expect_end();

private:
    void raw(void* data, std::size_t n);
    std::filesystem::path path_;
    std::ifstream in_;
    RecordHeader header_;
};

// count | (name, matrix)*
void write_parameters(BinaryWriter& w, const nn::ConstParameterList& params);
// Overwrites values of an already-shaped parameter list; names and shapes must match.
void read_parameters(BinaryReader& r, const nn::ParameterList& params);

} // namespace mmpd::io
