#include "mmpd/binary_io.hpp"

#include "mmpd/errors.hpp"

#include <cstring>
#include <limits>

namespace mmpd::io {

namespace {
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;
}

BinaryWriter::BinaryWriter(const std::filesystem::path& path, std::string_view magic, std::uint64_t config_hash)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error("cannot open '" + path.string() + "' for writing");
    if (magic.size() != 4) throw Error("record magic must be 4 bytes");
    raw(magic.data(), 4);
    u32(kFormatVersion);
    u64(config_hash);
}

void BinaryWriter::raw(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw Error("write failed on '" + path_.string() + "'");
}

void BinaryWriter::u32(std::uint32_t v) { raw(&v, sizeof v); }
void BinaryWriter::u64(std::uint64_t v) { raw(&v, sizeof v); }
void BinaryWriter::i64(std::int64_t v) { raw(&v, sizeof v); }
void BinaryWriter::f64(double v) { raw(&v, sizeof v); }

void BinaryWriter::str(std::string_view s) {
    u64(s.size());
    raw(s.data(), s.size());
}

void BinaryWriter::matrix(const Eigen::MatrixXd& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

void BinaryWriter::vector(const Eigen::VectorXd& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    raw(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
}

void BinaryWriter::close() {
    out_.close();
    if (!out_) throw Error("closing '" + path_.string() + "' failed");
}

BinaryReader::BinaryReader(const std::filesystem::path& path, std::string_view magic)
    : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open '" + path.string() + "'");
    raw(header_.magic.data(), 4);
    if (std::string_view(header_.magic.data(), 4) != magic)
        throw FormatError("'" + path.string() + "' is not a " + std::string(magic) + " record");
    header_.version = u32();
    if (header_.version != kFormatVersion)
        throw FormatError("'" + path.string() + "' has unsupported format version " +
                          std::to_string(header_.version));
    header_.config_hash = u64();
}

void BinaryReader::raw(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError("truncated record '" + path_.string() + "'");
}

std::uint32_t BinaryReader::u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
std::uint64_t BinaryReader::u64() { std::uint64_t v; raw(&v, sizeof v); return v; }
std::int64_t BinaryReader::i64() { std::int64_t v; raw(&v, sizeof v); return v; }
double BinaryReader::f64() { double v; raw(&v, sizeof v); return v; }

std::string BinaryReader::str() {
    const auto n = u64();
    if (n > kMaxElements) throw FormatError("corrupt string length in '" + path_.string() + "'");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
}

Eigen::MatrixXd BinaryReader::matrix() {
    const auto rows = u64();
    const auto cols = u64();
    if (rows > kMaxElements || cols > kMaxElements || rows * cols > kMaxElements)
        throw FormatError("corrupt matrix shape in '" + path_.string() + "'");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    return m;
}

Eigen::VectorXd BinaryReader::vector() {
    const auto n = u64();
    if (n > kMaxElements) throw FormatError("corrupt vector length in '" + path_.string() + "'");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    raw(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
    return v;
}

void BinaryReader::expect_end() {
    if (in_.peek() != std::char_traits<char>::eof())
        throw FormatError("trailing bytes in '" + path_.string() + "'");
}

void write_parameters(BinaryWriter& w, const nn::ConstParameterList& params) {
    w.u64(params.size());
    for (const auto* p : params) {
        w.str(p->name);
        w.matrix(p->value);
    }
}

void read_parameters(BinaryReader& r, const nn::ParameterList& params) {
    const auto count = r.u64();
    if (count != params.size())
        throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, model expects " +
                          std::to_string(params.size()));
    for (auto* p : params) {
        const auto name = r.str();
        if (name != p->name) throw FormatError("checkpoint parameter '" + name + "' where '" + p->name + "' was expected");
        auto m = r.matrix();
        if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
            throw FormatError("checkpoint parameter '" + name + "' has the wrong shape");
        if (!m.allFinite()) throw FormatError("checkpoint parameter '" + name + "' is not finite");
        p->value = std::move(m);
        p->zero_grad();
    }
}

} // namespace mmpd::io
