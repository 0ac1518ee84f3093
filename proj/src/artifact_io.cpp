#include "mmpd/artifact_io.hpp"

#include "mmpd/binary_io.hpp"
#include "mmpd/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mmpd::io {

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    auto p = path;
    p += ".json";
    return p;
}

} // namespace

void write_image(const std::filesystem::path& path, const ImageTensor& image, std::uint64_t config_hash) {
    const auto& s = image.shape();
    if (s.channels != 1 && s.channels != 3)
        throw ShapeError("PFM images need 1 or 3 channels, got " + std::to_string(s.channels));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << (s.channels == 1 ? "Pf" : "PF") << '\n' << s.width << ' ' << s.height << '\n' << "-1.0\n";
    // PFM scanlines run bottom to top
    std::vector<float> row(static_cast<std::size_t>(s.width) * s.channels);
    for (int y = s.height - 1; y >= 0; --y) {
        for (int x = 0; x < s.width; ++x)
            for (int c = 0; c < s.channels; ++c)
                row[static_cast<std::size_t>(x) * s.channels + c] = static_cast<float>(image.at(y, x, c));
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw Error("write failed on '" + path.string() + "'");

    nlohmann::json side = {{"format_version", kFormatVersion},
                           {"height", s.height},
                           {"width", s.width},
                           {"channels", s.channels},
                           {"layout", "HWC row-major"},
                           {"config_hash", config_hash}};
    std::ofstream sc(sidecar_path(path));
    sc << side.dump(2) << '\n';
    if (!sc) throw Error("cannot write sidecar for '" + path.string() + "'");
}

ImageTensor read_image(const std::filesystem::path& path) {
    std::ifstream sc(sidecar_path(path));
    if (!sc) throw FormatError("missing shape sidecar '" + sidecar_path(path).string() + "'");
    nlohmann::json side;
    try {
        sc >> side;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed sidecar for '" + path.string() + "': " + e.what());
    }
    if (side.value("format_version", 0u) != kFormatVersion)
        throw FormatError("unsupported image format version in '" + path.string() + "'");
    const ImageShape shape{side.at("height").get<int>(), side.at("width").get<int>(), side.at("channels").get<int>()};

    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    in >> magic >> w >> h >> scale;
    in.get();
    if (!in || (magic != "Pf" && magic != "PF")) throw FormatError("'" + path.string() + "' is not a PFM file");
    const int c = magic == "Pf" ? 1 : 3;
    if (w != shape.width || h != shape.height || c != shape.channels)
        throw FormatError("PFM header of '" + path.string() + "' disagrees with its sidecar shape " + shape.to_string());
    if (scale >= 0.0) throw FormatError("big-endian PFM is not supported: '" + path.string() + "'");

    Eigen::VectorXd pixels(static_cast<Eigen::Index>(shape.size()));
    std::vector<float> row(static_cast<std::size_t>(w) * c);
    for (int y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!in) throw FormatError("truncated PFM data in '" + path.string() + "'");
        for (std::size_t i = 0; i < row.size(); ++i)
            pixels(static_cast<Eigen::Index>(static_cast<std::size_t>(y) * row.size() + i)) = row[i];
    }
    return ImageTensor(shape, std::move(pixels));
}

void write_latents(const std::filesystem::path& path, std::span<const LatentVector> latents,
                   std::uint64_t config_hash) {
    if (latents.empty()) throw DataError("refusing to write an empty latent set");
    const auto d = latents.front().dim();
    BinaryWriter w(path, "MMLV", config_hash);
    w.u64(latents.size());
    w.u64(d);
    for (const auto& l : latents) {
        if (l.dim() != d) throw ShapeError("latent set has mixed dimensions");
        for (Eigen::Index i = 0; i < l.values().size(); ++i) w.f64(l.values()(i));
    }
    w.close();
}

std::vector<LatentVector> read_latents(const std::filesystem::path& path) {
    BinaryReader r(path, "MMLV");
    const auto count = r.u64();
    const auto d = r.u64();
    if (count == 0 || d == 0 || count > (1u << 24) || d > (1u << 24))
        throw FormatError("implausible latent set header in '" + path.string() + "'");
    std::vector<LatentVector> out;
    out.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(d));
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.f64();
        out.emplace_back(std::move(v));
    }
    r.expect_end();
    return out;
}

void write_direction(const std::filesystem::path& path, const DirectionVector& dir, std::uint64_t config_hash) {
    BinaryWriter w(path, "MMDV", config_hash);
    w.str(dir.source);
    w.str(dir.target);
    const auto& dg = dir.diagnostics;
    w.str(to_string(dg.mode));
    w.f64(dg.initial_loss);
    w.f64(dg.final_loss);
    w.u64(dg.iterations);
    w.u32(dg.converged ? 1 : 0);
    w.u32(dg.degenerate ? 1 : 0);
    w.str(dg.warning);
    w.vector(dir.values);
    w.close();
}

DirectionVector read_direction(const std::filesystem::path& path) {
    BinaryReader r(path, "MMDV");
    DirectionVector dir;
    dir.source = r.str();
    dir.target = r.str();
    auto& dg = dir.diagnostics;
    dg.mode = parse_fit_mode(r.str());
    dg.initial_loss = r.f64();
    dg.final_loss = r.f64();
    dg.iterations = r.u64();
    dg.converged = r.u32() != 0;
    dg.degenerate = r.u32() != 0;
    dg.warning = r.str();
    dir.values = r.vector();
    r.expect_end();
    if (!dg.degenerate) require_unit_norm(dir);
    return dir;
}

} // namespace mmpd::io
