#pragma once

// On-disk formats for images, latent vectors and direction vectors.
//
// Images: a Portable FloatMap (.pfm, 1 or 3 channels, float32) plus a JSON sidecar
// "<name>.pfm.json" holding {format_version, height, width, channels, layout, config_hash}.
// Latents: binary record "MMLV" = header | u64 count | u64 d | count*d f64.
// Directions: binary record "MMDV" = header | tags | diagnostics | vector.

#include "mmpd/latent.hpp"
#include "mmpd/latent_editing.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mmpd::io {

void write_image(const std::filesystem::path& path, const ImageTensor& image, std::uint64_t config_hash = 0);
ImageTensor read_image(const std::filesystem::path& path);

void write_latents(const std::filesystem::path& path, std::span<const LatentVector> latents,
                   std::uint64_t config_hash = 0);
std::vector<LatentVector> read_latents(const std::filesystem::path& path);

void write_direction(const std::filesystem::path& path, const DirectionVector& dir, std::uint64_t config_hash = 0);
DirectionVector read_direction(const std::filesystem::path& path);

} // namespace mmpd::io
