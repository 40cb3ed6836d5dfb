#pragma once

#include <filesystem>

#include "fpnr/cascade.hpp"

namespace fpnr {

inline constexpr char kCheckpointMagic[9] = "FPNRCKPT";
inline constexpr unsigned char kCheckpointVersion = 1;

// Layout: 8 magic bytes, one version byte, u32 little-endian header length,
// JSON header (width_scale, input_scale, ordered tensor names/shapes/offsets),
// then raw little-endian f32 payloads in header order.
void save_checkpoint(CascadeModel& model, const std::filesystem::path& path);

CascadeModel load_checkpoint(const std::filesystem::path& path);

}  // namespace fpnr
