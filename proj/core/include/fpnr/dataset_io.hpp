#pragma once

#include <filesystem>

#include "fpnr/fpn_sim.hpp"

namespace fpnr {

// Directory layout: pair_NNNNN_clean.f32 / pair_NNNNN_corrupt.f32 raster
// pairs plus manifest.json recording the dataset seed and every pair's noise
// spec, source crop, and augmentation.
void export_dataset(const PatchDataset& dataset, const std::filesystem::path& dir);

PatchDataset import_dataset(const std::filesystem::path& dir);

}  // namespace fpnr
