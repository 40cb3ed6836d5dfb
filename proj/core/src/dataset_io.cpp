#include "fpnr/dataset_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "fpnr/common.hpp"
#include "fpnr/image_io.hpp"

namespace fpnr {

namespace {

std::string pair_stem(std::size_t i) {
  std::ostringstream s;
  s << "pair_" << std::setw(5) << std::setfill('0') << i;
  return s.str();
}

}  // namespace

void export_dataset(const PatchDataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create dataset directory " + dir.string() + ": " + ec.message());

  nlohmann::json manifest;
  manifest["seed"] = dataset.seed;
  manifest["count"] = dataset.pairs.size();
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t i = 0; i < dataset.pairs.size(); ++i) {
    const PatchPair& pp = dataset.pairs[i];
    const std::string stem = pair_stem(i);
    write_raw_f32(dir / (stem + "_clean.f32"), pp.clean);
    write_raw_f32(dir / (stem + "_corrupt.f32"), pp.corrupted);
    nlohmann::json j;
    j["stem"] = stem;
    j["sigma_g"] = pp.spec.sigma_g;
    j["sigma_o"] = pp.spec.sigma_o;
    j["gain_geometry"] = to_string(pp.spec.gain_geometry);
    j["noise_seed"] = pp.spec.seed;
    j["flip"] = pp.augment.flip;
    j["rotation_quarters"] = pp.augment.rotation_quarters;
    j["source_index"] = pp.source_index;
    j["crop_y"] = pp.crop_y;
    j["crop_x"] = pp.crop_x;
    pairs.push_back(std::move(j));
  }
  manifest["pairs"] = std::move(pairs);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write dataset manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
  out.flush();
  if (!out) fail(ErrorKind::io, "write failed for dataset manifest in " + dir.string());
}

PatchDataset import_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) fail(ErrorKind::io, "missing dataset manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, "bad dataset manifest in " + dir.string() + ": " + e.what());
  }

  PatchDataset ds;
  try {
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    for (const auto& j : manifest.at("pairs")) {
      PatchPair pp;
      const std::string stem = j.at("stem").get<std::string>();
      pp.clean = read_raw_f32(dir / (stem + "_clean.f32"));
      pp.corrupted = read_raw_f32(dir / (stem + "_corrupt.f32"));
      pp.spec.sigma_g = j.at("sigma_g").get<double>();
      pp.spec.sigma_o = j.at("sigma_o").get<double>();
      pp.spec.gain_geometry = gain_geometry_from_string(j.at("gain_geometry").get<std::string>());
      pp.spec.seed = j.at("noise_seed").get<std::uint64_t>();
      pp.augment.flip = j.at("flip").get<bool>();
      pp.augment.rotation_quarters = j.at("rotation_quarters").get<int>();
      pp.source_index = j.at("source_index").get<int>();
      pp.crop_y = j.at("crop_y").get<int>();
      pp.crop_x = j.at("crop_x").get<int>();
      ds.pairs.push_back(std::move(pp));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, "bad dataset manifest in " + dir.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace fpnr
