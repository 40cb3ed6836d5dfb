#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fpnr/common.hpp"
#include "fpnr/dataset_io.hpp"
#include "fpnr/image_io.hpp"
#include "fpnr/rng.hpp"
#include "fpnr/textures.hpp"
#include "oracles.hpp"

using namespace fpnr;

namespace {

std::filesystem::path scratch_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "fpnr_io_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<unsigned char> slurp_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::vector<unsigned char> out;
  char c;
  while (in.get(c)) out.push_back(static_cast<unsigned char>(c));
  return out;
}

}  // namespace

TEST_CASE("8-bit graymap round trip preserves integral images") {
  const auto path = scratch_dir() / "roundtrip8.pgm";
  Tensor img({5, 7});
  Rng rng(1);
  for (std::int64_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<double>(rng.uniform_int(256));
  write_pgm(path, img);
  Tensor back = read_pgm(path);
  REQUIRE(back.same_shape(img));
  CHECK(oracle::max_abs_diff(back, img) == 0.0);
}

TEST_CASE("16-bit graymap round trip and big-endian sample order") {
  const auto path = scratch_dir() / "roundtrip16.pgm";
  Tensor img({2, 2}, std::vector<double>{0, 300, 65535, 256});
  write_pgm(path, img, 65535);
  Tensor back = read_pgm(path);
  CHECK(oracle::max_abs_diff(back, img) == 0.0);

  const auto bytes = slurp_bytes(path);
  // header "P5\n2 2\n65535\n", then sample 0 = 0x0000, sample 1 = 0x012C
  const std::size_t data = bytes.size() - 8;
  CHECK(bytes[data + 0] == 0x00);
  CHECK(bytes[data + 1] == 0x00);
  CHECK(bytes[data + 2] == 0x01);
  CHECK(bytes[data + 3] == 0x2C);
}

TEST_CASE("writing clips and rounds to the sample grid") {
  const auto path = scratch_dir() / "clip.pgm";
  Tensor img({1, 4}, std::vector<double>{255.7, -0.4, 254.5, 127.49});
  write_pgm(path, img);
  Tensor back = read_pgm(path);
  CHECK(back[0] == 255.0);
  CHECK(back[1] == 0.0);
  CHECK(back[2] == 255.0);  // half rounds away from zero
  CHECK(back[3] == 127.0);
}

TEST_CASE("graymap reader accepts comments and flexible whitespace") {
  const auto path = scratch_dir() / "comments.pgm";
  std::ofstream out(path, std::ios::binary);
  out << "P5 # binary graymap\n# another remark\n 3\t1 \n# depth next\n255\n";
  out.write("\x0A\x14\x1E", 3);
  out.close();
  Tensor img = read_pgm(path);
  REQUIRE(img.shape() == std::vector<int>{1, 3});
  CHECK(img[0] == 10.0);
  CHECK(img[1] == 20.0);
  CHECK(img[2] == 30.0);
}

TEST_CASE("graymap reader rejects damage with io errors") {
  const auto dir = scratch_dir();

  const auto p6 = dir / "color.pgm";
  std::ofstream(p6, std::ios::binary) << "P6\n2 2\n255\n" << std::string(12, 'x');
  CHECK_THROWS_AS(read_pgm(p6), Error);

  const auto cut = dir / "cut.pgm";
  std::ofstream(cut, std::ios::binary) << "P5\n4 4\n255\n" << std::string(7, 'x');
  try {
    read_pgm(cut);
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }

  const auto zero = dir / "zero.pgm";
  std::ofstream(zero, std::ios::binary) << "P5\n0 4\n255\nxxxx";
  CHECK_THROWS_AS(read_pgm(zero), Error);

  const auto depth = dir / "depth.pgm";
  std::ofstream(depth, std::ios::binary) << "P5\n2 2\n0\nxxxx";
  CHECK_THROWS_AS(read_pgm(depth), Error);

  CHECK_THROWS_AS(read_pgm(dir / "does_not_exist.pgm"), Error);
}

TEST_CASE("graymap writer takes rank-2 tensors only") {
  const auto path = scratch_dir() / "rank.pgm";
  CHECK_THROWS_AS(write_pgm(path, Tensor({1, 1, 2, 2}, 1.0)), Error);
  CHECK_THROWS_AS(write_pgm(path, Tensor({2, 2}, 1.0), 70000), Error);
}

TEST_CASE("raw float plane round trips with its sidecar") {
  const auto path = scratch_dir() / "plane.f32";
  Tensor img({3, 4});
  Rng rng(2);
  for (std::int64_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<double>(static_cast<float>(rng.normal(100.0, 30.0)));
  write_raw_f32(path, img);
  CHECK(std::filesystem::exists(path.string() + ".json"));
  Tensor back = read_raw_f32(path);
  REQUIRE(back.same_shape(img));
  CHECK(oracle::max_abs_diff(back, img) == 0.0);
}

TEST_CASE("raw float reader requires the sidecar and a full payload") {
  const auto dir = scratch_dir();
  const auto orphan = dir / "orphan.f32";
  std::ofstream(orphan, std::ios::binary) << "0000";
  CHECK_THROWS_AS(read_raw_f32(orphan), Error);

  const auto path = dir / "short.f32";
  Tensor img({4, 4}, 1.0);
  write_raw_f32(path, img);
  std::filesystem::resize_file(path, 10);
  try {
    read_raw_f32(path);
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
}

TEST_CASE("read_image and write_image dispatch on the extension") {
  const auto dir = scratch_dir();
  Tensor img({4, 4});
  Rng rng(3);
  for (std::int64_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<double>(rng.uniform_int(256));

  write_image(dir / "disp.pgm", img);
  CHECK(oracle::max_abs_diff(read_image(dir / "disp.pgm"), img) == 0.0);

  write_image(dir / "disp.f32", img);
  CHECK(oracle::max_abs_diff(read_image(dir / "disp.f32"), img) == 0.0);
}

TEST_CASE("dataset export and import reproduce pairs and metadata") {
  auto sources = texture_bank(64, 64, 2, 7);
  PatchDataset ds = gen_patch_dataset(sources, 5, true, {0.08, 0.12}, {5.0, 15.0}, 901);

  const auto dir = scratch_dir() / "dataset";
  std::filesystem::remove_all(dir);
  export_dataset(ds, dir);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "pair_00000_clean.f32"));
  CHECK(std::filesystem::exists(dir / "pair_00004_corrupt.f32"));

  PatchDataset back = import_dataset(dir);
  CHECK(back.seed == ds.seed);
  REQUIRE(back.pairs.size() == ds.pairs.size());
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const PatchPair& a = ds.pairs[i];
    const PatchPair& b = back.pairs[i];
    // float storage: compare after the same snap
    for (std::int64_t k = 0; k < a.clean.size(); ++k) {
      CHECK(static_cast<double>(static_cast<float>(a.clean[k])) == b.clean[k]);
      CHECK(static_cast<double>(static_cast<float>(a.corrupted[k])) == b.corrupted[k]);
    }
    CHECK(a.spec.sigma_g == b.spec.sigma_g);
    CHECK(a.spec.sigma_o == b.spec.sigma_o);
    CHECK(a.spec.seed == b.spec.seed);
    CHECK(a.spec.gain_geometry == b.spec.gain_geometry);
    CHECK(a.augment.flip == b.augment.flip);
    CHECK(a.augment.rotation_quarters == b.augment.rotation_quarters);
    CHECK(a.source_index == b.source_index);
    CHECK(a.crop_y == b.crop_y);
    CHECK(a.crop_x == b.crop_x);
  }
}

TEST_CASE("dataset import fails cleanly on a missing directory") {
  CHECK_THROWS_AS(import_dataset(scratch_dir() / "no_such_dataset"), Error);
}
