#include "fpnr/image_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "fpnr/common.hpp"

namespace fpnr {

namespace {

// PGM allows comment lines starting with '#' between header tokens.
int next_header_int(std::istream& in, const char* what) {
  while (true) {
    const int c = in.peek();
    if (c == EOF) fail(ErrorKind::io, std::string("graymap header ends before ") + what);
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
      continue;
    }
    break;
  }
  long long v = 0;
  if (!(in >> v)) fail(ErrorKind::io, std::string("graymap header: cannot parse ") + what);
  if (v < 0 || v > 1 << 20)
    fail(ErrorKind::io, std::string("graymap header: ") + what + " out of range: " + std::to_string(v));
  return static_cast<int>(v);
}

int clip_round(double v, int max_val) {
  if (v <= 0.0) return 0;
  if (v >= max_val) return max_val;
  return static_cast<int>(std::round(v));
}

}  // namespace

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open image: " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5')
    fail(ErrorKind::io, "not a binary graymap (P5): " + path.string());
  const int width = next_header_int(in, "width");
  const int height = next_header_int(in, "height");
  const int max_val = next_header_int(in, "maxval");
  if (width == 0 || height == 0) fail(ErrorKind::io, "graymap with zero extent: " + path.string());
  if (max_val == 0 || max_val > 65535)
    fail(ErrorKind::io, "graymap maxval must be 1..65535, got " + std::to_string(max_val));
  in.get();  // single whitespace byte after maxval

  const bool wide = max_val > 255;
  const std::size_t count = static_cast<std::size_t>(width) * height;
  std::vector<unsigned char> bytes(count * (wide ? 2 : 1));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size())
    fail(ErrorKind::io, "graymap payload cut short: " + path.string());

  Tensor img({height, width});
  if (wide) {
    for (std::size_t i = 0; i < count; ++i)
      img[static_cast<std::int64_t>(i)] =
          static_cast<double>((static_cast<unsigned>(bytes[2 * i]) << 8) | bytes[2 * i + 1]);
  } else {
    for (std::size_t i = 0; i < count; ++i) img[static_cast<std::int64_t>(i)] = bytes[i];
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image, int max_val) {
  if (image.rank() != 2)
    fail(ErrorKind::validation, "write_pgm: image must be rank-2, got " + image.shape_str());
  if (max_val < 1 || max_val > 65535)
    fail(ErrorKind::config, "write_pgm: maxval must be 1..65535, got " + std::to_string(max_val));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open image for writing: " + path.string());
  out << "P5\n" << image.extent(1) << " " << image.extent(0) << "\n" << max_val << "\n";
  const bool wide = max_val > 255;
  for (std::int64_t i = 0; i < image.size(); ++i) {
    const int v = clip_round(image[i], max_val);
    if (wide) {
      out.put(static_cast<char>((v >> 8) & 0xff));
      out.put(static_cast<char>(v & 0xff));
    } else {
      out.put(static_cast<char>(v));
    }
  }
  out.flush();
  if (!out) fail(ErrorKind::io, "write failed for image: " + path.string());
}

Tensor read_raw_f32(const std::filesystem::path& path) {
  const std::filesystem::path sidecar = path.string() + ".json";
  std::ifstream meta(sidecar);
  if (!meta) fail(ErrorKind::io, "missing shape sidecar: " + sidecar.string());
  std::vector<int> shape;
  try {
    nlohmann::json j;
    meta >> j;
    shape = j.at("shape").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, "bad shape sidecar " + sidecar.string() + ": " + e.what());
  }
  Tensor img(shape);
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open raster: " + path.string());
  std::vector<float> buf(static_cast<std::size_t>(img.size()));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != buf.size() * sizeof(float))
    fail(ErrorKind::io, "raster payload cut short: " + path.string());
  for (std::size_t i = 0; i < buf.size(); ++i)
    img[static_cast<std::int64_t>(i)] = static_cast<double>(buf[i]);
  return img;
}

void write_raw_f32(const std::filesystem::path& path, const Tensor& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open raster for writing: " + path.string());
  std::vector<float> buf(static_cast<std::size_t>(image.size()));
  for (std::int64_t i = 0; i < image.size(); ++i)
    buf[static_cast<std::size_t>(i)] = static_cast<float>(image[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  out.flush();
  if (!out) fail(ErrorKind::io, "write failed for raster: " + path.string());

  nlohmann::json j;
  j["shape"] = image.shape();
  std::ofstream meta(path.string() + ".json", std::ios::trunc);
  if (!meta) fail(ErrorKind::io, "cannot write shape sidecar for: " + path.string());
  meta << j.dump(2) << "\n";
  meta.flush();
  if (!meta) fail(ErrorKind::io, "write failed for shape sidecar of: " + path.string());
}

Tensor read_image(const std::filesystem::path& path) {
  if (path.extension() == ".pgm") return read_pgm(path);
  return read_raw_f32(path);
}

void write_image(const std::filesystem::path& path, const Tensor& image) {
  if (path.extension() == ".pgm")
    write_pgm(path, image);
  else
    write_raw_f32(path, image);
}

}  // namespace fpnr
