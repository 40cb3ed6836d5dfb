#include "fpnr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "fpnr/common.hpp"

namespace fpnr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian; big-endian hosts need byte swaps");

void save_checkpoint(CascadeModel& model, const std::filesystem::path& path) {
  auto params = model.named_parameters();
  nlohmann::json header;
  header["width_scale"] = model.width_scale;
  header["input_scale"] = model.input_scale;
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (auto& [name, p] : params) {
    nlohmann::json t;
    t["name"] = name;
    t["shape"] = p->value.shape();
    t["offset"] = offset;
    tensors.push_back(std::move(t));
    offset += static_cast<std::uint64_t>(p->value.size()) * sizeof(float);
  }
  header["tensors"] = std::move(tensors);
  const std::string header_text = header.dump();
  if (header_text.size() > 0xffffffffu)
    fail(ErrorKind::io, "checkpoint header too large");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open checkpoint for writing: " + path.string());
  out.write(kCheckpointMagic, 8);
  out.put(static_cast<char>(kCheckpointVersion));
  const std::uint32_t len = static_cast<std::uint32_t>(header_text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  std::vector<float> buf;
  for (auto& [name, p] : params) {
    buf.resize(static_cast<std::size_t>(p->value.size()));
    for (std::int64_t i = 0; i < p->value.size(); ++i)
      buf[static_cast<std::size_t>(i)] = static_cast<float>(p->value[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  out.flush();
  if (!out) fail(ErrorKind::io, "write failed for checkpoint: " + path.string());
}

CascadeModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open checkpoint: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 13) fail(ErrorKind::checkpoint_truncated, "checkpoint shorter than its fixed prelude");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    fail(ErrorKind::checkpoint_magic, "not a checkpoint: bad magic in " + path.string());
  const unsigned char version = static_cast<unsigned char>(bytes[8]);
  if (version != kCheckpointVersion)
    fail(ErrorKind::checkpoint_version, "unsupported checkpoint version " + std::to_string(version) +
                                            " (expected " + std::to_string(kCheckpointVersion) + ")");
  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 9, sizeof(header_len));
  const std::size_t payload_start = 13 + static_cast<std::size_t>(header_len);
  if (bytes.size() < payload_start)
    fail(ErrorKind::checkpoint_truncated, "checkpoint header cut short");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.data() + 13, bytes.data() + payload_start);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  CascadeModel model;
  try {
    model = CascadeModel::create(header.at("width_scale").get<double>(), 0);
    model.input_scale = header.at("input_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, std::string("checkpoint header missing fields: ") + e.what());
  }

  auto params = model.named_parameters();
  std::size_t seen = 0;
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    Parameter* target = nullptr;
    for (auto& [pname, p] : params)
      if (pname == name) {
        target = p;
        break;
      }
    if (!target)
      fail(ErrorKind::checkpoint_shape, "checkpoint tensor '" + name +
                                            "' does not exist in a width_scale=" +
                                            std::to_string(model.width_scale) + " model");
    if (target->value.shape() != shape)
      fail(ErrorKind::checkpoint_shape, "checkpoint tensor '" + name + "' has shape " +
                                            Tensor::shape_str(shape) + ", model expects " +
                                            target->value.shape_str());
    const std::size_t count = static_cast<std::size_t>(target->value.size());
    const std::size_t begin = payload_start + static_cast<std::size_t>(offset);
    if (begin + count * sizeof(float) > bytes.size())
      fail(ErrorKind::checkpoint_truncated, "checkpoint payload for '" + name + "' cut short");
    std::vector<float> buf(count);
    std::memcpy(buf.data(), bytes.data() + begin, count * sizeof(float));
    for (std::size_t i = 0; i < count; ++i)
      target->value[static_cast<std::int64_t>(i)] = static_cast<double>(buf[i]);
    seen += 1;
  }
  if (seen != params.size())
    fail(ErrorKind::checkpoint_shape, "checkpoint lists " + std::to_string(seen) + " tensors, model has " +
                                          std::to_string(params.size()));
  return model;
}

}  // namespace fpnr
