// Command line front end: noise simulation, correction, training and the
// noise-grid benchmark. Every artifact-producing command writes a JSON
// manifest with the resolved configuration and seeds next to its output.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fpnr/autodiff.hpp"
#include "fpnr/cascade.hpp"
#include "fpnr/checkpoint.hpp"
#include "fpnr/classical.hpp"
#include "fpnr/common.hpp"
#include "fpnr/dataset_io.hpp"
#include "fpnr/fpn_sim.hpp"
#include "fpnr/image.hpp"
#include "fpnr/image_io.hpp"
#include "fpnr/metrics.hpp"
#include "fpnr/rng.hpp"
#include "fpnr/tensor.hpp"
#include "fpnr/textures.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fpnr;

namespace {

// Bad flag combinations and malformed configs exit with code 2; domain
// validation failures exit with 3 and I/O problems with 4.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io:
    case ErrorKind::checkpoint_magic:
    case ErrorKind::checkpoint_version:
    case ErrorKind::checkpoint_shape:
    case ErrorKind::checkpoint_truncated:
      return 4;
    default:
      return 3;
  }
}

template <class... Args>
std::string strf(const char* fmt, Args... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

void ensure_parent_dir(const fs::path& p) {
  const fs::path parent = p.parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

json load_json_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open config " + path.string());
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw UsageError("config " + path.string() + " is not valid JSON");
  return j;
}

void write_json_file(const fs::path& path, const json& j) {
  ensure_parent_dir(path);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot write " + path.string());
  f << j.dump(2) << '\n';
  if (!f) fail(ErrorKind::io, "failed writing " + path.string());
}

const json* find_key(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  const std::string label = where.empty() ? "top level" : where;
  if (!j.is_object()) throw UsageError("config " + label + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed)
      if (it.key() == a) known = true;
    if (!known) throw UsageError("config " + label + ": unknown key \"" + it.key() + "\"");
  }
}

[[noreturn]] void bad_field(const std::string& where, const char* key, const char* want) {
  const std::string prefix = where.empty() ? "" : where + ".";
  throw UsageError("config " + prefix + key + ": expected " + want);
}

double num_field(const json& j, const char* key, double fallback, const std::string& where) {
  const json* v = find_key(j, key);
  if (!v) return fallback;
  if (!v->is_number()) bad_field(where, key, "a number");
  return v->get<double>();
}

int int_field(const json& j, const char* key, int fallback, const std::string& where) {
  const json* v = find_key(j, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) bad_field(where, key, "an integer");
  return v->get<int>();
}

bool bool_field(const json& j, const char* key, bool fallback, const std::string& where) {
  const json* v = find_key(j, key);
  if (!v) return fallback;
  if (!v->is_boolean()) bad_field(where, key, "a boolean");
  return v->get<bool>();
}

std::uint64_t seed_field(const json& j, const char* key, std::uint64_t fallback,
                         const std::string& where) {
  const json* v = find_key(j, key);
  if (!v) return fallback;
  if (!v->is_number_integer() || (v->is_number_integer() && v->get<std::int64_t>() < 0))
    bad_field(where, key, "a non-negative integer");
  return v->get<std::uint64_t>();
}

std::string str_field(const json& j, const char* key, const std::string& fallback,
                      const std::string& where) {
  const json* v = find_key(j, key);
  if (!v) return fallback;
  if (!v->is_string()) bad_field(where, key, "a string");
  return v->get<std::string>();
}

std::string req_str_field(const json& j, const char* key, const std::string& where) {
  if (!find_key(j, key)) bad_field(where, key, "a string (required)");
  return str_field(j, key, "", where);
}

// Accepts either a single number or a [lo, hi] pair.
std::array<double, 2> range_field(const json& j, const char* key, std::array<double, 2> fallback,
                                  const std::string& where) {
  const json* v = find_key(j, key);
  if (!v) return fallback;
  if (v->is_number()) {
    const double x = v->get<double>();
    return {x, x};
  }
  if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
    bad_field(where, key, "a number or a [lo, hi] pair");
  return {(*v)[0].get<double>(), (*v)[1].get<double>()};
}

std::vector<double> num_list_field(const json& j, const char* key, std::vector<double> fallback,
                                   const std::string& where) {
  const json* v = find_key(j, key);
  if (!v) return fallback;
  if (!v->is_array() || v->empty()) bad_field(where, key, "a non-empty array of numbers");
  std::vector<double> out;
  for (const json& e : *v) {
    if (!e.is_number()) bad_field(where, key, "a non-empty array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

GainGeometry parse_geometry(const std::string& s, const std::string& where) {
  if (s != "stripe_column" && s != "per_pixel")
    throw UsageError(where + ": geometry must be stripe_column or per_pixel, got \"" + s + "\"");
  return gain_geometry_from_string(s);
}

SbSolverConfig solver_from_json(const json& j, SbSolverConfig base, const std::string& where) {
  check_keys(j, where,
             {"alpha", "lambda", "p", "mu0", "target_filter", "tv_epsilon", "fa_variance_gain"});
  base.alpha = num_field(j, "alpha", base.alpha, where);
  base.lambda = num_field(j, "lambda", base.lambda, where);
  base.p = int_field(j, "p", base.p, where);
  base.mu0 = num_field(j, "mu0", base.mu0, where);
  base.tv_epsilon = num_field(j, "tv_epsilon", base.tv_epsilon, where);
  base.fa_variance_gain = num_field(j, "fa_variance_gain", base.fa_variance_gain, where);
  const std::string filt = str_field(j, "target_filter", to_string(base.target_filter), where);
  if (filt != "mean3x3") bad_field(where, "target_filter", "\"mean3x3\"");
  base.target_filter = target_filter_from_string(filt);
  return base;
}

json solver_to_json(const SbSolverConfig& c) {
  json j;
  j["alpha"] = c.alpha;
  j["lambda"] = c.lambda;
  j["p"] = c.p;
  j["mu0"] = c.mu0;
  j["target_filter"] = to_string(c.target_filter);
  j["tv_epsilon"] = c.tv_epsilon;
  j["fa_variance_gain"] = c.fa_variance_gain;
  return j;
}

json manifest_base(const char* command) {
  json j;
  j["command"] = command;
  j["version"] = kVersion;
  return j;
}

// PSNR of a perfect reconstruction is infinite, which JSON numbers cannot
// carry; those become the strings "inf" / "-inf".
json psnr_json(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

int thread_cap() {
  if (const char* s = std::getenv("FPNR_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (end == s || *end != '\0' || v < 1 || v > 1024)
      throw UsageError("FPNR_THREADS must be a positive integer, got \"" + std::string(s) + "\"");
    return static_cast<int>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_for(int jobs, int workers, const std::function<void(int)>& fn) {
  workers = std::min(workers, jobs);
  if (workers <= 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= jobs) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < workers - 1; ++t) pool.emplace_back(body);
  body();
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

Tensor load_frame(const fs::path& path) {
  Tensor t = read_image(path);
  if (t.rank() != 2)
    fail(ErrorKind::validation, path.string() + ": expected a rank-2 image, got " + t.shape_str());
  return t;
}

Tensor plane_to_image(const Tensor& t) {
  return Tensor({t.extent(2), t.extent(3)},
                std::vector<double>(t.data(), t.data() + t.size()));
}

// [1,C,H,W] -> HxW mean over channels.
Tensor channel_mean(const Tensor& t) {
  const int c = t.extent(1), h = t.extent(2), w = t.extent(3);
  Tensor out({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = 0; k < c; ++k) s += t.at(0, k, y, x);
      out.at(y, x) = s / c;
    }
  return out;
}

// The pooling path needs even extents of at least 2; replicate-pad on the
// bottom/right edge and crop the result back.
Tensor cnn_correct_frame(const Tensor& frame, CascadeModel& model) {
  if (frame.rank() != 2)
    fail(ErrorKind::validation, "cnn correction expects rank-2 frames, got " + frame.shape_str());
  const int h = frame.extent(0), w = frame.extent(1);
  const int pad_b = h < 2 ? 2 - h : h % 2;
  const int pad_r = w < 2 ? 2 - w : w % 2;
  const Tensor in = (pad_b || pad_r) ? pad_replicate(frame, 0, pad_b, 0, pad_r) : frame;
  ModelOutput out = model_forward(in, model);
  if (pad_b || pad_r) return crop(out.x_hat, 0, 0, h, w);
  return out.x_hat;
}

// Writes the gain/offset maps and every attention mask of both subnets as
// lossless f32 rasters plus min-max normalized 8-bit previews.
json dump_features(const Tensor& frame, CascadeModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  const int h = frame.extent(0), w = frame.extent(1);
  const int pad_b = h < 2 ? 2 - h : h % 2;
  const int pad_r = w < 2 ? 2 - w : w % 2;
  const Tensor padded = (pad_b || pad_r) ? pad_replicate(frame, 0, pad_b, 0, pad_r) : frame;
  Tensor batched({1, 1, padded.extent(0), padded.extent(1)},
                 std::vector<double>(padded.data(), padded.data() + padded.size()));

  Graph g;
  CascadeTaps taps;
  const CascadeVars v = cascade_forward(g, g.input(std::move(batched)), model, &taps);

  json entries = json::array();
  auto emit = [&](const std::string& name, Tensor image, bool unit_range) {
    if (image.rank() == 2 && image.extent(0) > h) image = crop(image, 0, 0, h, w);
    const fs::path raw = dir / (name + ".f32");
    write_raw_f32(raw, image);
    double lo = image.data()[0], hi = image.data()[0];
    for (std::int64_t i = 1; i < image.size(); ++i) {
      lo = std::min(lo, image.data()[i]);
      hi = std::max(hi, image.data()[i]);
    }
    Tensor preview = image;
    if (unit_range) {
      for (std::int64_t i = 0; i < preview.size(); ++i) preview.data()[i] *= 255.0;
    } else {
      const double span = hi > lo ? hi - lo : 1.0;
      for (std::int64_t i = 0; i < preview.size(); ++i)
        preview.data()[i] = (preview.data()[i] - lo) * 255.0 / span;
    }
    const fs::path pgm = dir / (name + "_preview.pgm");
    write_pgm(pgm, preview);
    json e;
    e["name"] = name;
    e["raw"] = raw.filename().string();
    e["preview"] = pgm.filename().string();
    e["min"] = lo;
    e["max"] = hi;
    entries.push_back(e);
  };

  emit("gain_map", plane_to_image(g.value(v.gain)), false);
  emit("offset_map", plane_to_image(g.value(v.offset)), false);

  const std::array<std::pair<const char*, const SubnetTaps*>, 2> subnets{
      std::pair<const char*, const SubnetTaps*>{"gain", &taps.gain},
      std::pair<const char*, const SubnetTaps*>{"offset", &taps.offset}};
  for (const auto& [label, sub] : subnets) {
    for (std::size_t i = 0; i < sub->febs.size(); ++i) {
      const ScnauTaps& t = sub->febs[i];
      emit(strf("%s_feb%zu_spatial", label, i), channel_mean(t.spatial_mask), true);
      const int c = t.channel_mask.extent(1);
      emit(strf("%s_feb%zu_channel", label, i),
           Tensor({1, c}, std::vector<double>(t.channel_mask.data(),
                                              t.channel_mask.data() + t.channel_mask.size())),
           true);
    }
  }

  json m = manifest_base("correct");
  m["kind"] = "feature dump";
  m["frame_height"] = h;
  m["frame_width"] = w;
  m["files"] = entries;
  write_json_file(dir / "manifest.json", m);
  return m;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string input;
  std::string output;
  double sigma_g = 0.0;
  double sigma_o = 0.0;
  std::string geometry = "stripe_column";
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateArgs& a) {
  const Tensor clean = load_frame(a.input);
  NoiseSpec spec;
  spec.sigma_g = a.sigma_g;
  spec.sigma_o = a.sigma_o;
  spec.gain_geometry = parse_geometry(a.geometry, "--geometry");
  spec.seed = a.seed;

  const FixedPatternNoise noise = make_noise(spec, clean.extent(0), clean.extent(1));
  const Tensor corrupted = apply_fpn(clean, noise);
  ensure_parent_dir(a.output);
  write_image(a.output, corrupted);

  json m = manifest_base("simulate");
  m["input"] = a.input;
  m["output"] = a.output;
  m["height"] = clean.extent(0);
  m["width"] = clean.extent(1);
  m["noise"]["sigma_g"] = spec.sigma_g;
  m["noise"]["sigma_o"] = spec.sigma_o;
  m["noise"]["geometry"] = to_string(spec.gain_geometry);
  m["noise"]["seed"] = spec.seed;
  write_json_file(a.output + ".manifest.json", m);

  std::cout << "wrote " << a.output << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// correct

struct CorrectArgs {
  std::string method;
  std::vector<std::string> inputs;
  std::string output;
  std::string model;
  std::vector<std::string> ref_low;
  std::vector<std::string> ref_high;
  std::string config;
  std::vector<std::string> truth;
  std::string metrics_out;
  std::string dump_dir;
  std::string format = "f32";
  bool format_given = false;
};

void check_correct_flags(const CorrectArgs& a) {
  const bool is_cnn = a.method == "cnn";
  const bool is_two_point = a.method == "two-point";
  const bool is_scene = !is_cnn && !is_two_point;
  if (is_cnn && a.model.empty()) throw UsageError("--method cnn requires --model");
  if (!is_cnn && !a.model.empty()) throw UsageError("--model only applies to --method cnn");
  if (is_two_point && (a.ref_low.empty() || a.ref_high.empty()))
    throw UsageError("--method two-point requires --ref-low and --ref-high");
  if (!is_two_point && (!a.ref_low.empty() || !a.ref_high.empty()))
    throw UsageError("--ref-low/--ref-high only apply to --method two-point");
  if (!is_scene && !a.config.empty())
    throw UsageError("--config only applies to the scene-based methods (nn, fa, tv)");
  if (!a.dump_dir.empty() && !is_cnn) throw UsageError("--dump-features only applies to cnn");
  if (!a.truth.empty() && a.truth.size() != 1 && a.truth.size() != a.inputs.size())
    throw UsageError("--truth must appear once or once per --input");
  if (a.truth.empty() && !a.metrics_out.empty())
    throw UsageError("--metrics-out requires --truth");
  if (a.inputs.size() == 1 && a.format_given)
    throw UsageError("--format only applies to multi-frame output; the --output extension "
                     "decides the format for a single frame");
}

int cmd_correct(const CorrectArgs& a) {
  check_correct_flags(a);

  std::vector<Tensor> frames;
  for (const std::string& p : a.inputs) frames.push_back(load_frame(p));

  std::vector<fs::path> out_paths;
  if (a.inputs.size() == 1) {
    ensure_parent_dir(a.output);
    out_paths.emplace_back(a.output);
  } else {
    fs::create_directories(a.output);
    for (std::size_t k = 0; k < frames.size(); ++k)
      out_paths.push_back(fs::path(a.output) / strf("frame_%04zu.%s", k, a.format.c_str()));
  }

  json m = manifest_base("correct");
  m["method"] = a.method;
  m["inputs"] = a.inputs;

  std::vector<Tensor> corrected;
  corrected.reserve(frames.size());
  if (a.method == "cnn") {
    CascadeModel model = load_checkpoint(a.model);
    for (const Tensor& f : frames) corrected.push_back(cnn_correct_frame(f, model));
    m["model"] = a.model;
    m["width_scale"] = model.width_scale;
    if (!a.dump_dir.empty()) {
      dump_features(frames.front(), model, a.dump_dir);
      m["features_dir"] = a.dump_dir;
      std::cout << "wrote feature maps to " << a.dump_dir << "\n";
    }
  } else if (a.method == "two-point") {
    std::vector<Tensor> lows, highs;
    for (const std::string& p : a.ref_low) lows.push_back(load_frame(p));
    for (const std::string& p : a.ref_high) highs.push_back(load_frame(p));
    const TwoPointResult cal = two_point_calibrate(lows, highs);
    for (const Tensor& f : frames) corrected.push_back(correct(f, cal.field));
    m["ref_low"] = a.ref_low;
    m["ref_high"] = a.ref_high;
    m["dead_pixels"] = cal.dead_pixels.size();
  } else {
    SbSolverConfig cfg = a.method == "nn"   ? nn_default_config()
                         : a.method == "fa" ? fa_default_config()
                                            : tv_default_config();
    if (!a.config.empty()) cfg = solver_from_json(load_json_file(a.config), cfg, "solver");
    cfg.validate();
    CalibrationField cal = CalibrationField::identity(frames[0].extent(0), frames[0].extent(1));
    for (const Tensor& f : frames) {
      corrected.push_back(correct(f, cal));
      cal = a.method == "nn"   ? nn_fpnr_update(f, cal, cfg)
            : a.method == "fa" ? fa_fpnr_update(f, cal, cfg)
                               : tv_fpnr_update(f, cal, cfg);
    }
    m["solver"] = solver_to_json(cfg);
  }

  for (std::size_t k = 0; k < corrected.size(); ++k) write_image(out_paths[k], corrected[k]);
  json outs = json::array();
  for (const fs::path& p : out_paths) outs.push_back(p.string());
  m["outputs"] = outs;
  if (a.inputs.size() > 1) m["output_format"] = a.format;

  if (!a.truth.empty()) {
    std::vector<Tensor> truths;
    for (const std::string& p : a.truth) truths.push_back(load_frame(p));
    json per_frame = json::array();
    double psnr_sum = 0, rho_sum = 0, base_psnr_sum = 0, base_rho_sum = 0;
    for (std::size_t k = 0; k < corrected.size(); ++k) {
      const Tensor& t = truths.size() == 1 ? truths[0] : truths[k];
      const MetricReport r = score(t, corrected[k]);
      const MetricReport b = score(t, frames[k]);
      json e;
      e["frame"] = k;
      e["psnr_db"] = psnr_json(r.psnr_db);
      e["roughness"] = r.roughness;
      e["corrupted_psnr_db"] = psnr_json(b.psnr_db);
      e["corrupted_roughness"] = b.roughness;
      per_frame.push_back(e);
      psnr_sum += r.psnr_db;
      rho_sum += r.roughness;
      base_psnr_sum += b.psnr_db;
      base_rho_sum += b.roughness;
    }
    const double n = static_cast<double>(corrected.size());
    json metrics;
    metrics["method"] = a.method;
    metrics["frames"] = per_frame;
    metrics["mean"]["psnr_db"] = psnr_json(psnr_sum / n);
    metrics["mean"]["roughness"] = rho_sum / n;
    metrics["corrupted_mean"]["psnr_db"] = psnr_json(base_psnr_sum / n);
    metrics["corrupted_mean"]["roughness"] = base_rho_sum / n;

    fs::path metrics_path = a.metrics_out.empty()
                                ? (a.inputs.size() == 1 ? fs::path(a.output + ".metrics.json")
                                                        : fs::path(a.output) / "metrics.json")
                                : fs::path(a.metrics_out);
    write_json_file(metrics_path, metrics);
    m["truth"] = a.truth;
    m["metrics"] = metrics_path.string();
    std::cout << strf("mean psnr %.2f dB roughness %.4f over %zu frames\n", psnr_sum / n,
                      rho_sum / n, corrected.size());
  }

  const fs::path manifest_path = a.inputs.size() == 1 ? fs::path(a.output + ".manifest.json")
                                                      : fs::path(a.output) / "manifest.json";
  write_json_file(manifest_path, m);
  std::cout << "wrote " << (a.inputs.size() == 1 ? a.output : a.output + "/") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const std::string& config_path) {
  const json cfg = load_json_file(config_path);
  check_keys(cfg, "", {"width_scale", "model_seed", "dataset", "train", "output"});

  const double width_scale = num_field(cfg, "width_scale", 1.0, "");
  const std::uint64_t model_seed = seed_field(cfg, "model_seed", 0, "");

  const json* dataset_cfg = find_key(cfg, "dataset");
  if (!dataset_cfg) throw UsageError("config dataset: required");
  json dataset_manifest;
  PatchDataset dataset;
  if (find_key(*dataset_cfg, "dir")) {
    check_keys(*dataset_cfg, "dataset", {"dir"});
    const std::string dir = req_str_field(*dataset_cfg, "dir", "dataset");
    dataset = import_dataset(dir);
    dataset_manifest["dir"] = dir;
  } else {
    check_keys(*dataset_cfg, "dataset",
               {"textures", "patches", "augment", "sigma_g", "sigma_o", "geometry", "seed"});
    const std::uint64_t ds_seed = seed_field(*dataset_cfg, "seed", 0, "dataset");
    json tex_cfg = json::object();
    if (const json* t = find_key(*dataset_cfg, "textures")) tex_cfg = *t;
    check_keys(tex_cfg, "dataset.textures", {"height", "width", "count", "seed"});
    const int tex_h = int_field(tex_cfg, "height", 128, "dataset.textures");
    const int tex_w = int_field(tex_cfg, "width", 128, "dataset.textures");
    const int tex_count = int_field(tex_cfg, "count", 6, "dataset.textures");
    const std::uint64_t tex_seed = seed_field(tex_cfg, "seed", ds_seed, "dataset.textures");

    const int patches = int_field(*dataset_cfg, "patches", 0, "dataset");
    if (patches <= 0) bad_field("dataset", "patches", "a positive integer");
    const bool augment = bool_field(*dataset_cfg, "augment", true, "dataset");
    const auto sigma_g = range_field(*dataset_cfg, "sigma_g", {0.08, 0.12}, "dataset");
    const auto sigma_o = range_field(*dataset_cfg, "sigma_o", {5.0, 15.0}, "dataset");
    const std::string geometry =
        str_field(*dataset_cfg, "geometry", "stripe_column", "dataset");

    const std::vector<Tensor> sources = texture_bank(tex_h, tex_w, tex_count, tex_seed);
    std::vector<std::string> warnings;
    dataset = gen_patch_dataset(sources, patches, augment, sigma_g, sigma_o, ds_seed,
                                parse_geometry(geometry, "dataset.geometry"), &warnings);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";

    dataset_manifest["textures"] = {{"height", tex_h},
                                    {"width", tex_w},
                                    {"count", tex_count},
                                    {"seed", tex_seed}};
    dataset_manifest["patches"] = patches;
    dataset_manifest["augment"] = augment;
    dataset_manifest["sigma_g"] = sigma_g;
    dataset_manifest["sigma_o"] = sigma_o;
    dataset_manifest["geometry"] = geometry;
    dataset_manifest["seed"] = ds_seed;
    dataset_manifest["warnings"] = warnings;
  }
  dataset_manifest["size"] = dataset.pairs.size();

  TrainConfig tc;
  if (const json* t = find_key(cfg, "train")) {
    check_keys(*t, "train",
               {"epochs", "batch_size", "lr0", "lr_decay_epochs", "seed",
                "intermediate_supervision", "max_steps"});
    tc.epochs = int_field(*t, "epochs", tc.epochs, "train");
    tc.batch_size = int_field(*t, "batch_size", tc.batch_size, "train");
    tc.lr0 = num_field(*t, "lr0", tc.lr0, "train");
    tc.lr_decay_epochs = int_field(*t, "lr_decay_epochs", tc.lr_decay_epochs, "train");
    tc.seed = seed_field(*t, "seed", tc.seed, "train");
    tc.intermediate_supervision =
        bool_field(*t, "intermediate_supervision", tc.intermediate_supervision, "train");
    tc.max_steps = int_field(*t, "max_steps", tc.max_steps, "train");
  }

  const json* out_cfg = find_key(cfg, "output");
  if (!out_cfg) throw UsageError("config output: required");
  check_keys(*out_cfg, "output", {"checkpoint", "loss_csv", "dataset_dir", "manifest"});
  const std::string ckpt_path = req_str_field(*out_cfg, "checkpoint", "output");
  const std::string loss_path = str_field(*out_cfg, "loss_csv", ckpt_path + ".loss.csv", "output");
  const std::string dataset_dir = str_field(*out_cfg, "dataset_dir", "", "output");
  const std::string manifest_path =
      str_field(*out_cfg, "manifest", ckpt_path + ".manifest.json", "output");

  CascadeModel model = CascadeModel::create(width_scale, model_seed);
  const TrainResult result = train_model(dataset, tc, model, &std::cout);

  ensure_parent_dir(ckpt_path);
  save_checkpoint(model, ckpt_path);

  ensure_parent_dir(loss_path);
  std::ofstream loss_file(loss_path, std::ios::binary);
  if (!loss_file) fail(ErrorKind::io, "cannot write " + loss_path);
  loss_file << "step,loss\n";
  for (std::size_t i = 0; i < result.loss_history.size(); ++i)
    loss_file << strf("%zu,%.17g\n", i + 1, result.loss_history[i]);
  if (!loss_file) fail(ErrorKind::io, "failed writing " + loss_path);
  loss_file.close();

  if (!dataset_dir.empty()) export_dataset(dataset, dataset_dir);

  json m = manifest_base("train");
  m["width_scale"] = width_scale;
  m["model_seed"] = model_seed;
  m["dataset"] = dataset_manifest;
  m["train"] = {{"epochs", tc.epochs},
                {"batch_size", tc.batch_size},
                {"lr0", tc.lr0},
                {"lr_decay_epochs", tc.lr_decay_epochs},
                {"seed", tc.seed},
                {"intermediate_supervision", tc.intermediate_supervision},
                {"max_steps", tc.max_steps}};
  m["output"] = {{"checkpoint", ckpt_path}, {"loss_csv", loss_path}, {"manifest", manifest_path}};
  if (!dataset_dir.empty()) m["output"]["dataset_dir"] = dataset_dir;
  m["result"]["steps"] = result.steps;
  m["result"]["parameter_count"] = model.parameter_count();
  if (!result.loss_history.empty()) m["result"]["final_loss"] = result.loss_history.back();
  write_json_file(manifest_path, m);

  std::cout << strf("trained %d steps, wrote %s\n", result.steps, ckpt_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchCell {
  double psnr = 0.0;
  double rho = 0.0;
  int frames = 0;
  bool best = false;
};

struct BenchRow {
  double sigma_g = 0.0;
  double sigma_o = 0.0;
  std::uint64_t noise_seed = 0;
  BenchCell corrupted;
  std::vector<BenchCell> methods;
};

struct BenchSetup {
  std::uint64_t seed = 0;
  std::vector<Tensor> clean;
  GainGeometry geometry = GainGeometry::stripe_column;
  std::vector<double> sigma_g;
  std::vector<double> sigma_o;
  std::vector<std::string> methods;
  int window = 0;
  SbSolverConfig nn_cfg, fa_cfg, tv_cfg;
  double two_point_low = 60.0, two_point_high = 180.0;
  int two_point_frames = 2;
  std::string model_path;
  const CascadeModel* model = nullptr;
};

BenchCell mean_cell(const std::vector<Tensor>& refs, const std::vector<Tensor>& tests, int start) {
  BenchCell c;
  for (int k = start; k < static_cast<int>(tests.size()); ++k) {
    c.psnr += psnr(refs[k], tests[k]);
    c.rho += roughness(tests[k]);
    ++c.frames;
  }
  c.psnr /= c.frames;
  c.rho /= c.frames;
  return c;
}

BenchRow eval_bench_row(const BenchSetup& s, double sg, double so, std::uint64_t noise_seed) {
  BenchRow row;
  row.sigma_g = sg;
  row.sigma_o = so;
  row.noise_seed = noise_seed;

  const int n = static_cast<int>(s.clean.size());
  const int fh = s.clean[0].extent(0), fw = s.clean[0].extent(1);
  const int start = n - s.window;

  NoiseSpec spec;
  spec.sigma_g = sg;
  spec.sigma_o = so;
  spec.gain_geometry = s.geometry;
  spec.seed = noise_seed;
  const FixedPatternNoise noise = make_noise(spec, fh, fw);

  std::vector<Tensor> corrupted;
  corrupted.reserve(n);
  for (const Tensor& c : s.clean) corrupted.push_back(apply_fpn(c, noise));
  row.corrupted = mean_cell(s.clean, corrupted, start);

  for (const std::string& method : s.methods) {
    std::vector<Tensor> fixed(n);
    if (method == "cnn") {
      CascadeModel model = *s.model;  // local copy, forward passes are not shareable
      for (int k = start; k < n; ++k) fixed[k] = cnn_correct_frame(corrupted[k], model);
    } else if (method == "two-point") {
      std::vector<Tensor> lows, highs;
      Tensor flat({fh, fw});
      for (int r = 0; r < s.two_point_frames; ++r) {
        flat.fill(s.two_point_low);
        lows.push_back(apply_fpn(flat, noise));
        flat.fill(s.two_point_high);
        highs.push_back(apply_fpn(flat, noise));
      }
      const TwoPointResult cal = two_point_calibrate(lows, highs);
      for (int k = start; k < n; ++k) fixed[k] = correct(corrupted[k], cal.field);
    } else {
      const SbSolverConfig& cfg =
          method == "nn" ? s.nn_cfg : method == "fa" ? s.fa_cfg : s.tv_cfg;
      CalibrationField cal = CalibrationField::identity(fh, fw);
      for (int k = 0; k < n; ++k) {
        fixed[k] = correct(corrupted[k], cal);
        cal = method == "nn"   ? nn_fpnr_update(corrupted[k], cal, cfg)
              : method == "fa" ? fa_fpnr_update(corrupted[k], cal, cfg)
                               : tv_fpnr_update(corrupted[k], cal, cfg);
      }
    }
    row.methods.push_back(mean_cell(s.clean, fixed, start));
  }

  if (!row.methods.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.methods.size(); ++i)
      if (row.methods[i].psnr > row.methods[best].psnr) best = i;
    row.methods[best].best = true;
  }
  return row;
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string cell_text(const BenchCell& c) {
  return strf("%.2f/%.4f n=%d%s", c.psnr, c.rho, c.frames, c.best ? " *" : "");
}

int cmd_bench(const std::string& config_path) {
  const json cfg = load_json_file(config_path);
  check_keys(cfg, "",
             {"seed", "scene", "sequence", "grid", "geometry", "methods", "window", "model",
              "solver", "two_point", "output"});

  BenchSetup s;
  s.seed = seed_field(cfg, "seed", 0, "");

  // Clean sequence: either explicit frame files or a scene the camera pans
  // across on a bouncing diagonal path.
  json seq_cfg = json::object();
  if (const json* q = find_key(cfg, "sequence")) seq_cfg = *q;
  json scene_manifest, seq_manifest;
  if (const json* files = find_key(seq_cfg, "files")) {
    check_keys(seq_cfg, "sequence", {"files"});
    if (find_key(cfg, "scene"))
      throw UsageError("config scene: does not apply when sequence.files is given");
    if (!files->is_array() || files->empty())
      bad_field("sequence", "files", "a non-empty array of paths");
    for (const json& f : *files) {
      if (!f.is_string()) bad_field("sequence", "files", "a non-empty array of paths");
      s.clean.push_back(load_frame(f.get<std::string>()));
    }
    seq_manifest["files"] = *files;
  } else {
    check_keys(seq_cfg, "sequence", {"frames", "frame_height", "frame_width", "step"});
    const int frames = int_field(seq_cfg, "frames", 200, "sequence");
    const int fh = int_field(seq_cfg, "frame_height", 64, "sequence");
    const int fw = int_field(seq_cfg, "frame_width", 64, "sequence");
    const int step = int_field(seq_cfg, "step", 2, "sequence");

    json scene_cfg = json::object();
    if (const json* sc = find_key(cfg, "scene")) scene_cfg = *sc;
    Tensor scene;
    if (find_key(scene_cfg, "file")) {
      check_keys(scene_cfg, "scene", {"file"});
      const std::string file = req_str_field(scene_cfg, "file", "scene");
      scene = load_frame(file);
      scene_manifest["file"] = file;
    } else {
      check_keys(scene_cfg, "scene", {"texture"});
      json tex = json::object();
      if (const json* t = find_key(scene_cfg, "texture")) tex = *t;
      check_keys(tex, "scene.texture", {"kind", "height", "width", "seed"});
      const int kind = int_field(tex, "kind", 0, "scene.texture");
      const int th = int_field(tex, "height", 192, "scene.texture");
      const int tw = int_field(tex, "width", 192, "scene.texture");
      const std::uint64_t tseed = seed_field(tex, "seed", s.seed, "scene.texture");
      scene = texture_image(th, tw, kind, tseed);
      scene_manifest["texture"] = {{"kind", kind}, {"height", th}, {"width", tw}, {"seed", tseed}};
    }

    const auto path = bouncing_path(scene.extent(0), scene.extent(1), fh, fw, frames, step);
    for (const auto& [y, x] : path) s.clean.push_back(crop(scene, y, x, fh, fw));
    seq_manifest["frames"] = frames;
    seq_manifest["frame_height"] = fh;
    seq_manifest["frame_width"] = fw;
    seq_manifest["step"] = step;
  }

  json grid_cfg = json::object();
  if (const json* g = find_key(cfg, "grid")) grid_cfg = *g;
  check_keys(grid_cfg, "grid", {"sigma_g", "sigma_o"});
  s.sigma_g = num_list_field(grid_cfg, "sigma_g", {0.08, 0.10, 0.12}, "grid");
  s.sigma_o = num_list_field(grid_cfg, "sigma_o", {5.0, 10.0, 15.0}, "grid");
  s.geometry = parse_geometry(str_field(cfg, "geometry", "stripe_column", ""), "geometry");

  if (const json* mv = find_key(cfg, "methods")) {
    if (!mv->is_array()) bad_field("", "methods", "an array of method names");
    for (const json& e : *mv) {
      const std::string name = e.is_string() ? e.get<std::string>() : "";
      if (name != "nn" && name != "fa" && name != "tv" && name != "cnn" && name != "two-point")
        bad_field("", "methods", "names from {nn, fa, tv, cnn, two-point}");
      s.methods.push_back(name);
    }
  } else {
    s.methods = {"nn", "fa", "tv"};
  }

  const int n = static_cast<int>(s.clean.size());
  s.window = int_field(cfg, "window", std::min(50, n), "");
  if (s.window < 1 || s.window > n)
    fail(ErrorKind::validation,
         strf("bench window must be in [1, %d], got %d", n, s.window));

  json solver_cfg = json::object();
  if (const json* sv = find_key(cfg, "solver")) solver_cfg = *sv;
  check_keys(solver_cfg, "solver", {"nn", "fa", "tv"});
  s.nn_cfg = nn_default_config();
  s.fa_cfg = fa_default_config();
  s.tv_cfg = tv_default_config();
  if (const json* v = find_key(solver_cfg, "nn")) s.nn_cfg = solver_from_json(*v, s.nn_cfg, "solver.nn");
  if (const json* v = find_key(solver_cfg, "fa")) s.fa_cfg = solver_from_json(*v, s.fa_cfg, "solver.fa");
  if (const json* v = find_key(solver_cfg, "tv")) s.tv_cfg = solver_from_json(*v, s.tv_cfg, "solver.tv");

  json tp_cfg = json::object();
  if (const json* tp = find_key(cfg, "two_point")) tp_cfg = *tp;
  check_keys(tp_cfg, "two_point", {"low", "high", "frames"});
  s.two_point_low = num_field(tp_cfg, "low", s.two_point_low, "two_point");
  s.two_point_high = num_field(tp_cfg, "high", s.two_point_high, "two_point");
  s.two_point_frames = int_field(tp_cfg, "frames", s.two_point_frames, "two_point");
  if (s.two_point_frames < 1) bad_field("two_point", "frames", "a positive integer");

  const bool wants_cnn =
      std::find(s.methods.begin(), s.methods.end(), "cnn") != s.methods.end();
  s.model_path = str_field(cfg, "model", "", "");
  CascadeModel model_storage;
  if (wants_cnn) {
    if (s.model_path.empty()) throw UsageError("config model: required when methods include cnn");
    model_storage = load_checkpoint(s.model_path);
    s.model = &model_storage;
  }

  const json* out_cfg = find_key(cfg, "output");
  if (!out_cfg) throw UsageError("config output: required");
  check_keys(*out_cfg, "output", {"text", "csv", "manifest"});
  const std::string text_path = req_str_field(*out_cfg, "text", "output");
  const std::string csv_path = req_str_field(*out_cfg, "csv", "output");
  const std::string manifest_path =
      str_field(*out_cfg, "manifest", text_path + ".manifest.json", "output");

  // One row per grid point, evaluated in parallel up to the FPNR_THREADS cap.
  // Row results are keyed by index so scheduling cannot reorder the table.
  std::vector<std::array<double, 2>> grid;
  for (double sg : s.sigma_g)
    for (double so : s.sigma_o) grid.push_back({sg, so});
  std::vector<std::uint64_t> row_seeds;
  for (std::size_t r = 0; r < grid.size(); ++r)
    row_seeds.push_back(Rng::derive(s.seed, r).next_u64());

  std::vector<BenchRow> rows(grid.size());
  parallel_for(static_cast<int>(grid.size()), thread_cap(), [&](int r) {
    rows[r] = eval_bench_row(s, grid[r][0], grid[r][1], row_seeds[r]);
  });

  const std::size_t cell_w = 22;
  std::string text;
  text += "fixed pattern noise benchmark\n";
  text += strf("sequence: %d frames of %dx%d, cells average the trailing %d frames\n", n,
               s.clean[0].extent(0), s.clean[0].extent(1), s.window);
  if (!s.methods.empty()) text += "* marks the best method psnr in its row\n";
  text += "\n";
  text += pad_left("sigma_g", 8) + pad_left("sigma_o", 9) + " |" +
          pad_left("corrupted", cell_w);
  for (const std::string& mname : s.methods) text += pad_left(mname, cell_w);
  text += "\n";
  for (const BenchRow& row : rows) {
    text += strf("%8.2f%9.2f |", row.sigma_g, row.sigma_o);
    text += pad_left(cell_text(row.corrupted), cell_w);
    for (const BenchCell& c : row.methods) text += pad_left(cell_text(c), cell_w);
    text += "\n";
  }

  ensure_parent_dir(text_path);
  std::ofstream text_file(text_path, std::ios::binary);
  if (!text_file) fail(ErrorKind::io, "cannot write " + text_path);
  text_file << text;
  if (!text_file) fail(ErrorKind::io, "failed writing " + text_path);
  text_file.close();

  ensure_parent_dir(csv_path);
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) fail(ErrorKind::io, "cannot write " + csv_path);
  csv << "sigma_g,sigma_o,method,psnr_db,roughness,frames,best\n";
  for (const BenchRow& row : rows) {
    csv << strf("%.4f,%.4f,corrupted,%.10g,%.10g,%d,0\n", row.sigma_g, row.sigma_o,
                row.corrupted.psnr, row.corrupted.rho, row.corrupted.frames);
    for (std::size_t i = 0; i < row.methods.size(); ++i) {
      const BenchCell& c = row.methods[i];
      csv << strf("%.4f,%.4f,%s,%.10g,%.10g,%d,%d\n", row.sigma_g, row.sigma_o,
                  s.methods[i].c_str(), c.psnr, c.rho, c.frames, c.best ? 1 : 0);
    }
  }
  if (!csv) fail(ErrorKind::io, "failed writing " + csv_path);
  csv.close();

  json m = manifest_base("bench");
  m["seed"] = s.seed;
  if (!scene_manifest.is_null()) m["scene"] = scene_manifest;
  m["sequence"] = seq_manifest;
  m["grid"] = {{"sigma_g", s.sigma_g}, {"sigma_o", s.sigma_o}};
  m["geometry"] = to_string(s.geometry);
  m["methods"] = s.methods;
  m["window"] = s.window;
  m["solver"] = {{"nn", solver_to_json(s.nn_cfg)},
                 {"fa", solver_to_json(s.fa_cfg)},
                 {"tv", solver_to_json(s.tv_cfg)}};
  m["two_point"] = {{"low", s.two_point_low},
                    {"high", s.two_point_high},
                    {"frames", s.two_point_frames}};
  if (!s.model_path.empty()) m["model"] = s.model_path;
  m["row_seeds"] = row_seeds;
  m["output"] = {{"text", text_path}, {"csv", csv_path}, {"manifest", manifest_path}};
  write_json_file(manifest_path, m);

  std::cout << text;
  std::cout << "wrote " << text_path << " and " << csv_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// textures

struct TexturesArgs {
  std::string output_dir;
  int height = 128;
  int width = 128;
  int count = 6;
  int kind = -1;
  std::uint64_t seed = 0;
  std::string format = "pgm";
};

int cmd_textures(const TexturesArgs& a) {
  fs::create_directories(a.output_dir);
  std::vector<Tensor> images;
  if (a.kind < 0) {
    images = texture_bank(a.height, a.width, a.count, a.seed);
  } else {
    for (int i = 0; i < a.count; ++i)
      images.push_back(texture_image(a.height, a.width, a.kind, a.seed + i));
  }

  json files = json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const fs::path p = fs::path(a.output_dir) / strf("texture_%03zu.%s", i, a.format.c_str());
    write_image(p, images[i]);
    files.push_back(p.filename().string());
  }

  json m = manifest_base("textures");
  m["height"] = a.height;
  m["width"] = a.width;
  m["count"] = a.count;
  m["kind"] = a.kind;
  m["seed"] = a.seed;
  m["format"] = a.format;
  m["files"] = files;
  write_json_file(fs::path(a.output_dir) / "manifest.json", m);

  std::cout << "wrote " << images.size() << " textures to " << a.output_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixed pattern noise simulation, correction, training and benchmarking "
               "for infrared focal plane arrays"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  SimulateArgs sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Corrupt a clean frame with fixed pattern noise");
  sim_cmd->add_option("--input", sim.input, "Clean input image (pgm or f32)")->required();
  sim_cmd->add_option("--output", sim.output, "Corrupted output image")->required();
  sim_cmd->add_option("--sigma-g", sim.sigma_g, "Gain stddev around 1");
  sim_cmd->add_option("--sigma-o", sim.sigma_o, "Offset stddev around 0");
  sim_cmd->add_option("--geometry", sim.geometry, "stripe_column or per_pixel")
      ->check(CLI::IsMember({"stripe_column", "per_pixel"}));
  sim_cmd->add_option("--seed", sim.seed, "Noise seed");

  CorrectArgs cor;
  CLI::App* cor_cmd = app.add_subcommand("correct", "Correct fixed pattern noise in one or more frames");
  cor_cmd->add_option("--method", cor.method, "two-point, nn, fa, tv or cnn")
      ->required()
      ->check(CLI::IsMember({"two-point", "nn", "fa", "tv", "cnn"}));
  cor_cmd->add_option("--input", cor.inputs, "Input frame(s), in temporal order")->required();
  cor_cmd->add_option("--output", cor.output,
                      "Output image for one input, output directory for several")
      ->required();
  cor_cmd->add_option("--model", cor.model, "Checkpoint for --method cnn");
  cor_cmd->add_option("--ref-low", cor.ref_low, "Low-radiance reference frame(s) for two-point");
  cor_cmd->add_option("--ref-high", cor.ref_high, "High-radiance reference frame(s) for two-point");
  cor_cmd->add_option("--config", cor.config, "JSON solver config for nn, fa and tv");
  cor_cmd->add_option("--truth", cor.truth, "Ground truth frame(s) for metrics");
  cor_cmd->add_option("--metrics-out", cor.metrics_out, "Metrics JSON path");
  cor_cmd->add_option("--dump-features", cor.dump_dir,
                      "Directory for attention masks and gain/offset maps (cnn)");
  cor_cmd->add_option("--format", cor.format, "Frame format for multi-frame output")
      ->check(CLI::IsMember({"pgm", "f32"}));

  std::string train_config;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the correction network");
  train_cmd->add_option("--config", train_config, "Training config JSON")->required();

  std::string bench_config;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Run the noise-grid benchmark");
  bench_cmd->add_option("--config", bench_config, "Benchmark config JSON")->required();

  TexturesArgs tex;
  CLI::App* tex_cmd = app.add_subcommand("textures", "Generate synthetic scene images");
  tex_cmd->add_option("--output-dir", tex.output_dir, "Directory for the images")->required();
  tex_cmd->add_option("--height", tex.height, "Image height");
  tex_cmd->add_option("--width", tex.width, "Image width");
  tex_cmd->add_option("--count", tex.count, "Number of images");
  tex_cmd->add_option("--kind", tex.kind, "Texture kind, -1 cycles through all");
  tex_cmd->add_option("--seed", tex.seed, "Generator seed");
  tex_cmd->add_option("--format", tex.format, "pgm or f32")
      ->check(CLI::IsMember({"pgm", "f32"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  cor.format_given = cor_cmd->count("--format") > 0;

  try {
    if (*sim_cmd) return cmd_simulate(sim);
    if (*cor_cmd) return cmd_correct(cor);
    if (*train_cmd) return cmd_train(train_config);
    if (*bench_cmd) return cmd_bench(bench_config);
    if (*tex_cmd) return cmd_textures(tex);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
