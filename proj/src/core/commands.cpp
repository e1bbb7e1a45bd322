// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "msm/checkpoint.hpp"
#include "msm/metrics.hpp"
#include "msm/parallel.hpp"
#include "msm/posterior.hpp"
#include "msm/theory.hpp"
#include "msm/toy_data.hpp"
#include "msm/training.hpp"

namespace msm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads keys of one JSON object, records the values actually used (defaults
// included) and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::kConfig, where() + " must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) fail(ErrorKind::kConfig, where(key) + " is required");
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    T value = fallback;
    if (j_.contains(key)) value = convert<T>(key);
    resolved_[key] = value;
    return value;
  }

  template <typename T>
  T require(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) fail(ErrorKind::kConfig, where(key) + " is required");
    T value = convert<T>(key);
    resolved_[key] = value;
    return value;
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    seen_.insert(key);
    std::size_t value = fallback;
    if (j_.contains(key)) {
      if (!j_.at(key).is_number_unsigned()) fail(ErrorKind::kConfig, where(key) + " must be a nonnegative integer");
      value = j_.at(key).get<std::size_t>();
    }
    resolved_[key] = value;
    return value;
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : kEmpty, path_.empty() ? key : path_ + "." + key);
  }

  void put(const std::string& key, json value) {
    seen_.insert(key);
    resolved_[key] = std::move(value);
  }

  /// Throws ConfigError on unknown keys; returns the resolved object.
  json finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(ErrorKind::kConfig, "unknown key " + where(it.key()));
    }
    return resolved_;
  }

 private:
  template <typename T>
  T convert(const std::string& key) const {
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::kConfig, where(key) + " has the wrong type");
    }
  }

  std::string where(const std::string& key = "") const {
    std::string p = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
    return "'" + (p.empty() ? std::string("<root>") : p) + "'";
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
  json resolved_ = json::object();
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kFile, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kFile, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kFile, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, what + " is not valid JSON: " + e.what());
  }
}

std::string digest(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xf];
  return out;
}

// Prepends `count` to a shape.
Shape batch_shape(std::size_t count, const Shape& item) {
  Shape s{count};
  s.insert(s.end(), item.begin(), item.end());
  return s;
}

Tensor stack_items(const std::vector<Tensor>& items, const Shape& item_shape, bool is_complex) {
  std::vector<double> data;
  data.reserve(items.size() * shape_size(item_shape));
  for (const auto& t : items) {
    if (t.size() != shape_size(item_shape)) fail(ErrorKind::kShape, "stacked item has the wrong size");
    data.insert(data.end(), t.storage().begin(), t.storage().end());
  }
  return Tensor(batch_shape(items.size(), item_shape), std::move(data), is_complex);
}

Tensor item(const Tensor& stacked, std::size_t i) {
  Shape item_shape(stacked.shape().begin() + 1, stacked.shape().end());
  const std::size_t n = shape_size(item_shape);
  if ((i + 1) * n > stacked.size()) fail(ErrorKind::kShape, "item index out of range");
  std::vector<double> data(stacked.storage().begin() + static_cast<std::ptrdiff_t>(i * n),
                           stacked.storage().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  return Tensor(item_shape, std::move(data), stacked.is_complex());
}

// ---- shared config sections ----

NoiseSchedule parse_schedule(Section s, Section& parent, const std::string& key) {
  const std::size_t steps = s.count("steps", 100);
  const double b0 = s.get<double>("beta_start", 1e-4);
  const double b1 = s.get<double>("beta_end", 0.2);
  parent.put(key, s.finish());
  return NoiseSchedule::linear_variance(steps, b0, b1);
}

SamplerConfig parse_sampler(Section s, Section& parent, const NoiseSchedule& schedule, bool with_w) {
  SamplerConfig cfg;
  cfg.schedule = schedule;
  if (with_w) cfg.w = s.count("w", 1);
  cfg.partial_renoise = parse_partial_renoise(s.get<std::string>("partial_renoise", "keep"));
  cfg.step_renoise = parse_step_renoise(s.get<std::string>("step_renoise", "bridge"));
  cfg.init = parse_init_rule(s.get<std::string>("init", "sigma_scaled"));
  cfg.snapshot_every = s.count("snapshot_every", 0);
  parent.put("sampler", s.finish());
  validate(cfg);
  return cfg;
}

MaskDistribution parse_mask(Section& s, const Transform& tr, bool complex_image) {
  const bool fourier = tr.kind() == TransformKind::kFourierCoils;
  const Shape& img = tr.image_shape();
  const std::string kind = s.get<std::string>("kind", fourier ? "kspace_lines" : "patch_box");
  MaskDistribution dist = MaskDistribution::always_full(tr.measurement_size());
  if (kind == "patch_box") {
    if (fourier || complex_image) fail(ErrorKind::kConfig, "'mask.kind' patch_box needs real images and the identity transform");
    PatchBoxParams p;
    p.channels = img[0];
    p.height = img[1];
    p.width = img[2];
    p.box_h = s.count("box_h", 2);
    p.box_w = s.count("box_w", 2);
    p.keep = s.get<double>("keep", 0.6);
    dist = MaskDistribution::patch_box(p);
  } else if (kind == "kspace_lines") {
    if (!fourier) fail(ErrorKind::kConfig, "'mask.kind' kspace_lines needs the fourier_coils transform");
    KspaceLinesParams p;
    p.coils = tr.coils();
    p.lines = img[0];
    p.readout = img[1];
    p.acceleration = s.get<double>("acceleration", 4.0);
    p.autocal = s.count("autocal", 2);
    p.autocal_in_budget = s.get<bool>("autocal_in_budget", true);
    dist = MaskDistribution::kspace_lines(p);
  } else if (kind == "uniform_coords") {
    UniformCoordsParams p;
    p.n = tr.measurement_size();
    p.keep = s.get<double>("keep", 0.5);
    p.group = (fourier || complex_image) ? 2 : 1;
    dist = MaskDistribution::uniform_coords(p);
  } else if (kind != "full") {
    fail(ErrorKind::kConfig, "'mask.kind' must be patch_box, kspace_lines, uniform_coords or full");
  }
  return dist;
}

// ---- datasets ----

struct Dataset {
  fs::path dir;
  json manifest;
  std::string kind;
  GaussianFieldSpec field;
  Transform transform = Transform::identity({1});
  MaskDistribution dist = MaskDistribution::always_full(1);
  double rho = 0.0;
  std::size_t count = 0;
  Tensor images;
  Tensor full;
  Tensor measurements;
  std::vector<MaskOp> masks;
};

GaussianFieldSpec parse_field(Section& s, std::string& kind) {
  kind = s.get<std::string>("kind", "gaussian_field");
  if (kind != "gaussian_field" && kind != "phantom") fail(ErrorKind::kConfig, "'dataset.kind' must be gaussian_field or phantom");
  GaussianFieldSpec f;
  f.height = s.count("height", 8);
  f.width = s.count("width", 8);
  f.complex = s.get<bool>("complex", false);
  f.channels = s.count("channels", 1);
  if (kind == "gaussian_field") {
    f.length_scale = s.get<double>("length_scale", 1.5);
    f.support = s.get<double>("support", 0.0);
  } else if (f.channels != 1) {
    fail(ErrorKind::kConfig, "phantoms have a single channel");
  }
  validate(f);
  return f;
}

Transform build_transform(Section s, Section& parent, const GaussianFieldSpec& f, Rng& coil_rng, const Tensor* coils) {
  const std::string kind = s.get<std::string>("kind", f.complex ? "fourier_coils" : "identity");
  Transform tr = Transform::identity(f.image_shape());
  if (kind == "fourier_coils") {
    if (!f.complex) fail(ErrorKind::kConfig, "fourier_coils needs complex images");
    const std::size_t k = s.count("coils", 2);
    if (k == 0) fail(ErrorKind::kConfig, "'transform.coils' must be positive");
    tr = Transform::fourier_coils(coils ? *coils : make_coil_maps(f.height, f.width, k, coil_rng));
  } else if (kind != "identity") {
    fail(ErrorKind::kConfig, "'transform.kind' must be identity or fourier_coils");
  }
  parent.put("transform", s.finish());
  return tr;
}

fs::path dataset_dir(const fs::path& path) {
  if (fs::exists(path / "data" / "manifest.json")) return path / "data";
  if (fs::exists(path / "manifest.json")) return path;
  fail(ErrorKind::kFile, "no dataset manifest under " + path.string());
}

Dataset load_dataset(const fs::path& path) {
  Dataset d;
  d.dir = dataset_dir(path);
  d.manifest = parse_json(read_text(d.dir / "manifest.json"), (d.dir / "manifest.json").string());
  Section root(d.manifest, "");
  Section ds = root.child("dataset");
  d.field = parse_field(ds, d.kind);
  d.count = ds.count("count", 0);
  ds.finish();
  Rng unused(0);
  std::optional<Tensor> coils;
  if (fs::exists(d.dir / "coil_maps.msmt")) coils = load_tensor(d.dir / "coil_maps.msmt");
  d.transform = build_transform(root.child("transform"), root, d.field, unused, coils ? &*coils : nullptr);
  Section ms = root.child("mask");
  d.dist = parse_mask(ms, d.transform, d.field.complex);
  ms.finish();
  d.rho = root.get<double>("rho", 0.0);
  root.get<std::size_t>("measurement_size", 0);
  root.raw("files");
  root.finish();
  d.images = load_tensor(d.dir / "images.msmt");
  d.full = load_tensor(d.dir / "full.msmt");
  d.measurements = load_tensor(d.dir / "measurements.msmt");
  std::istringstream masks(read_text(d.dir / "masks.txt"));
  for (std::string line; std::getline(masks, line);) {
    if (!line.empty()) d.masks.push_back(MaskOp::parse(line));
  }
  if (d.masks.size() != d.count || d.images.shape().empty() || d.images.shape()[0] != d.count) {
    fail(ErrorKind::kFile, "dataset files under " + d.dir.string() + " are inconsistent with the manifest");
  }
  return d;
}

// Mask distribution from the config's "mask" section, or the dataset's own.
MaskDistribution mask_for_run(Section& root, const Dataset& ds) {
  if (!root.has("mask")) {
    Section s(ds.manifest.at("mask"), "mask");
    MaskDistribution dist = parse_mask(s, ds.transform, ds.field.complex);
    root.put("mask", s.finish());
    return dist;
  }
  Section s = root.child("mask");
  MaskDistribution dist = parse_mask(s, ds.transform, ds.field.complex);
  root.put("mask", s.finish());
  return dist;
}

std::unique_ptr<Denoiser> load_model(Section s, Section& parent, const Dataset& ds) {
  const std::string kind = s.get<std::string>("kind", "checkpoint");
  std::unique_ptr<Denoiser> model;
  if (kind == "oracle") {
    if (ds.kind != "gaussian_field") fail(ErrorKind::kConfig, "the oracle model needs a gaussian_field dataset");
    model = std::unique_ptr<Denoiser>(new GaussianOracle(measurement_oracle(ds.field, ds.transform)));
  } else if (kind == "checkpoint") {
    const fs::path path = s.require<std::string>("path");
    const std::string weights = s.get<std::string>("weights", "raw");
    Checkpoint ckpt = load_checkpoint(path);
    if (weights == "ema") {
      if (!ckpt.ema) fail(ErrorKind::kConfig, "checkpoint " + path.string() + " carries no EMA weights");
      ckpt.parameters = *ckpt.ema;
    } else if (weights != "raw") {
      fail(ErrorKind::kConfig, "'model.weights' must be raw or ema");
    }
    if (ckpt.transform.measurement_size() != ds.transform.measurement_size()) {
      fail(ErrorKind::kShape, "checkpoint and dataset measurement sizes differ");
    }
    model = std::make_unique<MlpDenoiser>(restore_denoiser(ckpt));
  } else {
    fail(ErrorKind::kConfig, "'model.kind' must be checkpoint or oracle");
  }
  parent.put("model", s.finish());
  return model;
}

struct ImageScores {
  double psnr = 0.0;
  double ssim = 0.0;
};

// Scores on magnitude images with the peak of the reference.
ImageScores score_images(const Tensor& estimate, const Tensor& truth) {
  const std::vector<double> a = magnitude(estimate);
  const std::vector<double> b = magnitude(truth);
  const Shape& s = truth.shape();
  const std::size_t h = truth.is_complex() ? s[s.size() - 3] : s[s.size() - 2];
  const std::size_t w = truth.is_complex() ? s[s.size() - 2] : s[s.size() - 1];
  double peak = 0.0;
  for (double v : b) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) fail(ErrorKind::kNumerical, "reference image is identically zero");
  const Tensor ta = Tensor::vector(a), tb = Tensor::vector(b);
  return {psnr(ta, tb, peak), ssim(ta, tb, h, w, peak)};
}

void save_preview(const fs::path& path, const Tensor& image) {
  const std::vector<double> mag = magnitude(image);
  const Shape& s = image.shape();
  const std::size_t h = image.is_complex() ? s[s.size() - 3] : s[s.size() - 2];
  const std::size_t w = image.is_complex() ? s[s.size() - 2] : s[s.size() - 1];
  save_pgm(path, std::span<const double>(mag).first(h * w), h, w);
}

struct RunContext {
  fs::path run_dir;
  std::uint64_t seed = 0;
  Rng rng{0};
};

// Validates the whole config, then creates the run layout.
void open_run(const Section& root, const RunContext& ctx) {
  root.finish();
  std::error_code ec;
  for (const char* sub : {"checkpoints", "samples"}) {
    fs::create_directories(ctx.run_dir / sub, ec);
    if (ec) fail(ErrorKind::kFile, "cannot create " + (ctx.run_dir / sub).string() + ": " + ec.message());
  }
}

// ---- commands ----

std::string cmd_gen_data(Section& root, RunContext& ctx) {
  Section ds = root.child("dataset");
  std::string kind;
  const GaussianFieldSpec field = parse_field(ds, kind);
  const std::size_t count = ds.count("count", 64);
  if (count == 0) fail(ErrorKind::kConfig, "'dataset.count' must be positive");
  root.put("dataset", ds.finish());
  Rng coil_rng = ctx.rng.split(1);
  const Transform tr = build_transform(root.child("transform"), root, field, coil_rng, nullptr);
  Section ms = root.child("mask");
  const MaskDistribution dist = parse_mask(ms, tr, field.complex);
  root.put("mask", ms.finish());
  const double rho = root.get<double>("rho", 0.0);
  if (!(rho >= 0.0)) fail(ErrorKind::kConfig, "'rho' must be nonnegative");
  open_run(root, ctx);

  const std::size_t n = tr.measurement_size();
  std::vector<Tensor> images(count), full(count), filled(count);
  std::vector<MaskOp> masks(count);
  const Rng data_rng = ctx.rng.split(2);
  parallel_for(count, [&](std::size_t i) {
    Rng r = data_rng.split(i);
    Tensor x = kind == "phantom" ? sample_phantom(field.height, field.width, field.complex, r) : sample_gaussian_field(field, r);
    Tensor z = tr.forward(x);
    MaskOp mask = dist.sample(r);
    Tensor s = mask.apply(z);
    if (rho > 0.0) s = add_noise(s, rho, r);
    filled[i] = mask.adjoint(s);
    images[i] = std::move(x);
    full[i] = std::move(z);
    masks[i] = std::move(mask);
  });

  const fs::path dir = ctx.run_dir / "data";
  fs::create_directories(dir);
  save_tensor(dir / "images.msmt", stack_items(images, field.image_shape(), field.complex));
  save_tensor(dir / "full.msmt", stack_items(full, {n}, false));
  save_tensor(dir / "measurements.msmt", stack_items(filled, {n}, false));
  std::string mask_lines;
  for (const auto& m : masks) mask_lines += m.to_string() + "\n";
  write_text(dir / "masks.txt", mask_lines);
  json files = {"images.msmt", "full.msmt", "measurements.msmt", "masks.txt"};
  if (tr.kind() == TransformKind::kFourierCoils) {
    save_tensor(dir / "coil_maps.msmt", tr.coil_maps());
    files.push_back("coil_maps.msmt");
  }
  json dataset = root.finish().at("dataset");
  json manifest = {{"dataset", dataset},
                   {"transform", root.finish().at("transform")},
                   {"mask", root.finish().at("mask")},
                   {"rho", rho},
                   {"measurement_size", n},
                   {"files", files}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  for (std::size_t i = 0; i < std::min<std::size_t>(count, 4); ++i) {
    save_preview(ctx.run_dir / "samples" / ("image_" + std::to_string(i) + ".pgm"), images[i]);
  }
  return "generated " + std::to_string(count) + " " + kind + " instances (n=" + std::to_string(n) +
         ", rho=" + format_double(rho) + ")";
}

std::string cmd_train(Section& root, RunContext& ctx) {
  const fs::path data_path = root.require<std::string>("data");
  const Dataset ds = load_dataset(data_path);
  Section ms = root.child("model");
  MlpDenoiserArch arch;
  arch.hidden = ms.get<std::vector<std::size_t>>("hidden", arch.hidden);
  arch.sigma_data = ms.get<double>("sigma_data", arch.sigma_data);
  root.put("model", ms.finish());
  const NoiseSchedule schedule = parse_schedule(root.child("schedule"), root, "schedule");

  Section ts = root.child("train");
  TrainConfig cfg;
  cfg.rho = ts.get<double>("rho", ds.rho);
  const std::string mode = ts.get<std::string>("mode", cfg.rho > 0.0 ? "noisy" : "clean");
  if (mode == "clean") {
    cfg.mode = LossMode::kClean;
  } else if (mode == "noisy") {
    cfg.mode = LossMode::kNoisy;
  } else {
    fail(ErrorKind::kConfig, "'train.mode' must be clean or noisy");
  }
  cfg.batch = ts.count("batch", 32);
  cfg.iterations = ts.count("iterations", 1000);
  cfg.adam.lr = ts.get<double>("lr", 1e-3);
  cfg.adam.weight_decay = ts.get<double>("weight_decay", 0.0);
  cfg.sure.probes = ts.count("sure_probes", 1);
  cfg.sure.delta = ts.get<double>("sure_delta", 0.0);
  cfg.ema = ts.get<bool>("ema", false);
  cfg.ema_decay = ts.get<double>("ema_decay", 0.9999);
  root.put("train", ts.finish());
  const std::string resume = root.get<std::string>("resume", "");
  validate(cfg);
  if (!(cfg.adam.lr > 0.0)) fail(ErrorKind::kConfig, "'train.lr' must be positive");
  open_run(root, ctx);

  std::vector<TrainSample> data;
  data.reserve(ds.count);
  for (std::size_t i = 0; i < ds.count; ++i) data.push_back({ds.masks[i], ds.masks[i].apply(ds.measurements.row(i))});

  TrainState state;
  std::optional<MlpDenoiser> model;
  if (!resume.empty()) {
    const Checkpoint ckpt = load_checkpoint(resume);
    if (ckpt.schedule_hash != schedule.hash()) fail(ErrorKind::kConfig, "checkpoint " + resume + " was trained with a different schedule");
    if (ckpt.transform.measurement_size() != ds.transform.measurement_size()) {
      fail(ErrorKind::kShape, "checkpoint and dataset measurement sizes differ");
    }
    model.emplace(restore_denoiser(ckpt));
    state.iteration = ckpt.iteration;
    if (ckpt.optimizer) {
      AdamW opt(cfg.adam, ckpt.parameters.size());
      opt.restore(ckpt.optimizer->steps, ckpt.optimizer->m, ckpt.optimizer->v);
      state.optimizer = std::move(opt);
    }
    if (cfg.ema && ckpt.ema) state.ema = Ema(cfg.ema_decay, *ckpt.ema);
  } else {
    Rng init = ctx.rng.split(1);
    model.emplace(ds.transform, arch, init);
  }

  const auto records = train(*model, data, schedule, cfg, state, ctx.rng.split(2));

  Checkpoint ckpt = make_checkpoint(*model);
  ckpt.iteration = state.iteration;
  ckpt.schedule_hash = schedule.hash();
  ckpt.config_digest = digest(root.finish().dump());
  if (state.optimizer) {
    ckpt.optimizer = OptimizerState{state.optimizer->steps(), state.optimizer->first_moment(),
                                    state.optimizer->second_moment()};
  }
  if (state.ema) ckpt.ema = state.ema->value();
  save_checkpoint(ctx.run_dir / "checkpoints" / "model.ckpt", ckpt);
  write_text(ctx.run_dir / "metrics.csv", loss_csv(records));
  std::string summary = "trained to iteration " + std::to_string(state.iteration);
  if (!records.empty()) {
    summary += " (loss " + format_double(records.front().loss) + " -> " + format_double(records.back().loss) + ")";
  }
  return summary;
}

std::string cmd_sample(Section& root, RunContext& ctx) {
  const Dataset ds = load_dataset(root.require<std::string>("data"));
  const auto model = load_model(root.child("model"), root, ds);
  const MaskDistribution dist = mask_for_run(root, ds);
  const NoiseSchedule schedule = parse_schedule(root.child("schedule"), root, "schedule");
  const SamplerConfig cfg = parse_sampler(root.child("sampler"), root, schedule, true);
  const std::size_t count = root.count("count", 4);
  if (count == 0) fail(ErrorKind::kConfig, "'count' must be positive");
  open_run(root, ctx);

  std::vector<Tensor> full(count), images(count);
  SampleTrace trace;
  parallel_for(count, [&](std::size_t i) {
    Rng r = ctx.rng.split(i);
    SamplerConfig c = cfg;
    c.record_trace = i == 0;
    SampleResult res = sample_unconditional(*model, dist, c, r);
    images[i] = ds.transform.inverse(res.z0).reshaped(ds.field.image_shape());
    if (ds.field.complex) images[i] = Tensor(ds.field.image_shape(), images[i].storage(), true);
    full[i] = std::move(res.z0);
    if (i == 0) trace = std::move(res.trace);
  });

  const fs::path dir = ctx.run_dir / "samples";
  save_tensor(dir / "samples.msmt", stack_items(images, ds.field.image_shape(), ds.field.complex));
  save_tensor(dir / "full.msmt", stack_items(full, {ds.transform.measurement_size()}, false));
  for (std::size_t i = 0; i < std::min<std::size_t>(count, 8); ++i) {
    save_preview(dir / ("sample_" + std::to_string(i) + ".pgm"), images[i]);
  }
  for (const auto& [t, snap] : trace.snapshots) {
    save_tensor(dir / ("snapshot_t" + std::to_string(t) + ".msmt"), snap);
  }
  write_text(ctx.run_dir / "trace.csv", trace.csv());
  std::string metrics = "index,mean,std,norm\n";
  for (std::size_t i = 0; i < count; ++i) {
    const auto v = images[i].values();
    double mean = 0.0, sq = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) sq += (x - mean) * (x - mean);
    metrics += std::to_string(i) + "," + format_double(mean) + "," + format_double(std::sqrt(sq / static_cast<double>(v.size()))) +
               "," + format_double(norm2(images[i])) + "\n";
  }
  write_text(ctx.run_dir / "metrics.csv", metrics);
  return "drew " + std::to_string(count) + " samples with w=" + std::to_string(cfg.w) + ", T=" +
         std::to_string(schedule.steps());
}

std::string cmd_reconstruct(Section& root, RunContext& ctx) {
  const Dataset ds = load_dataset(root.require<std::string>("data"));
  const auto model = load_model(root.child("model"), root, ds);
  const MaskDistribution dist = mask_for_run(root, ds);
  const NoiseSchedule schedule = parse_schedule(root.child("schedule"), root, "schedule");
  const SamplerConfig cfg = parse_sampler(root.child("sampler"), root, schedule, true);
  const bool fourier = ds.transform.kind() == TransformKind::kFourierCoils;
  const Shape& img = ds.field.image_shape();

  Section ps = root.child("problem");
  const std::string kind = ps.get<std::string>("kind", fourier ? "kspace_subsample" : "box_inpaint");
  const double eta = ps.get<double>("eta", 0.01);
  if (!(eta >= 0.0)) fail(ErrorKind::kConfig, "'problem.eta' must be nonnegative");
  std::function<ForwardOp(Rng&)> make_op;
  double default_gamma = 1.75;
  if (kind == "box_inpaint") {
    if (fourier || ds.field.complex) fail(ErrorKind::kConfig, "box_inpaint needs real images and the identity transform");
    const std::size_t c = img[0], h = img[1], w = img[2];
    const auto box = ps.get<std::vector<std::size_t>>("box", {h / 4, w / 4, h / 2, w / 2});
    if (box.size() != 4 || box[0] + box[2] > h || box[1] + box[3] > w) {
      fail(ErrorKind::kConfig, "'problem.box' must be [row, col, height, width] inside the image");
    }
    std::vector<std::size_t> keep;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const bool hidden = y >= box[0] && y < box[0] + box[2] && x >= box[1] && x < box[1] + box[3];
          if (!hidden) keep.push_back((ch * h + y) * w + x);
        }
      }
    }
    const ForwardOp op = ForwardOp::box_inpaint(MaskOp(c * h * w, std::move(keep)), eta);
    make_op = [op](Rng&) { return op; };
  } else if (kind == "downsample_blur") {
    if (fourier || ds.field.complex) fail(ErrorKind::kConfig, "downsample_blur needs real images and the identity transform");
    const std::size_t factor = ps.count("factor", 2);
    const ForwardOp op = ForwardOp::downsample_blur(img[0], img[1], img[2], factor, eta);
    make_op = [op](Rng&) { return op; };
  } else if (kind == "kspace_subsample") {
    if (!fourier) fail(ErrorKind::kConfig, "kspace_subsample needs the fourier_coils transform");
    KspaceLinesParams p;
    p.coils = ds.transform.coils();
    p.lines = img[0];
    p.readout = img[1];
    p.acceleration = ps.get<double>("acceleration", 4.0);
    p.autocal = ps.count("autocal", 2);
    p.autocal_in_budget = ps.get<bool>("autocal_in_budget", true);
    const MaskDistribution lines = MaskDistribution::kspace_lines(p);
    make_op = [lines, eta](Rng& r) { return ForwardOp::kspace_subsample(lines.sample(r), eta); };
    default_gamma = 2.0;
  } else {
    fail(ErrorKind::kConfig, "'problem.kind' must be box_inpaint, downsample_blur or kspace_subsample");
  }
  root.put("problem", ps.finish());

  Section gs = root.child("guidance");
  GuidanceConfig g;
  g.gamma = gs.get<double>("gamma", default_gamma);
  g.rule = parse_guidance_rule(gs.get<std::string>("rule", "squared"));
  g.mode = parse_posterior_mode(gs.get<std::string>("mode", fourier ? "per_mask_mri" : "general"));
  if (!(g.gamma >= 0.0)) fail(ErrorKind::kConfig, "'guidance.gamma' must be nonnegative");
  root.put("guidance", gs.finish());

  const std::size_t first = root.count("first", 0);
  const std::size_t instances = root.count("instances", std::min<std::size_t>(8, ds.count));
  if (instances == 0 || first + instances > ds.count) fail(ErrorKind::kConfig, "'first' + 'instances' exceed the dataset");
  open_run(root, ctx);

  std::vector<Tensor> truth(instances), input(instances), output(instances);
  std::vector<double> res_in(instances), res_out(instances);
  std::vector<Tensor> ys(instances);
  std::vector<std::string> ops(instances), op_masks(instances);
  parallel_for(instances, [&](std::size_t i) {
    Rng r = ctx.rng.split(i);
    const Tensor x = item(ds.images, first + i);
    const Tensor z = ds.full.row(first + i);
    const ForwardOp h = make_op(r);
    const Tensor y = h.measure(z, r);
    ys[i] = y;
    ops[i] = h.describe();
    if (h.kind() != ForwardKind::kDownsampleBlur) op_masks[i] = h.mask().to_string();
    const Tensor x_in = ds.transform.inverse(h.adjoint(y));
    const Tensor z0 = reconstruct(*model, dist, y, h, cfg, g, r);
    res_in[i] = norm2(y - h.apply(ds.transform.forward(x_in)));
    res_out[i] = norm2(y - h.apply(z0));
    truth[i] = x;
    input[i] = Tensor(img, x_in.storage(), x.is_complex());
    output[i] = Tensor(img, ds.transform.inverse(z0).storage(), x.is_complex());
  });

  const fs::path dir = ctx.run_dir / "samples";
  save_tensor(dir / "truth.msmt", stack_items(truth, img, ds.field.complex));
  save_tensor(dir / "input.msmt", stack_items(input, img, ds.field.complex));
  save_tensor(dir / "output.msmt", stack_items(output, img, ds.field.complex));
  json records = json::array();
  for (std::size_t i = 0; i < instances; ++i) {
    const std::string name = "y_" + std::to_string(i) + ".msmt";
    save_tensor(dir / name, ys[i]);
    records.push_back({{"instance", i},
                       {"dataset_index", first + i},
                       {"y", name},
                       {"operator", ops[i]},
                       {"mask", op_masks[i]},
                       {"eta", eta},
                       {"seed", ctx.seed},
                       {"stream", i}});
  }
  write_text(dir / "measurements.json", json{{"instances", records}}.dump(2) + "\n");
  save_preview(dir / "truth_0.pgm", truth[0]);
  save_preview(dir / "input_0.pgm", input[0]);
  save_preview(dir / "output_0.pgm", output[0]);
  std::string metrics = "instance,kind,psnr,ssim,residual\n";
  double p_in = 0.0, p_out = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const ImageScores a = score_images(input[i], truth[i]);
    const ImageScores b = score_images(output[i], truth[i]);
    p_in += a.psnr;
    p_out += b.psnr;
    metrics += std::to_string(i) + ",input," + format_double(a.psnr) + "," + format_double(a.ssim) + "," + format_double(res_in[i]) + "\n";
    metrics += std::to_string(i) + ",output," + format_double(b.psnr) + "," + format_double(b.ssim) + "," + format_double(res_out[i]) + "\n";
  }
  write_text(ctx.run_dir / "metrics.csv", metrics);
  const double k = static_cast<double>(instances);
  return "reconstructed " + std::to_string(instances) + " instances (" + kind + "): mean PSNR input " +
         format_double(p_in / k) + " dB, output " + format_double(p_out / k) + " dB";
}

std::string cmd_eval(Section& root, RunContext& ctx) {
  const fs::path run = root.require<std::string>("run");
  open_run(root, ctx);
  const fs::path dir = run / "samples";
  for (const char* f : {"truth.msmt", "input.msmt", "output.msmt"}) {
    if (!fs::exists(dir / f)) fail(ErrorKind::kFile, "missing artifact " + (dir / f).string());
  }
  const Tensor truth = load_tensor(dir / "truth.msmt");
  const Tensor input = load_tensor(dir / "input.msmt");
  const Tensor output = load_tensor(dir / "output.msmt");
  std::map<std::pair<std::size_t, std::string>, double> logged;
  std::istringstream csv(read_text(run / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string idx, kind, psnr_text;
    if (!std::getline(row, idx, ',') || !std::getline(row, kind, ',') || !std::getline(row, psnr_text, ',')) continue;
    logged[{std::stoul(idx), kind}] = psnr_text == "inf" ? INFINITY : std::stod(psnr_text);
  }
  const std::size_t count = truth.shape()[0];
  std::string metrics = "instance,kind,psnr,ssim,logged_psnr,abs_diff\n";
  double worst = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor x = item(truth, i);
    for (const auto& [kind, stack] : {std::pair<std::string, const Tensor*>{"input", &input}, {"output", &output}}) {
      const ImageScores s = score_images(item(*stack, i), x);
      const auto it = logged.find({i, kind});
      if (it == logged.end()) fail(ErrorKind::kFile, "metrics.csv under " + run.string() + " lacks row " + std::to_string(i) + "," + kind);
      const double diff = (s.psnr == it->second) ? 0.0 : std::abs(s.psnr - it->second);
      worst = std::max(worst, diff);
      metrics += std::to_string(i) + "," + kind + "," + format_double(s.psnr) + "," + format_double(s.ssim) + "," +
                 format_double(it->second) + "," + format_double(diff) + "\n";
    }
  }
  write_text(ctx.run_dir / "metrics.csv", metrics);
  return "evaluated " + std::to_string(count) + " instances; max |PSNR - logged| = " + format_double(worst);
}

std::vector<std::size_t> window(std::size_t start, std::size_t len, std::size_t n) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < len; ++i) idx.push_back((start + i) % n);
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

std::string cmd_kl_study(Section& root, RunContext& ctx) {
  Section ts = root.child("toy");
  const std::size_t n = ts.count("n", 16);
  const double ar = ts.get<double>("ar_rho", 0.9);
  const std::string family = ts.get<std::string>("family", "shifted_windows");
  std::vector<MaskOp> masks;
  if (family == "shifted_windows") {
    const std::size_t len = ts.count("window", 8);
    const std::size_t shift = ts.count("shift", 4);
    if (len == 0 || len > n || shift == 0) fail(ErrorKind::kConfig, "'toy.window' and 'toy.shift' must be positive and window <= n");
    for (std::size_t s = 0; s < n; s += shift) masks.emplace_back(n, window(s, len, n));
  } else if (family == "full") {
    masks.push_back(MaskOp::full(n));
  } else {
    fail(ErrorKind::kConfig, "'toy.family' must be shifted_windows or full");
  }
  if (n == 0 || !(std::abs(ar) < 1.0)) fail(ErrorKind::kConfig, "'toy' needs n > 0 and |ar_rho| < 1");
  root.put("toy", ts.finish());

  KlStudyConfig cfg;
  cfg.ws = root.get<std::vector<std::size_t>>("ws", cfg.ws);
  cfg.chains = root.count("chains", cfg.chains);
  const NoiseSchedule schedule = parse_schedule(root.child("schedule"), root, "schedule");
  cfg.sampler = parse_sampler(root.child("sampler"), root, schedule, false);
  cfg.estimator = parse_kl_estimator(root.get<std::string>("estimator", "gaussian_fit"));
  cfg.variance_probes = root.count("variance_probes", cfg.variance_probes);
  cfg.variance_draws = root.count("variance_draws", cfg.variance_draws);
  cfg.fixed_weight_walk = root.get<bool>("fixed_weight_walk", cfg.fixed_weight_walk);
  if (cfg.ws.empty() || cfg.chains < 2) fail(ErrorKind::kConfig, "kl-study needs at least one w and two chains");
  open_run(root, ctx);

  const GaussianOracle oracle(Tensor::zeros(n), ar1_covariance(n, ar));
  const MaskDistribution dist = MaskDistribution::fixed_family(std::move(masks));
  const KlStudyReport report = kl_study(oracle, dist, cfg, ctx.rng);
  write_text(ctx.run_dir / "metrics.csv", report.csv());
  write_text(ctx.run_dir / "variance.csv", report.variance.csv());
  write_text(ctx.run_dir / "summary.txt", report.summary());
  return std::string("kl-study over ") + std::to_string(cfg.ws.size()) + " loop counts; bound " +
         (report.bound_holds() ? "holds" : "violated");
}

using CommandFn = std::string (*)(Section&, RunContext&);

CommandFn find_command(const std::string& name) {
  if (name == "gen-data") return cmd_gen_data;
  if (name == "train") return cmd_train;
  if (name == "sample") return cmd_sample;
  if (name == "reconstruct") return cmd_reconstruct;
  if (name == "kl-study") return cmd_kl_study;
  if (name == "eval") return cmd_eval;
  fail(ErrorKind::kConfig, "unknown command '" + name + "'");
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"gen-data", "train", "sample", "reconstruct", "kl-study", "eval"};
  return names;
}

CommandResult run_command(const std::string& command, const std::string& config_json, std::optional<std::uint64_t> seed,
                          const fs::path& outdir) {
  const CommandFn fn = find_command(command);
  const json config = parse_json(config_json, "config");
  Section root(config, "");
  RunContext ctx;
  ctx.seed = seed ? *seed : root.get<std::uint64_t>("seed", 0);
  root.put("seed", ctx.seed);
  ctx.rng = Rng(ctx.seed);
  const std::string run_id = root.get<std::string>("run_id", command + "-" + std::to_string(ctx.seed));
  if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos || run_id == "." || run_id == "..") {
    fail(ErrorKind::kConfig, "'run_id' must be a plain directory name");
  }
  if (outdir.empty()) fail(ErrorKind::kConfig, "an output directory is required");
  ctx.run_dir = outdir / run_id;
  CommandResult result;
  result.run_dir = ctx.run_dir;
  result.summary = fn(root, ctx);
  write_text(ctx.run_dir / "config.resolved.json", root.finish().dump(2) + "\n");
  return result;
}

CommandResult run_command_file(const std::string& command, const fs::path& config_path, std::optional<std::uint64_t> seed,
                               const fs::path& outdir) {
  if (!fs::exists(config_path)) fail(ErrorKind::kFile, "config not found: " + config_path.string());
  return run_command(command, read_text(config_path), seed, outdir);
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kShape:
    case ErrorKind::kUnsupportedSize:
    case ErrorKind::kCaseMismatch:
      return 2;
    case ErrorKind::kNumerical:
    case ErrorKind::kDegenerateNoise:
    case ErrorKind::kContractViolation:
      return 3;
    case ErrorKind::kFile:
      return 4;
  }
  return 1;
}

}  // namespace msm
