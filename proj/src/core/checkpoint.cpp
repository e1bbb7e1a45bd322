// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/checkpoint.hpp"

#include <fstream>
#include <json.hpp>

#include "msm/errors.hpp"

namespace msm {

using nlohmann::json;

Checkpoint make_checkpoint(const MlpDenoiser& model) {
  Checkpoint c;
  c.arch = model.arch();
  c.transform = model.transform();
  c.parameters.assign(model.net().parameters().begin(), model.net().parameters().end());
  return c;
}

MlpDenoiser restore_denoiser(const Checkpoint& ckpt) {
  std::vector<std::size_t> widths{MlpDenoiser::input_width(ckpt.transform)};
  widths.insert(widths.end(), ckpt.arch.hidden.begin(), ckpt.arch.hidden.end());
  widths.push_back(ckpt.transform.image_size());
  Mlp net(widths);
  net.set_parameters(ckpt.parameters);
  return MlpDenoiser(ckpt.transform, ckpt.arch, std::move(net));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json header = {
      {"format", 1},
      {"hidden", ckpt.arch.hidden},
      {"sigma_data", ckpt.arch.sigma_data},
      {"transform", to_string(ckpt.transform.kind())},
      {"image_shape", ckpt.transform.image_shape()},
      {"parameter_count", ckpt.parameters.size()},
      {"iteration", ckpt.iteration},
      {"schedule_hash", std::to_string(ckpt.schedule_hash)},
      {"config_digest", ckpt.config_digest},
      {"optimizer_steps", ckpt.optimizer ? ckpt.optimizer->steps : 0},
      {"has_optimizer", ckpt.optimizer.has_value()},
      {"has_ema", ckpt.ema.has_value()},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kFile, "cannot write checkpoint " + path.string());
  out << "MSMCKPT " << header.dump() << '\n';
  write_tensor(out, Tensor::vector(ckpt.parameters));
  if (ckpt.transform.kind() == TransformKind::kFourierCoils) write_tensor(out, ckpt.transform.coil_maps());
  if (ckpt.optimizer) {
    write_tensor(out, Tensor::vector(ckpt.optimizer->m));
    write_tensor(out, Tensor::vector(ckpt.optimizer->v));
  }
  if (ckpt.ema) write_tensor(out, Tensor::vector(*ckpt.ema));
  if (!out) fail(ErrorKind::kFile, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kFile, "missing checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  const std::string tag = "MSMCKPT ";
  if (line.rfind(tag, 0) != 0) fail(ErrorKind::kFile, "not a checkpoint: " + path.string());
  json h;
  try {
    h = json::parse(line.substr(tag.size()));
    Checkpoint c;
    c.arch.hidden = h.at("hidden").get<std::vector<std::size_t>>();
    c.arch.sigma_data = h.at("sigma_data").get<double>();
    c.iteration = h.at("iteration").get<std::uint64_t>();
    c.schedule_hash = std::stoull(h.at("schedule_hash").get<std::string>());
    c.config_digest = h.at("config_digest").get<std::string>();
    c.parameters = read_tensor(in).storage();
    if (c.parameters.size() != h.at("parameter_count").get<std::size_t>()) fail(ErrorKind::kFile, "checkpoint parameter count mismatch");
    const std::string kind = h.at("transform").get<std::string>();
    if (kind == "identity") {
      c.transform = Transform::identity(h.at("image_shape").get<Shape>());
    } else if (kind == "fourier_coils") {
      c.transform = Transform::fourier_coils(read_tensor(in));
    } else {
      fail(ErrorKind::kFile, "unknown transform kind in checkpoint: " + kind);
    }
    if (h.at("has_optimizer").get<bool>()) {
      OptimizerState s;
      s.steps = h.at("optimizer_steps").get<std::uint64_t>();
      s.m = read_tensor(in).storage();
      s.v = read_tensor(in).storage();
      c.optimizer = std::move(s);
    }
    if (h.at("has_ema").get<bool>()) c.ema = read_tensor(in).storage();
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFile, "corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
}

}  // namespace msm
