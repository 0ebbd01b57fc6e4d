// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>

#include "mixdet/net.hpp"

namespace mixdet {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json arch_to_json(const ArchConfig& a) {
  return {{"input_size", a.input_size},
          {"channels", a.channels},
          {"num_classes", a.num_classes},
          {"aspect_ratios", a.aspect_ratios},
          {"anchor_scales", a.anchor_scales}};
}

inline ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.input_size = j.at("input_size").get<int>();
  a.channels = j.at("channels").get<std::vector<int>>();
  a.num_classes = j.at("num_classes").get<int>();
  a.aspect_ratios = j.at("aspect_ratios").get<std::vector<double>>();
  a.anchor_scales = j.at("anchor_scales").get<std::vector<double>>();
  return a;
}

inline nlohmann::json model_to_json(const ToyDetector& m) {
  return {{"version", kCheckpointVersion},
          {"arch", arch_to_json(m.arch())},
          {"theta", m.params()}};
}

inline ToyDetector model_from_json(const nlohmann::json& j) {
  const int v = j.at("version").get<int>();
  if (v != kCheckpointVersion)
    throw std::runtime_error("checkpoint: format version " + std::to_string(v) +
                             " does not match expected " + std::to_string(kCheckpointVersion));
  ToyDetector m(arch_from_json(j.at("arch")));
  std::vector<double> theta = j.at("theta").get<std::vector<double>>();
  if (theta.size() != m.num_params())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  m.params() = std::move(theta);
  return m;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << j.dump();
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return nlohmann::json::parse(f);
}

inline void save_model_checkpoint(const std::string& path, const ToyDetector& m) {
  write_json_file(path, model_to_json(m));
}

inline ToyDetector load_model_checkpoint(const std::string& path) {
  return model_from_json(read_json_file(path));
}

}  // namespace mixdet
