// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "checkpoint.hpp"

#include <sstream>

#include <json.hpp>

#include "io_util.hpp"

namespace pimtl {

namespace {

using nlohmann::ordered_json;

constexpr char kMagic[] = "PMTLCKPT";

ordered_json config_json(const ModelConfig& c) {
  return {{"input_channels", c.input_channels}, {"window", c.window},
          {"conv_channels", c.conv_channels},   {"kernel", c.kernel},
          {"padding", c.padding},               {"stride", c.stride},
          {"hidden", c.hidden},                 {"outputs", c.outputs},
          {"dropout", c.dropout},               {"channel_dropout", c.channel_dropout},               {"bn_eps", c.bn_eps},
          {"bn_momentum", c.bn_momentum},       {"bn_calibration", c.bn_calibration}};
}

ModelConfig config_from_json(const ordered_json& j) {
  ModelConfig c;
  c.input_channels = j.at("input_channels").get<std::size_t>();
  c.window = j.at("window").get<std::size_t>();
  c.conv_channels = j.at("conv_channels").get<std::size_t>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.padding = j.at("padding").get<std::size_t>();
  c.stride = j.at("stride").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.outputs = j.at("outputs").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.channel_dropout = j.at("channel_dropout").get<bool>();
  c.bn_eps = j.at("bn_eps").get<double>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.bn_calibration = j.at("bn_calibration").get<std::size_t>();
  return c;
}

struct Block {
  std::string name;
  std::vector<double>* data;
};

// Every f64 block in file order. Velocity buffers may be empty (optimizer not
// yet stepped); their length is recorded in the header.
std::vector<Block> blocks(PiCnnModel& model) {
  std::vector<Block> out;
  for (auto& nt : model.parameters()) out.push_back({nt.name, &nt.tensor->values});
  for (auto& grp : model.groups()) {
    grp.velocity.resize(grp.params.size());
    for (std::size_t i = 0; i < grp.params.size(); ++i) {
      out.push_back({"velocity/" + grp.params[i].name, &grp.velocity[i]});
    }
  }
  const auto norms = model.norms();
  const auto names = model.norm_names();
  for (std::size_t i = 0; i < norms.size(); ++i) {
    out.push_back({names[i] + "/running_mean", &norms[i]->running_mean});
    out.push_back({names[i] + "/running_var", &norms[i]->running_var});
  }
  out.push_back({"scaling/offset", &model.scaling.offset});
  out.push_back({"scaling/scale", &model.scaling.scale});
  return out;
}

struct Parsed {
  ordered_json header;
  std::size_t data_offset = 0;
};

Parsed parse_header(std::span<const char> bytes, const std::string& source) {
  ByteReader r(bytes, source);
  if (r.get_bytes(8) != std::string(kMagic, 8)) r.error("bad magic (not a pimtl checkpoint)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kVersion, source + ": checkpoint version " + std::to_string(version) +
                                  " is not supported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
  }
  const auto len = r.get<std::uint64_t>();
  if (len > r.remaining()) r.error("header length exceeds file size");
  Parsed p;
  const std::string text = r.get_bytes(static_cast<std::size_t>(len));
  try {
    p.header = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, source + ": malformed checkpoint header: " + e.what());
  }
  p.data_offset = r.offset();
  return p;
}

void load_state(PiCnnModel& model, const Parsed& p, std::span<const char> bytes,
                const std::string& source) {
  const ordered_json& h = p.header;
  try {
    const ModelConfig stored = config_from_json(h.at("config"));
    if (!(stored == model.config())) {
      fail(ErrorCode::kCompatibility, source + ": checkpoint layer configuration differs from the model");
    }
    std::vector<Block> bl = blocks(model);
    const auto& layout = h.at("blocks");
    if (layout.size() != bl.size()) {
      fail(ErrorCode::kCompatibility, source + ": checkpoint has " + std::to_string(layout.size()) +
                                          " blocks, model expects " + std::to_string(bl.size()));
    }
    ByteReader r(bytes, source);
    r.get_bytes(p.data_offset);
    for (std::size_t i = 0; i < bl.size(); ++i) {
      const std::string name = layout[i].at("name").get<std::string>();
      const auto len = layout[i].at("length").get<std::size_t>();
      if (name != bl[i].name) {
        fail(ErrorCode::kCompatibility, source + ": block " + std::to_string(i) + " is '" + name +
                                            "', expected '" + bl[i].name + "'");
      }
      const bool may_be_empty = name.starts_with("velocity/") || name.find("/running_") != std::string::npos;
      if (!(len == bl[i].data->size() || (may_be_empty && len == 0) ||
            (may_be_empty && bl[i].data->empty()))) {
        fail(ErrorCode::kCompatibility, source + ": block '" + name + "' has length " +
                                            std::to_string(len) + ", expected " +
                                            std::to_string(bl[i].data->size()));
      }
      std::vector<double> tmp(len);
      r.get_doubles(tmp);
      *bl[i].data = std::move(tmp);
    }
    if (r.remaining() != 0) r.error("trailing bytes after checkpoint data");

    const auto& bn = h.at("bn_initialized");
    auto norms = model.norms();
    require(bn.size() == norms.size(), ErrorCode::kCompatibility, source + ": batch-norm count differs");
    for (std::size_t i = 0; i < norms.size(); ++i) norms[i]->stats_initialized = bn[i].get<bool>();
    const auto& frozen = h.at("frozen");
    for (auto& grp : model.groups()) grp.frozen = frozen.at(grp.name).get<bool>();
    model.set_train_steps(h.at("train_steps").get<std::int64_t>());
    std::istringstream rng_state(h.at("rng_state").get<std::string>());
    rng_state >> model.rng();
    require(!rng_state.fail(), ErrorCode::kParse, source + ": malformed RNG state");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, source + ": malformed checkpoint header: " + e.what());
  }
}

}  // namespace

std::vector<char> encode_checkpoint(PiCnnModel& model, const CheckpointInfo& info) {
  ordered_json h;
  h["format"] = "pimtl-checkpoint";
  h["config"] = config_json(model.config());
  ordered_json layout = ordered_json::array();
  std::vector<Block> bl = blocks(model);
  for (const Block& b : bl) layout.push_back({{"name", b.name}, {"length", b.data->size()}});
  h["blocks"] = layout;
  ordered_json bn = ordered_json::array();
  for (auto* n : model.norms()) bn.push_back(n->stats_initialized);
  h["bn_initialized"] = bn;
  ordered_json frozen = ordered_json::object();
  for (const auto& grp : model.groups()) frozen[grp.name] = grp.frozen;
  h["frozen"] = frozen;
  h["train_steps"] = model.train_steps();
  std::ostringstream rng_state;
  rng_state << model.rng();
  h["rng_state"] = rng_state.str();
  ordered_json meta = ordered_json::object();
  for (const auto& [k, v] : info) meta[k] = v;
  h["info"] = meta;

  const std::string text = h.dump();
  ByteWriter w;
  w.put_bytes(std::string_view(kMagic, 8));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(text.size());
  w.put_bytes(text);
  for (const Block& b : bl) w.put_doubles(*b.data);
  return w.bytes();
}

std::unique_ptr<PiCnnModel> decode_checkpoint(std::span<const char> bytes, CheckpointInfo* info,
                                              const std::string& source) {
  const Parsed p = parse_header(bytes, source);
  ModelConfig config;
  try {
    config = config_from_json(p.header.at("config"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, source + ": malformed checkpoint header: " + e.what());
  }
  config.validate();
  auto model = std::make_unique<PiCnnModel>(config, 0);
  load_state(*model, p, bytes, source);
  if (info) {
    info->clear();
    if (p.header.contains("info")) {
      for (const auto& [k, v] : p.header["info"].items()) (*info)[k] = v.get<std::string>();
    }
  }
  return model;
}

void restore_checkpoint(PiCnnModel& model, std::span<const char> bytes, const std::string& source) {
  load_state(model, parse_header(bytes, source), bytes, source);
}

void save_checkpoint(PiCnnModel& model, const std::filesystem::path& path, const CheckpointInfo& info) {
  atomic_write_file(path, encode_checkpoint(model, info));
}

std::unique_ptr<PiCnnModel> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  const std::vector<char> bytes = read_file(path);
  return decode_checkpoint(bytes, info, path.string());
}

std::unique_ptr<PiCnnModel> clone_model(PiCnnModel& model) {
  return decode_checkpoint(encode_checkpoint(model));
}

}  // namespace pimtl
