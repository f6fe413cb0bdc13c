// Copyright (c) 2026 C2E Authors
// SPDX-License-Identifier: Apache-2.0
#include "c2e/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace c2e {

namespace {

constexpr char kMagic[4] = {'C', '2', 'E', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw IoError("checkpoint: truncated file");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw IoError("checkpoint: truncated file");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

const NamedBlob* RawCheckpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void write_checkpoint_file(const std::string& path, const RawCheckpoint& raw) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot write " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, raw.config_json.size());
  out.write(raw.config_json.data(), static_cast<std::streamsize>(raw.config_json.size()));
  put_u32(out, static_cast<uint32_t>(raw.tensors.size()));
  for (const auto& t : raw.tensors) {
    put_u32(out, static_cast<uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(out, static_cast<uint32_t>(t.shape.size()));
    for (size_t d : t.shape) put_u64(out, d);
    for (double v : t.data) put_f64(out, v);
  }
  if (!out) throw IoError("checkpoint: short write to " + path);
}

RawCheckpoint read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  const uint32_t version = get_u32(in);
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));

  RawCheckpoint raw;
  const uint64_t cfg_len = get_u64(in);
  raw.config_json.resize(cfg_len);
  in.read(raw.config_json.data(), static_cast<std::streamsize>(cfg_len));
  if (static_cast<uint64_t>(in.gcount()) != cfg_len)
    throw IoError("checkpoint: truncated config block");

  const uint32_t count = get_u32(in);
  raw.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedBlob t;
    const uint32_t name_len = get_u32(in);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (static_cast<uint32_t>(in.gcount()) != name_len)
      throw IoError("checkpoint: truncated tensor name");
    const uint32_t rank = get_u32(in);
    size_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      t.shape.push_back(get_u64(in));
      numel *= t.shape.back();
    }
    t.data.resize(numel);
    for (size_t k = 0; k < numel; ++k) t.data[k] = get_f64(in);
    raw.tensors.push_back(std::move(t));
  }
  return raw;
}

void save_checkpoint(const std::string& path, const TrainState& state) {
  RawCheckpoint raw;
  raw.config_json = state.cfg.to_json();
  ParamRegistry reg = state.model.params();
  for (const auto& [name, t] : reg.items)
    raw.tensors.push_back({name, t.shape(), t.data()});
  for (size_t i = 0; i < state.opt.state_size(); ++i) {
    const std::string& pname = state.opt.param_name(i);
    raw.tensors.push_back({"opt.m." + pname, {state.opt.first_moment(i).size()},
                           state.opt.first_moment(i)});
    raw.tensors.push_back({"opt.v." + pname, {state.opt.second_moment(i).size()},
                           state.opt.second_moment(i)});
  }
  raw.tensors.push_back(
      {"__step__", {1}, {std::bit_cast<double>(static_cast<uint64_t>(state.step))}});
  raw.tensors.push_back(
      {"__opt_updates__", {1}, {std::bit_cast<double>(state.opt.update_count())}});
  raw.tensors.push_back({"__rng_seed__", {1}, {std::bit_cast<double>(state.rng_seed)}});
  raw.tensors.push_back({"__rng_pos__", {1}, {std::bit_cast<double>(state.rng_pos)}});
  write_checkpoint_file(path, raw);
}

TrainState load_checkpoint(const std::string& path) {
  RawCheckpoint raw = read_checkpoint_file(path);
  TrainState state{C2EConfig::from_json(raw.config_json), C2EModel(), AdamW(), 0, 0, 0};
  state.model = C2EModel(state.cfg);
  ParamRegistry reg = state.model.params();
  for (auto& [name, t] : reg.items) {
    const NamedBlob* blob = raw.find(name);
    if (!blob) throw IoError("checkpoint: missing tensor " + name);
    if (blob->shape != t.shape())
      throw IoError("checkpoint: shape mismatch for " + name);
    t.raw_data() = blob->data;
  }
  state.opt = AdamW(reg, state.cfg.optimizer, state.cfg.steps);
  for (size_t i = 0; i < state.opt.state_size(); ++i) {
    const std::string& pname = state.opt.param_name(i);
    const NamedBlob* m = raw.find("opt.m." + pname);
    const NamedBlob* v = raw.find("opt.v." + pname);
    if (!m || !v) throw IoError("checkpoint: missing optimizer state for " + pname);
    state.opt.first_moment(i) = m->data;
    state.opt.second_moment(i) = v->data;
  }
  const NamedBlob* step = raw.find("__step__");
  const NamedBlob* updates = raw.find("__opt_updates__");
  const NamedBlob* seed = raw.find("__rng_seed__");
  const NamedBlob* pos = raw.find("__rng_pos__");
  if (!step || !updates || !seed || !pos)
    throw IoError("checkpoint: missing training counters");
  state.step = std::bit_cast<uint64_t>(step->data[0]);
  state.opt.set_update_count(std::bit_cast<uint64_t>(updates->data[0]));
  state.rng_seed = std::bit_cast<uint64_t>(seed->data[0]);
  state.rng_pos = std::bit_cast<uint64_t>(pos->data[0]);
  return state;
}

}  // namespace c2e
