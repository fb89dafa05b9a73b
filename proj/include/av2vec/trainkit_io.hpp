// av2vec/trainkit_io.hpp

// Copyright 2026  AV2vec Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef AV2VEC_TRAINKIT_IO_HPP_
#define AV2VEC_TRAINKIT_IO_HPP_

#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "av2vec/trainkit.hpp"

namespace av2vec {

constexpr uint32_t kCheckpointMagic = 0x43325641;  // "AV2C"
constexpr uint32_t kCheckpointEnd = 0x444e4543;    // "CEND"
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
constexpr uint8_t dtype_code() {
  return std::is_same_v<T, float> ? 0 : 1;
}

inline const char* dtype_name(uint8_t code) { return code == 0 ? "f32" : "f64"; }

// Header-only peek used by the CLI to dispatch on the stored dtype.
struct CheckpointInfo {
  std::string dtype;  // "f32" | "f64"
  RunConfig config;
  int64_t update_step = 0;
};
CheckpointInfo read_checkpoint_info(const std::string& path);

// Raises ConfigError naming the first structural key on which a provided
// run configuration disagrees with a checkpoint's.
void check_checkpoint_compatible(const RunConfig& provided,
                                 const RunConfig& loaded);

namespace ckpt_detail {

inline void put_u32(std::ofstream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_u64(std::ofstream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_u8(std::ofstream& os, uint8_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_str(std::ofstream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline uint32_t get_u32(std::ifstream& is, const std::string& path) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw CorruptFileError("truncated checkpoint: " + path);
  return v;
}
inline uint64_t get_u64(std::ifstream& is, const std::string& path) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw CorruptFileError("truncated checkpoint: " + path);
  return v;
}
inline uint8_t get_u8(std::ifstream& is, const std::string& path) {
  uint8_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw CorruptFileError("truncated checkpoint: " + path);
  return v;
}
inline std::string get_str(std::ifstream& is, const std::string& path) {
  const uint32_t len = get_u32(is, path);
  if (len > (1u << 24)) throw CorruptFileError("bad string length: " + path);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw CorruptFileError("truncated checkpoint: " + path);
  return s;
}

template <typename T>
void put_tensor(std::ofstream& os, const std::string& name,
                const Tensor<T>& t) {
  put_str(os, name);
  put_u8(os, dtype_code<T>());
  put_u32(os, static_cast<uint32_t>(t.rank()));
  for (int d : t.shape) put_u32(os, static_cast<uint32_t>(d));
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(T)));
}

template <typename T>
std::pair<std::string, Tensor<T>> get_tensor(std::ifstream& is,
                                             const std::string& path) {
  std::string name = get_str(is, path);
  const uint8_t dt = get_u8(is, path);
  if (dt != dtype_code<T>())
    throw ConfigError("checkpoint tensor '" + name + "' has dtype " +
                      dtype_name(dt) + " but the run uses " +
                      dtype_name(dtype_code<T>()));
  const uint32_t rank = get_u32(is, path);
  if (rank > 8) throw CorruptFileError("bad tensor rank: " + path);
  std::vector<int> shape(rank);
  for (auto& d : shape) d = static_cast<int>(get_u32(is, path));
  Tensor<T> t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(T)));
  if (!is) throw CorruptFileError("truncated checkpoint: " + path);
  return {std::move(name), std::move(t)};
}

}  // namespace ckpt_detail

// Binary checkpoint: config snapshot, step counters, the named-tensor table
// (student, teacher, optional probe), rng states and Adam moments. Loading
// then saving again reproduces the file byte for byte.
template <typename T>
void save_checkpoint(const std::string& path, const TrainState<T>& state,
                     const ProbeModel<T>* probe = nullptr) {
  using namespace ckpt_detail;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CorruptFileError("cannot open for write: " + path);
  put_u32(os, kCheckpointMagic);
  put_u32(os, kCheckpointVersion);
  put_u8(os, dtype_code<T>());
  const std::string cfg_json = state.cfg.to_json().dump();
  put_u64(os, cfg_json.size());
  os.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
  put_u64(os, static_cast<uint64_t>(state.update_step));
  put_u64(os, static_cast<uint64_t>(state.teacher.update_step));

  ParamRegistry<T> teacher_reg;
  const_cast<TeacherState<T>&>(state.teacher)
      .register_params(teacher_reg, "teacher");
  ParamRegistry<T> probe_reg;
  if (probe) const_cast<ProbeModel<T>*>(probe)->register_params(probe_reg);

  put_u32(os, static_cast<uint32_t>(state.registry.size() + teacher_reg.size() +
                                    probe_reg.size()));
  for (const auto& e : state.registry.entries) put_tensor(os, e.name, *e.tensor);
  for (const auto& e : teacher_reg.entries) put_tensor(os, e.name, *e.tensor);
  for (const auto& e : probe_reg.entries) put_tensor(os, e.name, *e.tensor);

  put_u32(os, 1);  // rng states
  put_str(os, "loop");
  for (uint64_t w : state.loop_rng.state()) put_u64(os, w);

  put_u32(os, static_cast<uint32_t>(state.registry.size()));
  for (size_t i = 0; i < state.registry.size(); ++i) {
    put_str(os, state.registry.entries[i].name);
    put_u64(os, static_cast<uint64_t>(state.opt.slots[i].t));
    const auto& m = state.opt.slots[i].m;
    const auto& v = state.opt.slots[i].v;
    os.write(reinterpret_cast<const char*>(m.data.data()),
             static_cast<std::streamsize>(m.data.size() * sizeof(T)));
    os.write(reinterpret_cast<const char*>(v.data.data()),
             static_cast<std::streamsize>(v.data.size() * sizeof(T)));
  }
  put_u32(os, kCheckpointEnd);
  if (!os) throw CorruptFileError("write failed: " + path);
}

template <typename T>
struct LoadedCheckpoint {
  std::unique_ptr<TrainState<T>> state;
  std::unique_ptr<ProbeModel<T>> probe;  // present if the file carries one
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptFileError("cannot open checkpoint: " + path);
  if (get_u32(is, path) != kCheckpointMagic)
    throw CorruptFileError("bad magic in checkpoint: " + path);
  if (get_u32(is, path) != kCheckpointVersion)
    throw CorruptFileError("unsupported checkpoint version: " + path);
  const uint8_t dt = get_u8(is, path);
  if (dt != dtype_code<T>())
    throw ConfigError("checkpoint dtype is " + std::string(dtype_name(dt)) +
                      " but the run expects " + dtype_name(dtype_code<T>()));
  const uint64_t cfg_len = get_u64(is, path);
  if (cfg_len > (1ull << 30))
    throw CorruptFileError("bad config length: " + path);
  std::string cfg_json(cfg_len, '\0');
  is.read(cfg_json.data(), static_cast<std::streamsize>(cfg_len));
  if (!is) throw CorruptFileError("truncated checkpoint: " + path);
  RunConfig cfg;
  try {
    cfg = RunConfig::from_json(nlohmann::json::parse(cfg_json));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError("unparseable config in checkpoint: " + path);
  }

  LoadedCheckpoint<T> out;
  out.state = std::make_unique<TrainState<T>>(cfg);
  TrainState<T>& st = *out.state;
  st.update_step = static_cast<int64_t>(get_u64(is, path));
  st.teacher.update_step = static_cast<int64_t>(get_u64(is, path));

  const uint32_t n_tensors = get_u32(is, path);
  std::unordered_map<std::string, Tensor<T>> table;
  bool has_probe = false;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    auto [name, tensor] = get_tensor<T>(is, path);
    if (name.rfind("probe.", 0) == 0) has_probe = true;
    table.emplace(std::move(name), std::move(tensor));
  }

  ParamRegistry<T> all;
  all.entries = st.registry.entries;
  st.teacher.register_params(all, "teacher");
  if (has_probe) {
    Rng dummy(0);
    out.probe = std::make_unique<ProbeModel<T>>(
        cfg.d_model, cfg.data_num_latent_states, dummy);
    out.probe->register_params(all);
  }
  for (const auto& e : all.entries) {
    auto it = table.find(e.name);
    if (it == table.end())
      throw CorruptFileError("checkpoint is missing tensor '" + e.name +
                             "': " + path);
    if (it->second.shape != e.tensor->shape)
      throw ConfigError("checkpoint tensor '" + e.name + "' has shape " +
                        it->second.shape_str() + " but the model expects " +
                        e.tensor->shape_str());
    *e.tensor = std::move(it->second);
    table.erase(it);
  }
  if (!table.empty())
    throw CorruptFileError("checkpoint has unexpected tensor '" +
                           table.begin()->first + "': " + path);

  const uint32_t n_rng = get_u32(is, path);
  for (uint32_t i = 0; i < n_rng; ++i) {
    const std::string name = get_str(is, path);
    std::array<uint64_t, 4> words{};
    for (auto& w : words) w = get_u64(is, path);
    if (name == "loop") st.loop_rng.set_state(words);
  }

  const uint32_t n_opt = get_u32(is, path);
  if (n_opt != st.registry.size())
    throw CorruptFileError("optimizer table size mismatch in " + path);
  for (uint32_t i = 0; i < n_opt; ++i) {
    const std::string name = get_str(is, path);
    if (name != st.registry.entries[i].name)
      throw CorruptFileError("optimizer entry order mismatch at '" + name +
                             "' in " + path);
    st.opt.slots[i].t = static_cast<int64_t>(get_u64(is, path));
    auto& m = st.opt.slots[i].m;
    auto& v = st.opt.slots[i].v;
    is.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(T)));
    is.read(reinterpret_cast<char*>(v.data.data()),
            static_cast<std::streamsize>(v.data.size() * sizeof(T)));
    if (!is) throw CorruptFileError("truncated checkpoint: " + path);
  }
  if (get_u32(is, path) != kCheckpointEnd)
    throw CorruptFileError("missing end marker in checkpoint: " + path);
  return out;
}

}  // namespace av2vec

#endif  // AV2VEC_TRAINKIT_IO_HPP_
