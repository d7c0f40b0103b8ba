// Copyright 2026 The LCFD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Weight file format (all integers little-endian):
//
//   "LCFDW"  u16 version  u32 count
//   count x { u16 name_len, name bytes, u32 dims[4], u64 payload offset }
//   payload: float32 values, tensors back to back
//   32-byte SHA-256 of every preceding byte
//
// Entries whose name begins with "meta." are non-trainable buffers.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lcfd/bytes.hpp"
#include "lcfd/errors.hpp"
#include "lcfd/nn/params.hpp"

namespace lcfd::nn {

inline constexpr char kCheckpointMagic[] = "LCFDW";
inline constexpr uint16_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::array<uint32_t, 4> dims{};
  uint64_t offset = 0;  // bytes from the start of the payload
};

struct Checkpoint {
  uint16_t version = kCheckpointVersion;
  std::vector<CheckpointEntry> entries;
  std::vector<uint8_t> payload;
  Hash256 hash{};
};

inline bool is_buffer_name(const std::string& name) {
  return name.rfind("meta.", 0) == 0;
}

inline std::vector<uint8_t> serialize_checkpoint(const ParamStore<float>& store) {
  ByteWriter w;
  w.str(std::string(kCheckpointMagic, 5));
  w.u16(kCheckpointVersion);
  w.u32(static_cast<uint32_t>(store.size()));
  uint64_t offset = 0;
  for (size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    if (p.name.size() > 0xffff) throw input_error("parameter name too long");
    w.u16(static_cast<uint16_t>(p.name.size()));
    w.str(p.name);
    for (int d : p.value.dims()) w.u32(static_cast<uint32_t>(d));
    w.u64(offset);
    offset += p.value.size() * sizeof(float);
  }
  for (size_t i = 0; i < store.size(); ++i)
    for (float v : store[i].value.data) w.f32(v);
  const Hash256 h = sha256(w.buffer());
  w.bytes(h);
  return w.take();
}

inline Checkpoint parse_checkpoint(std::span<const uint8_t> bytes) {
  if (bytes.size() < 5 + 2 + 4 + 32) throw corrupt_error("checkpoint hash mismatch");
  const auto body = bytes.first(bytes.size() - 32);
  Checkpoint ck;
  std::copy(bytes.end() - 32, bytes.end(), ck.hash.begin());
  if (sha256(body) != ck.hash) throw corrupt_error("checkpoint hash mismatch");

  ByteReader r(body);
  const auto magic = r.bytes(5);
  if (std::string(magic.begin(), magic.end()) != std::string(kCheckpointMagic, 5))
    throw corrupt_error("not a weight file");
  ck.version = r.u16();
  if (ck.version != kCheckpointVersion)
    throw corrupt_error("checkpoint version mismatch: " + std::to_string(ck.version));
  const uint32_t count = r.u32();
  uint64_t expect = 0;
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const uint16_t len = r.u16();
    const auto name = r.bytes(len);
    e.name.assign(name.begin(), name.end());
    for (auto& d : e.dims) d = r.u32();
    e.offset = r.u64();
    if (e.offset != expect) throw corrupt_error("checkpoint manifest offsets overlap");
    uint64_t n = 1;
    for (auto d : e.dims) n *= d;
    expect += n * sizeof(float);
    ck.entries.push_back(std::move(e));
  }
  if (r.remaining() != expect) throw corrupt_error("checkpoint payload size mismatch");
  const auto payload = r.bytes(expect);
  ck.payload.assign(payload.begin(), payload.end());
  return ck;
}

inline ParamStore<float> to_store(const Checkpoint& ck) {
  ParamStore<float> store;
  for (const auto& e : ck.entries) {
    Tensor4<float> t(static_cast<int>(e.dims[0]), static_cast<int>(e.dims[1]),
                     static_cast<int>(e.dims[2]), static_cast<int>(e.dims[3]));
    ByteReader r(std::span(ck.payload).subspan(e.offset, t.size() * sizeof(float)));
    for (auto& v : t.data) v = r.f32();
    store.add(e.name, std::move(t), !is_buffer_name(e.name));
  }
  return store;
}

// Returns the content hash written into the file.
inline Hash256 save_checkpoint(const ParamStore<float>& store,
                               const std::string& path) {
  const auto bytes = serialize_checkpoint(store);
  write_file(path, bytes);
  Hash256 h;
  std::copy(bytes.end() - 32, bytes.end(), h.begin());
  return h;
}

inline Checkpoint read_checkpoint(const std::string& path) {
  return parse_checkpoint(read_file(path));
}

inline ParamStore<float> load_checkpoint(const std::string& path) {
  return to_store(read_checkpoint(path));
}

}  // namespace lcfd::nn
