// SPDX-License-Identifier: Apache-2.0
//
// Single-file tensor container: a uint64 little-endian manifest length, a
// JSON manifest (names, shapes, dtype, byte offsets, format version), then
// raw little-endian float blobs. f64 round-trips bit-exactly; f32 is a
// narrowed storage mode.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "duet/tensor.hpp"

namespace duet {

static_assert(std::endian::native == std::endian::little, "checkpoint io assumes a little-endian host");

enum class CkptDtype { f64, f32 };

inline const char* dtype_name(CkptDtype d) { return d == CkptDtype::f64 ? "f64" : "f32"; }

inline constexpr int kCheckpointFormatVersion = 1;

inline void save_tensors(const std::string& path,
                         const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                         CkptDtype dtype = CkptDtype::f64) {
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["dtype"] = dtype_name(dtype);
  nlohmann::json entries = nlohmann::json::array();
  const std::size_t elem = dtype == CkptDtype::f64 ? 8 : 4;
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t->shape;
    e["offset"] = offset;
    e["nbytes"] = std::uint64_t(t->data.size()) * elem;
    entries.push_back(std::move(e));
    offset += std::uint64_t(t->data.size()) * elem;
  }
  manifest["tensors"] = std::move(entries);
  const std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  const std::uint64_t mlen = mtext.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mtext.data(), std::streamsize(mtext.size()));
  for (const auto& [name, t] : tensors) {
    (void)name;
    if (dtype == CkptDtype::f64) {
      out.write(reinterpret_cast<const char*>(t->data.data()), std::streamsize(t->data.size() * 8));
    } else {
      std::vector<float> narrow(t->data.begin(), t->data.end());
      out.write(reinterpret_cast<const char*>(narrow.data()), std::streamsize(narrow.size() * 4));
    }
  }
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

struct LoadedCheckpoint {
  int format_version = 0;
  CkptDtype dtype = CkptDtype::f64;
  std::vector<std::pair<std::string, Tensor>> tensors;  // file order

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

inline LoadedCheckpoint load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  if (!in) throw std::runtime_error("checkpoint: truncated header: " + path);
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), std::streamsize(mlen));
  if (!in) throw std::runtime_error("checkpoint: truncated manifest: " + path);
  nlohmann::json manifest = nlohmann::json::parse(mtext);

  LoadedCheckpoint result;
  result.format_version = manifest.at("format_version").get<int>();
  if (result.format_version != kCheckpointFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version");
  const std::string dt = manifest.at("dtype").get<std::string>();
  if (dt == "f64")
    result.dtype = CkptDtype::f64;
  else if (dt == "f32")
    result.dtype = CkptDtype::f32;
  else
    throw std::runtime_error("checkpoint: unknown dtype: " + dt);
  const std::size_t elem = result.dtype == CkptDtype::f64 ? 8 : 4;

  const std::streampos data_start = in.tellg();
  for (const auto& e : manifest.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    Shape shape = e.at("shape").get<Shape>();
    const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
    const std::uint64_t nbytes = e.at("nbytes").get<std::uint64_t>();
    const std::size_t count = std::size_t(shape_numel(shape));
    if (nbytes != count * elem) throw std::runtime_error("checkpoint: size mismatch for " + name);
    in.seekg(data_start + std::streampos(offset));
    Tensor t(shape);
    if (result.dtype == CkptDtype::f64) {
      in.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(nbytes));
    } else {
      std::vector<float> narrow(count);
      in.read(reinterpret_cast<char*>(narrow.data()), std::streamsize(nbytes));
      for (std::size_t i = 0; i < count; ++i) t.data[i] = double(narrow[i]);
    }
    if (!in) throw std::runtime_error("checkpoint: truncated blob for " + name);
    result.tensors.emplace_back(name, std::move(t));
  }
  return result;
}

}  // namespace duet
