#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "crm/numerics/matrix.hpp"
#include "crm/numerics/param.hpp"

namespace crm {

// On-disk layout, all integers 64-bit little-endian unsigned:
//
//   "CRMCKPT1"
//   repeated until EOF:
//     name_len, name bytes, rows, cols, rows*cols float32 LE (row-major)
//
// String metadata rides in the same record stream as 0x0 tensors whose
// name is "@key=value".
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Matrix>> tensors;

  void add(std::string name, Matrix m) { tensors.emplace_back(std::move(name), std::move(m)); }
  const Matrix& tensor(std::string_view name) const;
  bool has_tensor(std::string_view name) const;
  const std::string& meta_value(const std::string& key) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);
};

// Copy every parameter value into / out of a checkpoint, keyed by name.
// Loading checks that every parameter is present with a matching shape.
void store_params(Checkpoint& ckpt, const ParamList<float>& params);
void load_params(const Checkpoint& ckpt, const ParamList<float>& params);

}  // namespace crm
