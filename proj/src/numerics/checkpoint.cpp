#include "crm/numerics/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "crm/error.hpp"

namespace crm {

namespace {

constexpr std::string_view kMagic = "CRMCKPT1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t u64() {
    need(8, "integer");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw DataError(std::string("checkpoint truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Matrix& Checkpoint::tensor(std::string_view name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw DataError("checkpoint has no tensor '" + std::string(name) + "'");
}

bool Checkpoint::has_tensor(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.first == name) return true;
  }
  return false;
}

const std::string& Checkpoint::meta_value(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw DataError("checkpoint has no metadata key '" + key + "'");
  return it->second;
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic);
  for (const auto& [k, v] : meta) {
    if (k.find('=') != std::string::npos) throw DataError("metadata key may not contain '=': " + k);
    const std::string name = "@" + k + "=" + v;
    put_u64(out, name.size());
    out += name;
    put_u64(out, 0);
    put_u64(out, 0);
  }
  for (const auto& [name, m] : tensors) {
    if (name.starts_with('@')) throw DataError("tensor names may not start with '@': " + name);
    put_u64(out, name.size());
    out += name;
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    const std::size_t start = out.size();
    out.resize(start + m.size() * sizeof(float));
    if (m.size() > 0) std::memcpy(out.data() + start, m.data(), m.size() * sizeof(float));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size(), "magic") != kMagic) throw DataError("not a checkpoint: bad magic");
  Checkpoint ckpt;
  while (!r.done()) {
    const std::uint64_t name_len = r.u64();
    std::string name(r.take(name_len, "tensor name"));
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (name.starts_with('@') && rows == 0 && cols == 0) {
      const auto eq = name.find('=');
      if (eq == std::string::npos) throw DataError("malformed metadata record '" + name + "'");
      ckpt.meta[name.substr(1, eq - 1)] = name.substr(eq + 1);
      continue;
    }
    if (cols != 0 && rows > (bytes.size() / sizeof(float)) / cols) throw DataError("tensor '" + name + "' too large");
    const auto payload = r.take(rows * cols * sizeof(float), "tensor payload");
    Matrix m(rows, cols);
    if (m.size() > 0) std::memcpy(m.data(), payload.data(), payload.size());
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  const std::string bytes = serialize();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed for '" + path.string() + "'");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

void store_params(Checkpoint& ckpt, const ParamList<float>& params) {
  for (const auto& p : params) ckpt.add(p.name, p.param->value);
}

void load_params(const Checkpoint& ckpt, const ParamList<float>& params) {
  for (const auto& p : params) {
    const Matrix& m = ckpt.tensor(p.name);
    if (!m.same_shape(p.param->value)) {
      throw DataError("checkpoint tensor '" + p.name + "' has shape " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", model expects " + std::to_string(p.param->value.rows()) + "x" +
                      std::to_string(p.param->value.cols()));
    }
    p.param->value = m;
    p.param->zero_grad();
  }
}

}  // namespace crm
