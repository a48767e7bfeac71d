#include "stairwalk/nnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace stairwalk::nnet {

namespace {

constexpr char kMagic[8] = {'S', 'W', 'C', 'K', 'P', 'T', '0', '1'};

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void bytes(std::string_view s) { out_.append(s); }
  [[nodiscard]] const std::string& str() const { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view s) : s_(s) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string r(s_.substr(pos_, n));
    pos_ += n;
    return r;
  }
  [[nodiscard]] std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > s_.size()) throw ParseError("checkpoint is truncated");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(const std::string& name, const Mat& m) {
  for (auto& [n, t] : tensors) {
    if (n == name) {
      t = m;
      return;
    }
  }
  tensors.emplace_back(name, m);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

const Mat& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw ParseError("checkpoint has no tensor '" + name + "'");
}

void Checkpoint::store(const std::vector<Parameter>& params, const std::string& prefix) {
  for (const auto& p : params) put(prefix + p.name, p.value);
}

void Checkpoint::store(const std::vector<Parameter*>& params, const std::string& prefix) {
  for (const auto* p : params) put(prefix + p->name, p->value);
}

void Checkpoint::restore(std::vector<Parameter>& params, const std::string& prefix) const {
  std::vector<Parameter*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  restore(ptrs, prefix);
}

void Checkpoint::restore(const std::vector<Parameter*>& params, const std::string& prefix) const {
  for (Parameter* p : params) {
    const Mat& t = get(prefix + p->name);
    if (t.rows() != p->value.rows() || t.cols() != p->value.cols())
      throw LayoutMismatch("checkpoint tensor '" + prefix + p->name + "' is " + std::to_string(t.rows()) + "x" +
                           std::to_string(t.cols()) + ", expected " + std::to_string(p->value.rows()) + "x" +
                           std::to_string(p->value.cols()));
    p->value = t;
  }
}

std::string serialize(const Checkpoint& c) {
  Writer w;
  w.bytes(std::string_view(kMagic, sizeof kMagic));
  w.u32(kCheckpointVersion);
  w.u64(c.config_hash);
  w.u64(c.layout_checksum);
  w.u32(static_cast<std::uint32_t>(c.meta.size()));
  w.bytes(c.meta);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, m] : c.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) w.f64(m(i, j));
  }
  const std::uint64_t sum = fnv1a64(w.str());
  w.u64(sum);
  return w.str();
}

Checkpoint deserialize(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw ParseError("not a checkpoint file (bad magic)");
  Reader r(bytes);
  r.bytes(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                     std::to_string(kCheckpointVersion) + ")");
  Checkpoint c;
  c.config_hash = r.u64();
  c.layout_checksum = r.u64();
  c.meta = r.bytes(r.u32());
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.bytes(r.u32());
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols * 8 > bytes.size()) throw ParseError("checkpoint is truncated");
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = r.f64();
    c.tensors.emplace_back(std::move(name), std::move(m));
  }
  const std::size_t body = r.pos();
  const std::uint64_t stored = r.u64();
  if (stored != fnv1a64(std::string_view(bytes).substr(0, body)))
    throw ParseError("checkpoint checksum mismatch (file is corrupt)");
  if (r.pos() != bytes.size()) throw ParseError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
    const std::string bytes = serialize(c);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("failed while writing checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const ParseError& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
}

void require_layout(const Checkpoint& c, std::uint64_t expected) {
  if (c.layout_checksum != expected)
    throw LayoutMismatch("checkpoint observation layout " + hex64(c.layout_checksum) +
                         " does not match the environment layout " + hex64(expected));
}

}  // namespace stairwalk::nnet
