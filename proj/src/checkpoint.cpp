#include "sepbn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "sepbn/config.hpp"
#include "sepbn/errors.hpp"

namespace sepbn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'E', 'P', 'B', 'N', 'C', 'K', '\0'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void floats(std::span<const float> v) { raw(v.data(), v.size() * sizeof(float)); }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

  void raw(void* out, std::size_t n) {
    if (n > bytes_.size() - pos_) fail("truncated (needed " + std::to_string(n) + " more bytes)");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > bytes_.size() - pos_) fail("string length out of range");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::vector<float> floats(std::size_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(float)) fail("tensor data truncated");
    std::vector<float> v(n);
    raw(v.data(), n * sizeof(float));
    return v;
  }
  std::size_t pos() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError(name_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const CheckpointMeta& meta) {
  Network net = model.net;
  const auto& cfg = net.config();
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u64(meta.config_digest);
  w.u64(meta.seed);
  w.u32(static_cast<std::uint32_t>(cfg.depth));
  w.u32(static_cast<std::uint32_t>(cfg.width));
  w.u32(static_cast<std::uint32_t>(cfg.in_channels));
  w.u32(static_cast<std::uint32_t>(cfg.classes));
  w.u32(static_cast<std::uint32_t>(cfg.bn_mode));
  w.u32(static_cast<std::uint32_t>(model.norm.mean.size()));
  w.floats(model.norm.mean);
  w.floats(model.norm.std);
  const auto params = net.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    const auto& shape = p.param->value.shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) w.u32(static_cast<std::uint32_t>(d));
    w.floats(p.param->value.values());
  }
  const auto norms = net.norm_layers();
  w.u32(static_cast<std::uint32_t>(norms.size()));
  for (const auto& n : norms) {
    w.str(n.name);
    const auto& slots = n.norm->stat_slots();
    w.u32(static_cast<std::uint32_t>(slots.size()));
    for (const auto& s : slots) {
      w.u64(s.updates);
      w.u32(static_cast<std::uint32_t>(s.mean.size()));
      w.floats(s.mean);
      w.floats(s.var);
    }
  }
  w.u64(fnv1a(w.bytes));
  return std::move(w.bytes);
}

LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& name) {
  Reader r(bytes, name);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) r.fail("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(name + ": format version " + std::to_string(version) +
                          " is not supported (this build reads version " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < 8 + 4 + 8) r.fail("truncated");
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (fnv1a(bytes.first(bytes.size() - 8)) != stored) {
    throw CheckpointError(name + ": checksum mismatch (file is corrupt or was modified)");
  }
  const auto body = bytes.first(bytes.size() - 8);
  Reader b(body, name);
  b.raw(magic, sizeof magic);
  b.u32();

  LoadedCheckpoint out;
  out.meta.config_digest = b.u64();
  out.meta.seed = b.u64();
  ModelConfig cfg;
  cfg.depth = static_cast<int>(b.u32());
  cfg.width = static_cast<int>(b.u32());
  cfg.in_channels = static_cast<int>(b.u32());
  cfg.classes = static_cast<int>(b.u32());
  const std::uint32_t mode = b.u32();
  if (mode > 2) b.fail("unknown BN mode " + std::to_string(mode));
  cfg.bn_mode = static_cast<BnMode>(mode);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    b.fail(std::string("invalid model config: ") + e.what());
  }
  const std::uint32_t channels = b.u32();
  if (channels != static_cast<std::uint32_t>(cfg.in_channels)) b.fail("standardization channel count");
  out.model.norm.mean = b.floats(channels);
  out.model.norm.std = b.floats(channels);

  out.model.net = Network::build(cfg, 0);
  auto params = out.model.net.parameters();
  if (b.u32() != params.size()) b.fail("parameter count differs from the architecture");
  for (auto& p : params) {
    if (b.str() != p.name) b.fail("expected parameter '" + p.name + "'");
    const std::uint32_t rank = b.u32();
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(b.u32()));
    if (shape != p.param->value.shape()) {
      b.fail("parameter '" + p.name + "' has shape " + shape_string(shape) + ", expected " +
             shape_string(p.param->value.shape()));
    }
    const auto data = b.floats(p.param->value.size());
    std::copy(data.begin(), data.end(), p.param->value.data());
  }
  auto norms = out.model.net.norm_layers();
  if (b.u32() != norms.size()) b.fail("norm layer count differs from the architecture");
  for (auto& n : norms) {
    if (b.str() != n.name) b.fail("expected norm layer '" + n.name + "'");
    auto& slots = n.norm->stat_slots();
    if (b.u32() != slots.size()) b.fail("norm layer '" + n.name + "' store count");
    for (auto& s : slots) {
      s.updates = b.u64();
      if (b.u32() != s.mean.size()) b.fail("norm layer '" + n.name + "' channel count");
      s.mean = b.floats(s.mean.size());
      s.var = b.floats(s.var.size());
    }
  }
  if (b.pos() != body.size()) b.fail("trailing bytes");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta) {
  const auto bytes = encode_checkpoint(model, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for checkpoint '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

}  // namespace sepbn
