#include <bit>
#include <fstream>
#include <iterator>
#include <limits>

#include "pvst/error.hpp"
#include "pvst/network.hpp"

// PVST weights file, little-endian:
//   "PVST" u32 version(=1) u32 layer_count
//   per layer: u16 name_len, name bytes, u32 outC inC kH kW,
//              f32[outC*inC*kH*kW] kernel, u32 bias_len, f32[bias_len] bias

namespace pvst {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr char kMagic[4] = {'P', 'V', 'S', 'T'};

class Writer {
 public:
  void u16(std::uint16_t v) {
    bytes_.push_back(static_cast<char>(v & 0xFF));
    bytes_.push_back(static_cast<char>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) bytes_.push_back(static_cast<char>((v >> s) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::kTruncated, "weights file ended early", name_);
  }
  std::uint16_t u16() {
    need(2);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += 2;
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    need(4);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_weights(const NetworkWeights& w, const std::filesystem::path& path) {
  validate(w);
  Writer out;
  out.raw(kMagic, 4);
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(w.layers.size()));
  for (const ConvLayer& l : w.layers) {
    out.u16(static_cast<std::uint16_t>(l.name.size()));
    out.raw(l.name.data(), l.name.size());
    out.u32(l.out_channels);
    out.u32(l.in_channels);
    out.u32(l.kernel_h);
    out.u32(l.kernel_w);
    for (float v : l.kernel) out.f32(v);
    out.u32(static_cast<std::uint32_t>(l.bias.size()));
    for (float v : l.bias) out.f32(v);
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::kIo, "cannot open for writing", path.string());
  file.write(out.bytes().data(), static_cast<std::streamsize>(out.bytes().size()));
  if (!file) throw Error(ErrorKind::kIo, "write failed", path.string());
}

NetworkWeights load_weights(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::kMissingFile, "cannot open", name);
  Reader in(std::string(std::istreambuf_iterator<char>(file), {}), name);

  if (in.remaining() < 4 || in.str(4) != std::string(kMagic, 4)) {
    throw Error(ErrorKind::kBadMagic, "expected \"PVST\"", name);
  }
  if (const std::uint32_t version = in.u32(); version != kVersion) {
    throw Error(ErrorKind::kMalformedHeader, "unsupported version " + std::to_string(version), name);
  }
  const std::uint32_t count = in.u32();
  NetworkWeights w;
  for (std::uint32_t i = 0; i < count; ++i) {
    ConvLayer l;
    l.name = in.str(in.u16());
    l.out_channels = in.u32();
    l.in_channels = in.u32();
    l.kernel_h = in.u32();
    l.kernel_w = in.u32();
    const std::uint64_t n = static_cast<std::uint64_t>(l.out_channels) * l.in_channels *
                            l.kernel_h * l.kernel_w;
    if (n > in.remaining() / 4) throw Error(ErrorKind::kTruncated, "kernel data", name);
    l.kernel.resize(n);
    for (float& v : l.kernel) v = in.f32();
    const std::uint32_t nb = in.u32();
    if (nb > in.remaining() / 4) throw Error(ErrorKind::kTruncated, "bias data", name);
    l.bias.resize(nb);
    for (float& v : l.bias) v = in.f32();
    w.layers.push_back(std::move(l));
  }
  try {
    validate(w);
  } catch (const Error& e) {
    throw Error(e.kind(), e.what(), name);
  }
  return w;
}

}  // namespace pvst
