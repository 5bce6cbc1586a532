#include "histotex/weight_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace histotex {
namespace {

constexpr char kMagic[4] = {'H', 'T', 'X', 'W'};

enum LayerKind : std::uint8_t { kConv = 0, kRectifier = 1, kAveragePool = 2, kMaximumPool = 3 };

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw WeightFormatError(WeightFormatError::Kind::unexpected_eof,
                              std::string("while reading ") + what + " at offset " + std::to_string(pos_));
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32(const char* what) { return static_cast<double>(std::bit_cast<float>(u32(what))); }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(Index v, const char* what) {
  if (v < 0 || v > static_cast<Index>(UINT32_MAX)) throw ShapeError(std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

WeightFormatError::WeightFormatError(Kind kind, const std::string& detail)
    : std::runtime_error(std::string(describe(kind)) + ": " + detail), kind_(kind) {}

const char* WeightFormatError::describe(Kind kind) {
  switch (kind) {
    case Kind::bad_magic: return "bad magic";
    case Kind::unexpected_eof: return "unexpected end of file";
    case Kind::version_mismatch: return "version mismatch";
    case Kind::inconsistent_dims: return "inconsistent dimensions";
    case Kind::trailing_data: return "trailing data";
  }
  return "weight format error";
}

std::vector<std::uint8_t> serialize_network(const Network<double>& net) {
  net.validate();
  Writer out;
  out.raw(kMagic, 4);
  out.u32(kWeightFormatVersion);
  for (double m : net.input_mean) out.f32(m);
  out.u32(checked_u32(static_cast<Index>(net.layers.size()), "layer count"));
  for (const auto& layer : net.layers) {
    if (const auto* conv = std::get_if<ConvLayer<double>>(&layer)) {
      const auto& k = conv->kernels;
      out.u8(kConv);
      out.u32(checked_u32(k.out_channels, "out channels"));
      out.u32(checked_u32(k.in_channels, "in channels"));
      out.u32(checked_u32(k.kernel_height, "kernel height"));
      out.u32(checked_u32(k.kernel_width, "kernel width"));
      for (Index i = 0; i < k.weights.size(); ++i) out.f32(k.weights.data()[i]);
      for (Index i = 0; i < k.bias.size(); ++i) out.f32(k.bias[i]);
    } else if (std::holds_alternative<RectifierLayer>(layer)) {
      out.u8(kRectifier);
    } else {
      out.u8(std::get<PoolLayer>(layer).mode == PoolMode::average ? kAveragePool : kMaximumPool);
    }
  }
  out.u32(checked_u32(static_cast<Index>(net.tags.size()), "tag count"));
  for (const auto& [name, index] : net.tags) {
    if (name.empty() || name.size() > 255) throw ConfigError("tag name '" + name + "' must be 1..255 bytes");
    out.u8(static_cast<std::uint8_t>(name.size()));
    out.raw(name.data(), name.size());
    out.u32(checked_u32(static_cast<Index>(index), "tag layer index"));
  }
  return out.take();
}

Network<double> parse_network(std::span<const std::uint8_t> bytes) {
  using Kind = WeightFormatError::Kind;
  Reader in(bytes);
  if (in.remaining() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw WeightFormatError(Kind::bad_magic, "expected \"HTXW\"");
  in.text(4, "magic");
  const std::uint32_t version = in.u32("version");
  if (version != kWeightFormatVersion)
    throw WeightFormatError(Kind::version_mismatch, "file version " + std::to_string(version) + ", reader supports " +
                                                        std::to_string(kWeightFormatVersion));
  Network<double> net;
  for (double& m : net.input_mean) m = in.f32("input mean");
  const std::uint32_t layer_count = in.u32("layer count");
  Index channels = -1;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const std::uint8_t kind = in.u8("layer kind");
    switch (kind) {
      case kConv: {
        const Index out = in.u32("out channels"), inc = in.u32("in channels");
        const Index kh = in.u32("kernel height"), kw = in.u32("kernel width");
        if (out == 0 || inc == 0 || kh % 2 == 0 || kw % 2 == 0)
          throw WeightFormatError(Kind::inconsistent_dims, "layer " + std::to_string(i) + " has invalid filter shape");
        if (channels >= 0 && inc != channels)
          throw WeightFormatError(Kind::inconsistent_dims, "layer " + std::to_string(i) + " expects " +
                                                               std::to_string(inc) + " channels, previous produces " +
                                                               std::to_string(channels));
        const std::size_t count = static_cast<std::size_t>(out) * inc * kh * kw;
        in.need(4 * (count + static_cast<std::size_t>(out)), "convolution weights");
        FilterKernels<double> k(out, inc, kh, kw);
        for (std::size_t j = 0; j < count; ++j) k.weights.data()[j] = in.f32("weights");
        for (Index j = 0; j < out; ++j) k.bias[j] = in.f32("biases");
        channels = out;
        net.layers.push_back(ConvLayer<double>{std::move(k)});
        break;
      }
      case kRectifier: net.layers.push_back(RectifierLayer{}); break;
      case kAveragePool: net.layers.push_back(PoolLayer{PoolMode::average}); break;
      case kMaximumPool: net.layers.push_back(PoolLayer{PoolMode::maximum}); break;
      default:
        throw WeightFormatError(Kind::inconsistent_dims,
                                "layer " + std::to_string(i) + " has unknown kind " + std::to_string(kind));
    }
  }
  const std::uint32_t tag_count = in.u32("tag count");
  for (std::uint32_t t = 0; t < tag_count; ++t) {
    const std::uint8_t length = in.u8("tag name length");
    std::string name = in.text(length, "tag name");
    const std::uint32_t index = in.u32("tag layer index");
    if (index >= net.layers.size() || !std::holds_alternative<RectifierLayer>(net.layers[index]))
      throw WeightFormatError(Kind::inconsistent_dims, "tag '" + name + "' does not name a rectifier layer");
    net.tags[std::move(name)] = index;
  }
  if (in.remaining() != 0)
    throw WeightFormatError(Kind::trailing_data, std::to_string(in.remaining()) + " bytes after the tag table");
  return net;
}

void save_network(const Network<double>& net, const std::filesystem::path& path) {
  const auto bytes = serialize_network(net);
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open '" + path.string() + "' for writing");
  file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw IoError("failed writing '" + path.string() + "'");
}

Network<double> load_network(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open weight file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  return parse_network(bytes);
}

}  // namespace histotex
