#include "tads/weights_io.hpp"

#include <bit>
#include <cstring>

#include "tads/checksum.hpp"
#include "tads/error.hpp"

namespace tads {
namespace {

constexpr char kMagic[8] = {'T', 'A', 'D', 'S', 'N', 'E', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t take(std::size_t width) {
    if (pos_ + width > bytes_.size()) throw ParseError("weight file truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += width;
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  double f64() { return std::bit_cast<double>(take(8)); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_networks(const std::vector<Mlp>& nets) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kWeightFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(nets.size()));
  for (const Mlp& net : nets) {
    put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
    for (const DenseLayer& layer : net.layers()) {
      put_u32(out, static_cast<std::uint32_t>(layer.input_dim()));
      put_u32(out, static_cast<std::uint32_t>(layer.output_dim()));
      out.push_back(static_cast<char>(layer.activation));
      for (double w : layer.weights.data()) put_f64(out, w);
      for (double b : layer.bias) put_f64(out, b);
    }
  }
  return out;
}

std::vector<Mlp> decode_networks(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("weight file: bad magic");
  }
  Reader reader(bytes);
  reader.take(sizeof(kMagic));
  const std::uint32_t version = reader.u32();
  if (version != kWeightFormatVersion) {
    throw ParseError("weight file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = reader.u32();
  std::vector<Mlp> nets;
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::uint32_t layer_count = reader.u32();
    std::vector<DenseLayer> layers;
    for (std::uint32_t l = 0; l < layer_count; ++l) {
      const std::uint32_t in = reader.u32();
      const std::uint32_t out = reader.u32();
      const auto act = static_cast<std::uint32_t>(reader.take(1));
      if (act > static_cast<std::uint32_t>(Activation::kSigmoid)) {
        throw ParseError("weight file: unknown activation " + std::to_string(act));
      }
      DenseLayer layer{DenseMatrix(out, in), std::vector<double>(out), static_cast<Activation>(act)};
      for (double& w : layer.weights.data()) w = reader.f64();
      for (double& b : layer.bias) b = reader.f64();
      layers.push_back(std::move(layer));
    }
    nets.emplace_back(std::move(layers));
  }
  if (!reader.done()) throw ParseError("weight file: trailing bytes");
  return nets;
}

void save_networks(const std::filesystem::path& path, const std::vector<Mlp>& nets) {
  write_file_atomic(path, encode_networks(nets));
}

std::vector<Mlp> load_networks(const std::filesystem::path& path) {
  return decode_networks(read_file(path));
}

}  // namespace tads
