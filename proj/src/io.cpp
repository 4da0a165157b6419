#include "tsdq/io.hpp"

#include <cmath>
#include <cstring>
#include <algorithm>
#include <sstream>
#include <fstream>
#include <vector>

namespace tsdq {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'D', 'Q'};
constexpr char kCheckpointMagic[4] = {'T', 'S', 'D', 'N'};
constexpr std::uint16_t kVersion = 1;

void put_bytes(std::string& buf, const void* p, std::size_t n) {
  buf.append(static_cast<const char*>(p), n);
}

template <typename T>
void put_le(std::string& buf, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
#endif
  put_bytes(buf, b, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& path) : path_(path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(IoErrorKind::kFileSystem, "cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    data_ = ss.str();
  }

  void take(void* out, std::size_t n) {
    if (pos_ + n > data_.size()) {
      throw IoError(IoErrorKind::kTruncated, "truncated file: " + path_);
    }
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }

  template <typename T>
  T take_le() {
    unsigned char b[sizeof(T)];
    take(b, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
#endif
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }

  std::vector<double> take_doubles(std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = take_le<double>();
    return v;
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::string data_;
  std::size_t pos_ = 0;
};

void put_doubles(std::string& buf, const std::vector<double>& v) {
  for (double d : v) put_le(buf, d);
}

void write_file(const std::string& path, const std::string& buf) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(IoErrorKind::kFileSystem, "cannot open " + path + " for writing");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError(IoErrorKind::kFileSystem, "short write to " + path);
}

}  // namespace

void write_container(const std::string& path, const Payload& payload) {
  std::string buf;
  put_bytes(buf, kMagic, 4);
  put_le<std::uint16_t>(buf, kVersion);
  if (std::holds_alternative<Image>(payload)) {
    const Image& img = std::get<Image>(payload);
    put_le<std::uint8_t>(buf, 0);
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(img.side));
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(img.side));
    put_doubles(buf, img.data);
  } else {
    const Sinogram& s = std::get<Sinogram>(payload);
    put_le<std::uint8_t>(buf, 1);
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(s.n_angles));
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(s.n_detectors));
    put_doubles(buf, s.data);
  }
  write_file(path, buf);
}

Payload read_container(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError(IoErrorKind::kBadMagic, "not a TSDQ container: " + path);
  }
  const auto version = r.take_le<std::uint16_t>();
  if (version != kVersion) {
    throw IoError(IoErrorKind::kBadVersion,
                  "unsupported container version in " + path + ": " + std::to_string(version));
  }
  const auto kind = r.take_le<std::uint8_t>();
  const auto rows = r.take_le<std::uint32_t>();
  const auto cols = r.take_le<std::uint32_t>();
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (kind == 0) {
    if (rows != cols) throw IoError(IoErrorKind::kBadHeader, "non-square image in " + path);
    Image img;
    img.side = static_cast<int>(rows);
    img.data = r.take_doubles(n);
    return img;
  }
  if (kind == 1) {
    Sinogram s;
    s.n_angles = static_cast<int>(rows);
    s.n_detectors = static_cast<int>(cols);
    s.data = r.take_doubles(n);
    return s;
  }
  throw IoError(IoErrorKind::kBadHeader, "unknown payload kind in " + path);
}

Image read_image(const std::string& path) {
  Payload p = read_container(path);
  if (!std::holds_alternative<Image>(p)) {
    throw IoError(IoErrorKind::kBadHeader, "expected an image payload in " + path);
  }
  return std::get<Image>(std::move(p));
}

Sinogram read_sinogram(const std::string& path) {
  Payload p = read_container(path);
  if (!std::holds_alternative<Sinogram>(p)) {
    throw IoError(IoErrorKind::kBadHeader, "expected a sinogram payload in " + path);
  }
  return std::get<Sinogram>(std::move(p));
}

void export_pgm(const Image& x, const std::string& path, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("export_pgm: window must satisfy lo < hi");
  std::string buf = "P5\n" + std::to_string(x.side) + " " + std::to_string(x.side) + "\n65535\n";
  for (double v : x.data) {
    double t = (v - lo) / (hi - lo) * 65535.0;
    t = std::clamp(t, 0.0, 65535.0);
    // Ties round half to even (default FP rounding mode).
    const auto q = static_cast<std::uint16_t>(std::nearbyint(t));
    buf += static_cast<char>(q >> 8);  // PGM 16-bit samples are big-endian
    buf += static_cast<char>(q & 0xff);
  }
  write_file(path, buf);
}

namespace {

void put_layer(std::string& buf, const ConvLayer& L) {
  put_le<std::int32_t>(buf, L.in_ch);
  put_le<std::int32_t>(buf, L.out_ch);
  put_le<std::int32_t>(buf, L.ksize);
  put_le<std::int32_t>(buf, L.scale);
  put_le<std::uint64_t>(buf, L.kernel.size());
  put_doubles(buf, L.kernel);
  put_le<std::uint64_t>(buf, L.bias.size());
  put_doubles(buf, L.bias);
  put_le<std::uint64_t>(buf, L.sn_u.size());
  put_doubles(buf, L.sn_u);
  put_le<std::uint64_t>(buf, L.sn_v.size());
  put_doubles(buf, L.sn_v);
  put_le<double>(buf, L.sn_sigma);
}

ConvLayer take_layer(Reader& r) {
  ConvLayer L;
  L.in_ch = r.take_le<std::int32_t>();
  L.out_ch = r.take_le<std::int32_t>();
  L.ksize = r.take_le<std::int32_t>();
  L.scale = r.take_le<std::int32_t>();
  L.kernel = r.take_doubles(r.take_le<std::uint64_t>());
  L.bias = r.take_doubles(r.take_le<std::uint64_t>());
  L.sn_u = r.take_doubles(r.take_le<std::uint64_t>());
  L.sn_v = r.take_doubles(r.take_le<std::uint64_t>());
  L.sn_sigma = r.take_le<double>();
  return L;
}

void put_tensor_list(std::string& buf, const std::vector<std::vector<double>>& ts) {
  put_le<std::uint64_t>(buf, ts.size());
  for (const auto& t : ts) {
    put_le<std::uint64_t>(buf, t.size());
    put_doubles(buf, t);
  }
}

std::vector<std::vector<double>> take_tensor_list(Reader& r) {
  std::vector<std::vector<double>> ts(r.take_le<std::uint64_t>());
  for (auto& t : ts) t = r.take_doubles(r.take_le<std::uint64_t>());
  return ts;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string buf;
  put_bytes(buf, kCheckpointMagic, 4);
  put_le<std::uint16_t>(buf, kVersion);
  const DenoiserSpec& s = ckpt.params.spec;
  put_le<std::int32_t>(buf, s.n_scales);
  put_le<std::int32_t>(buf, s.channels);
  put_le<std::int32_t>(buf, s.kernel_size);
  put_le<std::int32_t>(buf, s.activation == Activation::kRelu ? 0 : 1);
  put_le<double>(buf, s.leaky_slope);
  put_le<std::uint8_t>(buf, s.use_skip ? 1 : 0);
  put_le<std::int32_t>(buf, s.sn_power_iters);
  put_le<std::int32_t>(buf, s.sn_side);
  put_le<std::uint64_t>(buf, ckpt.params.seed);
  put_le<std::int32_t>(buf, ckpt.epochs_done);
  put_le<std::uint8_t>(buf, ckpt.has_adam ? 1 : 0);
  put_le<std::uint64_t>(buf, ckpt.params.layers.size());
  for (const auto& L : ckpt.params.layers) put_layer(buf, L);
  if (ckpt.has_adam) {
    put_le<std::int64_t>(buf, ckpt.adam.step_count);
    put_tensor_list(buf, ckpt.adam.m_kernel);
    put_tensor_list(buf, ckpt.adam.v_kernel);
    put_tensor_list(buf, ckpt.adam.m_bias);
    put_tensor_list(buf, ckpt.adam.v_bias);
  }
  write_file(path, buf);
}

Checkpoint read_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw IoError(IoErrorKind::kBadMagic, "not a checkpoint file: " + path);
  }
  const auto version = r.take_le<std::uint16_t>();
  if (version != kVersion) {
    throw IoError(IoErrorKind::kBadVersion, "unsupported checkpoint version in " + path);
  }
  Checkpoint c;
  DenoiserSpec& s = c.params.spec;
  s.n_scales = r.take_le<std::int32_t>();
  s.channels = r.take_le<std::int32_t>();
  s.kernel_size = r.take_le<std::int32_t>();
  s.activation = r.take_le<std::int32_t>() == 0 ? Activation::kRelu : Activation::kLeakyRelu;
  s.leaky_slope = r.take_le<double>();
  s.use_skip = r.take_le<std::uint8_t>() != 0;
  s.sn_power_iters = r.take_le<std::int32_t>();
  s.sn_side = r.take_le<std::int32_t>();
  c.params.seed = r.take_le<std::uint64_t>();
  c.epochs_done = r.take_le<std::int32_t>();
  c.has_adam = r.take_le<std::uint8_t>() != 0;
  const auto n_layers = r.take_le<std::uint64_t>();
  c.params.layers.reserve(n_layers);
  for (std::uint64_t i = 0; i < n_layers; ++i) c.params.layers.push_back(take_layer(r));
  if (c.has_adam) {
    c.adam.step_count = r.take_le<std::int64_t>();
    c.adam.m_kernel = take_tensor_list(r);
    c.adam.v_kernel = take_tensor_list(r);
    c.adam.m_bias = take_tensor_list(r);
    c.adam.v_bias = take_tensor_list(r);
  }
  return c;
}

}  // namespace tsdq
