#include "ssvi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ssvi/error.hpp"

namespace ssvi {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'V', 'I', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    std::uint64_t u = 0;
    if constexpr (std::is_same_v<T, double>)
      u = std::bit_cast<std::uint64_t>(v);
    else
      u = static_cast<std::uint64_t>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void str(const std::string& s) {
    le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  const std::uint8_t* take(std::size_t k, const char* what) {
    if (k > n_ - pos_)
      throw Error(Errc::checkpoint_corrupt, std::string("truncated while reading ") + what +
                                                " at offset " + std::to_string(pos_));
    const std::uint8_t* at = p_ + pos_;
    pos_ += k;
    return at;
  }
  template <class T>
  T le(const char* what) {
    const std::uint8_t* b = take(sizeof(T), what);
    std::uint64_t u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    if constexpr (std::is_same_v<T, double>)
      return std::bit_cast<double>(u);
    else
      return static_cast<T>(u);
  }
  std::string str(const char* what) {
    const auto len = le<std::uint32_t>(what);
    const std::uint8_t* b = take(len, what);
    return std::string(reinterpret_cast<const char*>(b), len);
  }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint8_t>(ckpt.net.task == Task::Classification ? 0 : 1);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.num_classes));
  w.le<std::uint64_t>(ckpt.step);
  w.le<std::uint64_t>(ckpt.budget);
  w.str(ckpt.rng_state);
  w.str(ckpt.config_text);
  const auto k = static_cast<std::uint32_t>(ckpt.norm.mean.size());
  if (ckpt.norm.scale.size() != ckpt.norm.mean.size())
    throw Error(Errc::dimension_mismatch, "normalisation mean and scale differ in length");
  w.le<std::uint32_t>(k);
  for (std::uint32_t i = 0; i < k; ++i) w.le<double>(ckpt.norm.mean(i));
  for (std::uint32_t i = 0; i < k; ++i) w.le<double>(ckpt.norm.scale(i));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.net.layers.size()));
  for (const auto& layer : ckpt.net.layers) {
    const auto out = layer.out_dim();
    const auto in = layer.in_dim();
    w.le<std::uint32_t>(static_cast<std::uint32_t>(out));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(in));
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) w.le<double>(layer.mu(r, c));
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) w.le<double>(layer.sigma(r, c));
    for (Eigen::Index r = 0; r < out; ++r) w.le<double>(layer.bias(r));
    std::vector<std::uint8_t> bits(static_cast<std::size_t>((out * in + 7) / 8), 0);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c)
        if (layer.mask(r, c) != 0) {
          const auto i = static_cast<std::size_t>(r * in + c);
          bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
        }
    w.bytes(bits.data(), bits.size());
  }
  const std::uint64_t h = fnv1a64(w.data().data(), w.data().size());
  w.le<std::uint64_t>(h);
  return std::move(w.data());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 8)
    throw Error(Errc::checkpoint_corrupt, "file too short to be a checkpoint");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw Error(Errc::checkpoint_corrupt, "missing SSVICKPT magic at offset 0");
  const std::size_t body = bytes.size() - 8;
  Reader tail(bytes.data() + body, 8);
  if (tail.le<std::uint64_t>("hash") != fnv1a64(bytes.data(), body))
    throw Error(Errc::checkpoint_corrupt, "content hash mismatch");

  Reader r(bytes.data(), body);
  r.take(sizeof kMagic, "magic");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw Error(Errc::checkpoint_corrupt, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto task = r.le<std::uint8_t>("task");
  if (task > 1) throw Error(Errc::checkpoint_corrupt, "unknown task tag");
  ckpt.net.task = task == 0 ? Task::Classification : Task::Regression;
  ckpt.num_classes = static_cast<int>(r.le<std::uint32_t>("classes"));
  ckpt.step = r.le<std::uint64_t>("step");
  ckpt.budget = r.le<std::uint64_t>("budget");
  ckpt.rng_state = r.str("rng state");
  ckpt.config_text = r.str("config");
  const auto k = r.le<std::uint32_t>("norm dim");
  if (static_cast<std::size_t>(k) * 16 > r.remaining())
    throw Error(Errc::checkpoint_corrupt, "normalisation block exceeds file");
  ckpt.norm.mean.resize(k);
  ckpt.norm.scale.resize(k);
  for (std::uint32_t i = 0; i < k; ++i) ckpt.norm.mean(i) = r.le<double>("norm mean");
  for (std::uint32_t i = 0; i < k; ++i) ckpt.norm.scale(i) = r.le<double>("norm scale");
  const auto n_layers = r.le<std::uint32_t>("layer count");
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const auto out = r.le<std::uint32_t>("layer dims");
    const auto in = r.le<std::uint32_t>("layer dims");
    const std::size_t n = static_cast<std::size_t>(out) * in;
    if (out == 0 || in == 0 || n * 16 + out * 8 > r.remaining())
      throw Error(Errc::checkpoint_corrupt, "layer " + std::to_string(l) + " dimensions exceed file");
    BayesLinear layer(out, in);
    for (Eigen::Index i = 0; i < out; ++i)
      for (Eigen::Index j = 0; j < in; ++j) layer.mu(i, j) = r.le<double>("mu");
    for (Eigen::Index i = 0; i < out; ++i)
      for (Eigen::Index j = 0; j < in; ++j) layer.sigma(i, j) = r.le<double>("sigma");
    for (Eigen::Index i = 0; i < out; ++i) layer.bias(i) = r.le<double>("bias");
    const std::uint8_t* bits = r.take((n + 7) / 8, "mask");
    for (Eigen::Index i = 0; i < out; ++i)
      for (Eigen::Index j = 0; j < in; ++j) {
        const auto f = static_cast<std::size_t>(i * in + j);
        layer.mask(i, j) = (bits[f / 8] >> (f % 8)) & 1u;
      }
    if (l > 0 && ckpt.net.layers.back().out_dim() != layer.in_dim())
      throw Error(Errc::checkpoint_corrupt, "layer " + std::to_string(l) + " does not chain");
    ckpt.net.layers.push_back(std::move(layer));
  }
  if (r.remaining() != 0) throw Error(Errc::checkpoint_corrupt, "trailing bytes before hash");
  if (ckpt.net.layers.empty()) throw Error(Errc::checkpoint_corrupt, "checkpoint has no layers");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::io_error, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace ssvi
