#include "otbayes/serialization.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

namespace otbayes {

namespace {

constexpr std::string_view kMapMagic{"OTBMAP\0\0", 8};
constexpr std::string_view kEnsMagic{"OTBENS\0\0", 8};

class Writer {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }
  void vector(const Vector& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  void magic(std::string_view m) {
    need(m.size());
    if (std::memcmp(b_.data() + pos_, m.data(), m.size()) != 0) throw FormatError("unrecognized file signature");
    pos_ += m.size();
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count(std::size_t element_bytes) {
    const std::uint64_t n = u64();
    if (n > (b_.size() - pos_) / std::max<std::size_t>(element_bytes, 1)) throw FormatError("length field exceeds file size");
    return static_cast<std::size_t>(n);
  }
  Matrix matrix() {
    const std::uint64_t rows = u64();
    const std::uint64_t cols = u64();
    if (cols != 0 && rows > (b_.size() - pos_) / 8 / cols) throw FormatError("matrix shape exceeds file size");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
    return m;
  }
  Vector vector() {
    const std::size_t n = count(8);
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
    return v;
  }
  void finish() const {
    if (pos_ != b_.size()) throw FormatError("trailing bytes after payload");
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw FormatError("file is truncated");
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

void write_network(Writer& w, const diffnet::NetworkParams& p) {
  const auto& s = p.spec;
  w.u64(s.input_dim);
  w.u64(s.output_dim);
  w.u64(s.hidden_width);
  w.u64(s.num_residual_blocks);
  w.u8(s.activation == diffnet::Activation::relu ? 0 : 1);
  w.u8(s.has_enkf_block ? 1 : 0);
  w.vector(p.values);
  w.vector(p.normalization.input_shift);
  w.vector(p.normalization.input_scale);
  w.vector(p.normalization.output_scale);
  w.u8(p.enkf ? 1 : 0);
  if (p.enkf) {
    w.matrix(p.enkf->gain);
    w.matrix(p.enkf->obs_jacobian);
    w.vector(p.enkf->state_mean);
    w.vector(p.enkf->obs_mean);
  }
}

diffnet::NetworkParams read_network(Reader& r) {
  diffnet::NetworkParams p;
  p.spec.input_dim = r.u64();
  p.spec.output_dim = r.u64();
  p.spec.hidden_width = r.u64();
  p.spec.num_residual_blocks = r.u64();
  const std::uint8_t act = r.u8();
  if (act > 1) throw FormatError("unknown activation code");
  p.spec.activation = act == 0 ? diffnet::Activation::relu : diffnet::Activation::tanh;
  p.spec.has_enkf_block = r.u8() != 0;
  p.values = r.vector();
  p.normalization.input_shift = r.vector();
  p.normalization.input_scale = r.vector();
  p.normalization.output_scale = r.vector();
  if (r.u8() != 0) {
    diffnet::EnkfBlock b;
    b.gain = r.matrix();
    b.obs_jacobian = r.matrix();
    b.state_mean = r.vector();
    b.obs_mean = r.vector();
    p.enkf = std::move(b);
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid network record: ") + e.what());
  }
  return p;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

void check_version(std::uint32_t got, std::uint32_t want) {
  if (got != want) {
    throw FormatError("unsupported format version " + std::to_string(got) + " (expected " + std::to_string(want) + ")");
  }
}

}  // namespace

std::vector<std::uint8_t> encode_map_pair(const MapPair& pair) {
  pair.validate();
  Writer w;
  w.magic(kMapMagic);
  w.u32(kMapPairFormatVersion);
  write_network(w, pair.f);
  write_network(w, pair.T);
  return w.take();
}

MapPair decode_map_pair(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.magic(kMapMagic);
  check_version(r.u32(), kMapPairFormatVersion);
  MapPair pair;
  pair.f = read_network(r);
  pair.T = read_network(r);
  r.finish();
  try {
    pair.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid map pair: ") + e.what());
  }
  return pair;
}

void save_map_pair(const std::filesystem::path& path, const MapPair& pair) { write_file(path, encode_map_pair(pair)); }

MapPair load_map_pair(const std::filesystem::path& path) { return decode_map_pair(read_file(path)); }

std::vector<std::uint8_t> encode_ensembles(const std::vector<Ensemble>& ensembles) {
  Writer w;
  w.magic(kEnsMagic);
  w.u32(kEnsembleFormatVersion);
  w.u64(ensembles.size());
  for (const Ensemble& e : ensembles) {
    w.matrix(e.particles());
    w.u8(e.has_weights() ? 1 : 0);
    if (e.has_weights()) w.vector(e.weights());
  }
  return w.take();
}

std::vector<Ensemble> decode_ensembles(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.magic(kEnsMagic);
  check_version(r.u32(), kEnsembleFormatVersion);
  const std::size_t n = r.count(17);
  std::vector<Ensemble> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Matrix p = r.matrix();
    try {
      if (r.u8() != 0) {
        Vector w = r.vector();
        out.emplace_back(std::move(p), std::move(w));
      } else {
        out.emplace_back(std::move(p));
      }
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("invalid ensemble record: ") + e.what());
    }
  }
  r.finish();
  return out;
}

void save_ensembles(const std::filesystem::path& path, const std::vector<Ensemble>& ensembles) {
  write_file(path, encode_ensembles(ensembles));
}

std::vector<Ensemble> load_ensembles(const std::filesystem::path& path) { return decode_ensembles(read_file(path)); }

}  // namespace otbayes
