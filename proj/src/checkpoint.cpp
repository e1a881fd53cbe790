#include "sparseness/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace sparseness::soae {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'P', 'R', 'S', 'O', 'A', 'E', '1'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

class Writer {
 public:
  template <class T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_matrix_rowmajor(const Eigen::MatrixXd& m) {
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) put(m(i, j));
  }
  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t len)
      : data_(data), len_(len) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > len_)
      throw CheckpointError("checkpoint truncated");
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_matrix_rowmajor(Eigen::MatrixXd& m) {
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>();
  }
  std::size_t pos() const { return pos_; }

 private:
  const unsigned char* data_;
  std::size_t len_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const SoaeParams& params,
                     const SoaeConfig& config) {
  Writer w;
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(params.w.rows()));
  w.put(static_cast<std::uint32_t>(params.w.cols()));
  w.put(static_cast<std::uint32_t>(params.w_out.cols()));
  w.put(static_cast<std::uint8_t>(config.transfer));
  w.put(config.sigma_h);
  w.put(static_cast<std::uint32_t>(config.kappa));
  w.put(config.sigma_w);
  w.put(config.step_size);
  w.put(config.anneal_factor);
  w.put(static_cast<std::uint32_t>(config.samples_per_epoch));
  w.put(config.stop_rel_tol);
  w.put(static_cast<std::uint32_t>(config.stop_window));
  w.put(static_cast<std::uint32_t>(config.max_epochs));
  w.put_matrix_rowmajor(params.w);
  w.put_matrix_rowmajor(params.w_out);
  for (Index i = 0; i < params.theta_out.size(); ++i)
    w.put(params.theta_out(i));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot create checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(w.bytes().data()),
            static_cast<std::streamsize>(w.bytes().size()));
  const std::uint32_t crc = crc32(w.bytes().data(), w.bytes().size());
  out.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
  if (!out) throw CheckpointError("short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::vector<unsigned char> bytes(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t))
    throw CheckpointError("checkpoint truncated: " + path);
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("bad checkpoint magic: " + path);

  const std::size_t payload_len =
      bytes.size() - sizeof(kMagic) - sizeof(std::uint32_t);
  const unsigned char* payload = bytes.data() + sizeof(kMagic);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, payload + payload_len, sizeof(stored_crc));
  if (crc32(payload, payload_len) != stored_crc)
    throw CheckpointError("checkpoint checksum mismatch: " + path);

  Reader r(payload, payload_len);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version");
  Checkpoint ck;
  const auto d = r.get<std::uint32_t>();
  const auto n = r.get<std::uint32_t>();
  const auto c = r.get<std::uint32_t>();
  ck.config.n_hidden = static_cast<int>(n);
  ck.config.n_classes = static_cast<int>(c);
  ck.config.transfer = static_cast<Transfer>(r.get<std::uint8_t>());
  ck.config.sigma_h = r.get<double>();
  ck.config.kappa = static_cast<int>(r.get<std::uint32_t>());
  ck.config.sigma_w = r.get<double>();
  ck.config.step_size = r.get<double>();
  ck.config.anneal_factor = r.get<double>();
  ck.config.samples_per_epoch = static_cast<int>(r.get<std::uint32_t>());
  ck.config.stop_rel_tol = r.get<double>();
  ck.config.stop_window = static_cast<int>(r.get<std::uint32_t>());
  ck.config.max_epochs = static_cast<int>(r.get<std::uint32_t>());
  ck.params.w.resize(d, n);
  r.get_matrix_rowmajor(ck.params.w);
  ck.params.w_out.resize(n, c);
  r.get_matrix_rowmajor(ck.params.w_out);
  ck.params.theta_out.resize(c);
  for (std::uint32_t i = 0; i < c; ++i)
    ck.params.theta_out(i) = r.get<double>();
  if (r.pos() != payload_len)
    throw CheckpointError("checkpoint has trailing bytes: " + path);
  return ck;
}

}  // namespace sparseness::soae
