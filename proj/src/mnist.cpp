#include "sparseness/mnist.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace sparseness::mnist {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& field,
                        const std::string& path) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in)
    throw IdxError("truncated IDX file while reading " + field + ": " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<unsigned char, 4> b{
      static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IdxError("cannot open image file: " + images_path);
  const std::uint32_t img_magic = read_be32(img, "magic", images_path);
  if (img_magic != kImagesMagic)
    throw IdxError("bad image magic (expected 0x00000803): " + images_path);
  const std::uint32_t count = read_be32(img, "count", images_path);
  const std::uint32_t rows = read_be32(img, "rows", images_path);
  const std::uint32_t cols = read_be32(img, "cols", images_path);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IdxError("cannot open label file: " + labels_path);
  const std::uint32_t lab_magic = read_be32(lab, "magic", labels_path);
  if (lab_magic != kLabelsMagic)
    throw IdxError("bad label magic (expected 0x00000801): " + labels_path);
  const std::uint32_t lab_count = read_be32(lab, "count", labels_path);
  if (lab_count != count)
    throw IdxError("count mismatch: " + std::to_string(count) + " images vs " +
                   std::to_string(lab_count) + " labels");

  LabeledDataset ds;
  ds.rows = static_cast<int>(rows);
  ds.cols = static_cast<int>(cols);
  const Index dim = Index(rows) * Index(cols);
  ds.samples.resize(dim, count);
  ds.labels.resize(count);

  std::vector<unsigned char> buf(static_cast<std::size_t>(dim));
  for (std::uint32_t i = 0; i < count; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), dim);
    if (!img)
      throw IdxError("truncated IDX file while reading pixels of sample " +
                     std::to_string(i) + ": " + images_path);
    for (Index p = 0; p < dim; ++p)
      ds.samples(p, i) = buf[static_cast<std::size_t>(p)] / 255.0;
  }
  lab.read(reinterpret_cast<char*>(ds.labels.data()), count);
  if (!lab)
    throw IdxError("truncated IDX file while reading labels: " + labels_path);
  for (std::uint32_t i = 0; i < count; ++i)
    if (ds.labels[i] > 9)
      throw IdxError("label out of range 0..9 at sample " + std::to_string(i));
  return ds;
}

void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path) {
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw IdxError("cannot create image file: " + images_path);
  write_be32(img, kImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(ds.rows));
  write_be32(img, static_cast<std::uint32_t>(ds.cols));
  const Index dim = ds.dim();
  std::vector<unsigned char> buf(static_cast<std::size_t>(dim));
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index p = 0; p < dim; ++p)
      buf[static_cast<std::size_t>(p)] =
          static_cast<unsigned char>(std::lround(ds.samples(p, i) * 255.0));
    img.write(reinterpret_cast<const char*>(buf.data()), dim);
  }

  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw IdxError("cannot create label file: " + labels_path);
  write_be32(lab, kLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  lab.write(reinterpret_cast<const char*>(ds.labels.data()),
            static_cast<std::streamsize>(ds.labels.size()));
}

LabeledDataset jitter8(const LabeledDataset& ds) {
  if (ds.provenance != Provenance::raw)
    throw IdxError("jitter8: dataset was already jittered");
  static constexpr int kShift[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                       {0, 1},   {1, -1}, {1, 0},  {1, 1}};
  const int rows = ds.rows, cols = ds.cols;
  LabeledDataset out;
  out.rows = rows;
  out.cols = cols;
  out.provenance = Provenance::jittered;
  out.samples.resize(ds.dim(), ds.size() * 9);
  out.labels.resize(static_cast<std::size_t>(ds.size()) * 9);
  for (Index i = 0; i < ds.size(); ++i) {
    const Index base = i * 9;
    out.samples.col(base) = ds.samples.col(i);
    out.labels[static_cast<std::size_t>(base)] =
        ds.labels[static_cast<std::size_t>(i)];
    for (int k = 0; k < 8; ++k) {
      const int dx = kShift[k][0], dy = kShift[k][1];
      auto dst = out.samples.col(base + 1 + k);
      dst.setZero();
      for (int r = 0; r < rows; ++r) {
        const int sr = r - dy;
        if (sr < 0 || sr >= rows) continue;
        for (int c = 0; c < cols; ++c) {
          const int sc = c - dx;
          if (sc < 0 || sc >= cols) continue;
          dst(Index(r) * cols + c) = ds.samples(Index(sr) * cols + sc, i);
        }
      }
      out.labels[static_cast<std::size_t>(base + 1 + k)] =
          ds.labels[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

Eigen::VectorXd one_hot(int label, int num_classes) {
  if (label < 0 || label >= num_classes)
    throw DomainError("one_hot: label out of range");
  Eigen::VectorXd t = Eigen::VectorXd::Zero(num_classes);
  t(label) = 1.0;
  return t;
}

namespace {

std::vector<Index> draw_without_replacement(Index population, Index k,
                                            std::uint64_t seed) {
  std::vector<Index> idx(static_cast<std::size_t>(population));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, population - 1);
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

bool histogram_near_uniform(const LabeledDataset& ds,
                            const std::vector<Index>& idx) {
  std::array<Index, 10> counts{};
  for (Index i : idx) ++counts[ds.labels[static_cast<std::size_t>(i)]];
  const double expected = static_cast<double>(idx.size()) / 10.0;
  for (Index c : counts)
    if (std::abs(static_cast<double>(c) - expected) > 0.2 * expected)
      return false;
  return true;
}

}  // namespace

LabeledDataset subset(const LabeledDataset& ds, Index k, std::uint64_t seed) {
  if (k > ds.size()) throw DomainError("subset: k exceeds dataset size");
  std::vector<Index> idx = draw_without_replacement(ds.size(), k, seed);
  if (k >= 500 && !histogram_near_uniform(ds, idx))
    idx = draw_without_replacement(ds.size(), k, seed ^ 0x9e3779b97f4a7c15ull);
  LabeledDataset out;
  out.rows = ds.rows;
  out.cols = ds.cols;
  out.provenance = ds.provenance;
  out.samples.resize(ds.dim(), k);
  out.labels.resize(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    out.samples.col(i) = ds.samples.col(idx[static_cast<std::size_t>(i)]);
    out.labels[static_cast<std::size_t>(i)] =
        ds.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
  }
  return out;
}

}  // namespace sparseness::mnist
