#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparseness/core.hpp"

namespace sparseness::mnist {

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Provenance { raw, jittered };

/// Digit samples as columns of a (rows*cols) x count matrix with pixel values
/// in [0, 1], plus class labels 0..9.
struct LabeledDataset {
  Eigen::MatrixXd samples;
  std::vector<std::uint8_t> labels;
  int rows = 28;
  int cols = 28;
  Provenance provenance = Provenance::raw;

  Index size() const { return samples.cols(); }
  Index dim() const { return samples.rows(); }
};

/// Read an IDX image/label file pair (big-endian magic 0x803 / 0x801).
/// Pixel bytes are scaled by 1/255.
LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path);

/// Write a dataset back to the IDX pair; pixel doubles are rounded to bytes,
/// which is exact for data that came from load_idx.
void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path);

/// Augment by shifting every sample one pixel in each of the 8 directions;
/// output holds the original plus the 8 shifts (9x the input size). Pixels
/// shifted in from the border are zero.
LabeledDataset jitter8(const LabeledDataset& ds);

/// One-of-c indicator vector.
Eigen::VectorXd one_hot(int label, int num_classes);

/// Deterministic uniform subset of k samples without replacement. For
/// k >= 500 a draw whose class histogram deviates more than 20% from uniform
/// is redrawn once with a derived seed.
LabeledDataset subset(const LabeledDataset& ds, Index k, std::uint64_t seed);

}  // namespace sparseness::mnist
