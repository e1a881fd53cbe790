#pragma once

#include <string>

#include "sparseness/soae.hpp"

namespace sparseness::soae {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  SoaeParams params;
  SoaeConfig config;
};

/// Versioned little-endian binary container: dimensions, config echo, the
/// three parameter blocks in row-major order, and a CRC32 trailer.
/// Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const SoaeParams& params,
                     const SoaeConfig& config);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace sparseness::soae
