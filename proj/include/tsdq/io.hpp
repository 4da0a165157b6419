#pragma once

#include <stdexcept>
#include <string>
#include <variant>

#include "tsdq/denoiser.hpp"
#include "tsdq/training.hpp"
#include "tsdq/types.hpp"

namespace tsdq {

enum class IoErrorKind { kBadMagic, kBadVersion, kTruncated, kBadHeader, kFileSystem };

class IoError : public std::runtime_error {
 public:
  IoError(IoErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  IoErrorKind kind() const { return kind_; }

 private:
  IoErrorKind kind_;
};

using Payload = std::variant<Image, Sinogram>;

/// "TSDQ" container: 4 magic bytes, u16 format version, u8 payload kind
/// (0 image / 1 sinogram), two u32 dims, row-major little-endian f64 data.
void write_container(const std::string& path, const Payload& payload);
Payload read_container(const std::string& path);

Image read_image(const std::string& path);
Sinogram read_sinogram(const std::string& path);

/// 16-bit binary PGM with linear windowing: lo maps to 0, hi to 65535,
/// values clamped, ties rounded half-to-even.
void export_pgm(const Image& x, const std::string& path, double lo, double hi);

/// Denoiser checkpoint: spec header, per-layer kernels/biases/SN state as
/// little-endian f64, plus the epoch counter and optional optimizer moments.
struct Checkpoint {
  DenoiserParams params;
  int epochs_done = 0;
  bool has_adam = false;
  AdamState adam;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace tsdq
