#pragma once

#include <stdexcept>
#include <string>

#include "pren/tensor.hpp"

namespace pren {

enum class CheckpointError {
  bad_magic,
  version_mismatch,
  truncated,
  trailing_data,
  io,
};

class CheckpointIoError : public std::runtime_error {
 public:
  CheckpointIoError(CheckpointError code, const std::string& msg)
      : std::runtime_error(msg), code(code) {}
  CheckpointError code;
};

struct CheckpointContents {
  ParamSet<float> params;
  std::string config_echo;
};

// Binary layout, all integers little-endian:
//   "PREN" | u32 version | u32 tensor count |
//   per tensor: u32 name length, name, u32 rank, u32 dims..., f32 data |
//   u32 config length, UTF-8 config echo.
// Round trips are bitwise-exact.
void save_checkpoint(const ParamSet<float>& params,
                     const std::string& config_echo, const std::string& path);
CheckpointContents load_checkpoint(const std::string& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace pren
