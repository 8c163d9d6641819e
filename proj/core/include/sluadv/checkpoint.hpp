#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sluadv/optim.hpp"
#include "sluadv/tape.hpp"

namespace sluadv::nn {

inline constexpr std::string_view kCheckpointMagic = "SLUADV1";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorRecord {
  std::string group;
  std::string name;
  Matrix value;
};

/// Parameter container. On disk it is a line-oriented text file:
///
///   SLUADV1
///   seed <u64>
///   step <i64>
///   meta <one line of JSON>
///   tensor <group> <name> <rows> <cols>
///   <row-major values, one matrix row per line>
///   ...
///   end
///
/// Values are printed with shortest round-trip precision, so reading a
/// written checkpoint restores bit-identical tensors.
struct Checkpoint {
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::string metadata = "{}";
  std::vector<TensorRecord> tensors;
};

Checkpoint capture(std::span<const ParamGroup> groups, std::uint64_t seed, std::int64_t step);
/// Copies values into `groups`; every tensor must be present with its shape.
void restore(std::span<const ParamGroup> groups, const Checkpoint& checkpoint);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view text);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace sluadv::nn
