#ifndef CSD_CHECKPOINT_HPP
#define CSD_CHECKPOINT_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "csd/autograd.hpp"

namespace csd {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: the 8-byte magic "CSDCKPT1", a little-endian u32 format
/// version, a u64 header length, a JSON header (caller metadata plus the
/// tensor index), then the tensors as raw float64 in index order.
struct CheckpointData {
  nlohmann::json meta;
  std::vector<std::pair<std::string, ag::Matrix>> tensors;
};

void save_checkpoint(const std::string& path, const nlohmann::json& meta, const ag::ParameterSet& params);
CheckpointData read_checkpoint(const std::string& path);
std::string encode_checkpoint(const nlohmann::json& meta, const ag::ParameterSet& params);
CheckpointData decode_checkpoint(const std::string& bytes);

/// Requires the exact same parameter names and shapes.
void load_parameters(const CheckpointData& data, ag::ParameterSet& params);

/// FNV-1a over parameter names, shapes and raw values, as 16 hex digits.
std::string parameter_hash(const ag::ParameterSet& params);

}  // namespace csd

#endif  // CSD_CHECKPOINT_HPP
