#ifndef ORCA_MODEL_STORE_HPP
#define ORCA_MODEL_STORE_HPP

#include "orca/models.hpp"

#include <filesystem>
#include <string>
#include <string_view>

// Binary model file, all integers and floats little-endian:
//
//   "ORCA" | u16 format version | u8 family | u8 level | u64 schema digest
//   u32 dim | u32 seq_len | u8 time_series | u32 calibration length
//   u32 structure length | u64 parameter length | i64 trained_at | u32 version
//   u32 hyperparameter count | f64 hyperparameters...
//   u32 feature count | (u32 length, bytes) per feature name
//   i64 structure... | f64 parameters... | f64 calibration...
//   f64 mean[dim] | f64 stddev[dim] | f64 median[dim]
//   u64 FNV-1a checksum of all preceding bytes

namespace orca {

inline constexpr std::uint16_t kModelFormatVersion = 1;

std::string encode_model(const TrainedModel& model);

/// Throws CorruptStore on bad magic, digest, checksum or truncation and
/// VersionMismatch on a newer format version.
TrainedModel decode_model(std::string_view bytes);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

/// File name for a (device type, level) entry, e.g. "camera__B1.orca".
std::string model_file_name(const std::string& device_type, BehaviorLevel level);

}  // namespace orca

#endif  // ORCA_MODEL_STORE_HPP
