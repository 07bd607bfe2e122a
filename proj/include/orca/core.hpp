#ifndef ORCA_CORE_HPP
#define ORCA_CORE_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace orca {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Simulated minutes since the start of a scenario.
using Tick = std::int64_t;

enum class BehaviorLevel : std::uint8_t { B1 = 0, B2 = 1, B3 = 2, B4 = 3 };

inline constexpr int kLevelCount = 4;

std::string_view to_string(BehaviorLevel level);
BehaviorLevel parse_level(std::string_view text);

enum class ErrorCode {
  InvalidArgument,
  BadConfig,
  EmptyAfterCleaning,
  SeriesTooShort,
  TooFewPoints,
  NonMonotonicTick,
  UnknownDevice,
  InsufficientData,
  NonConvergence,
  SingularDesign,
  DivergedTraining,
  SchemaMismatch,
  TooFewDevices,
  InsufficientHistory,
  NotWarmedUp,
  NegativeInput,
  DuplicateEntry,
  UnknownFamily,
  UntrainedModel,
  MissingFamily,
  CorruptStore,
  VersionMismatch,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Order-sensitive 64-bit mix of two keys, used to derive independent seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace orca

#endif  // ORCA_CORE_HPP
