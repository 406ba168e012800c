#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dxs {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Error codes shared with the C API (see include/dexscaffold/dexscaffold.h).
enum class ErrorCode : int {
  InvalidArgument = 1,
  Io = 2,
  Schema = 3,
  Backend = 4,
  MissingDepth = 5,
  BehindCamera = 6,
  UnknownTask = 7,
  NonFinite = 8,
  MissingMetrics = 9,
  PlanInvalid = 10,
  DimensionMismatch = 11,
  CountMismatch = 12,
  OutOfRange = 13,
  TooShort = 14,
  Internal = 15,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline Error schema_error(const std::string& what) { return Error(ErrorCode::Schema, what); }

constexpr double kPi = 3.14159265358979323846;

// FNV-1a 64-bit hash, used for config identity and content-addressed caches.
inline uint64_t fnv1a64(std::string_view data) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  if (a > -kPi && a <= kPi) return a;  // already in range: keep bit-exact
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

}  // namespace dxs
