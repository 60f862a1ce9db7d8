#pragma once

#include <cstdint>
#include <cmath>
#include <span>
#include <string>
#include <string_view>

namespace capmml {

/// Order-independent summation.
///
/// Each addend is rounded to a 2^-64 fixed-point grid and accumulated in a
/// 128-bit integer, so the result does not depend on the order of additions.
/// Addends must be finite with magnitude below 2^60.
__extension__ typedef __int128 int128_t;
__extension__ typedef unsigned __int128 uint128_t;

class ExactSum {
 public:
  void add(double value) noexcept { acc_ += to_fixed(value); }
  /// Adds a value already converted with to_fixed.
  void add_fixed(int128_t fixed) noexcept { acc_ += fixed; }
  void add(const ExactSum& other) noexcept { acc_ += other.acc_; }
  void subtract(const ExactSum& other) noexcept { acc_ -= other.acc_; }
  /// Double view of the exact total; converts the magnitude in two 64-bit
  /// halves without branching on the sign.
  double value() const noexcept {
    const int128_t mask = acc_ >> 127;
    const auto mag = static_cast<uint128_t>((acc_ ^ mask) - mask);
    const double v = static_cast<double>(static_cast<std::uint64_t>(mag >> 64)) +
                     static_cast<double>(static_cast<std::uint64_t>(mag)) * 0x1p-64;
    return std::copysign(v, static_cast<double>(mask) + 0.5);
  }

  friend ExactSum operator-(ExactSum a, const ExactSum& b) noexcept {
    a.subtract(b);
    return a;
  }
  friend bool operator==(const ExactSum&, const ExactSum&) = default;

  /// value rounded to the nearest multiple of 2^-64.
  static int128_t to_fixed(double value) noexcept {
    return static_cast<int128_t>(std::nearbyint(value * 0x1p64));
  }

 private:
  int128_t acc_ = 0;
};

double exact_sum(std::span<const double> values) noexcept;
double exact_mean(std::span<const double> values) noexcept;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
/// Parses a full string as a double; throws std::invalid_argument otherwise.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

/// 64-bit FNV-1a digest rendered as 16 lowercase hex digits.
std::string digest_hex(std::string_view bytes);

}  // namespace capmml
