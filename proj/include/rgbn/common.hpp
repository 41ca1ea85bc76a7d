#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgbn {

inline constexpr double euler_gamma = 0.57721566490153286060;

// process exit codes used by the CLI; library code throws, the CLI maps
enum class errkind { config = 2, data = 3, numeric = 4 };

struct error : std::runtime_error {
  errkind kind;
  error(errkind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
  int exit_code() const { return static_cast<int>(kind); }
};

[[noreturn]] inline void fail_config(const std::string& msg) { throw error(errkind::config, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw error(errkind::data, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw error(errkind::numeric, msg); }

inline void require(bool cond, errkind k, const std::string& msg) {
  if (!cond) throw error(k, msg);
}

template <class... Ts>
std::string strf(const Ts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

// digamma via upward recurrence into the asymptotic regime
inline double digamma(double x) {
  if (!(x > 0)) fail_numeric(strf("digamma requires x > 0, got ", x));
  double r = 0.0;
  while (x < 8.0) { r -= 1.0 / x; x += 1.0; }
  double f = 1.0 / (x * x);
  double series = f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132)))));
  return r + std::log(x) - 0.5 / x - series;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) { h ^= c; h *= 1099511628211ull; }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) { s[i] = digits[v & 0xf]; v >>= 4; }
  return s;
}

inline std::string csv_quote(const std::string& s) {
  bool needs = s.find_first_of(",\"\n") != std::string::npos;
  if (!needs) return s;
  std::string out = "\"";
  for (char c : s) { if (c == '"') out += "\"\""; else out += c; }
  out += "\"";
  return out;
}

inline bool finite_all(const std::vector<double>& v) {
  for (double x : v) if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace rgbn
