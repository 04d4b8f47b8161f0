#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mixopt/error.hpp"

namespace mixopt {

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double x) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

inline std::optional<double> parse_double(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

/// 64-bit FNV-1a, used to tag outputs with the configuration that made them.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return out;
}

/// Minimal CSV table writer with an optional leading `# comment` line.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns, const std::string& comment = {})
      : out_(path), columns_(columns.size()) {
    require(static_cast<bool>(out_), ErrorKind::Io, "cannot write " + path);
    if (!comment.empty()) out_ << "# " << comment << '\n';
    for (std::size_t k = 0; k < columns.size(); ++k) out_ << (k ? "," : "") << columns[k];
    out_ << '\n';
  }

  CsvWriter& cell(double x) { return raw(format_double(x)); }
  CsvWriter& cell(std::int64_t x) { return raw(std::to_string(x)); }
  CsvWriter& cell(std::size_t x) { return raw(std::to_string(x)); }
  CsvWriter& cell(int x) { return raw(std::to_string(x)); }
  CsvWriter& cell(const std::string& s) { return raw(s); }

  void end_row() {
    require(in_row_ == columns_, ErrorKind::Internal, "CSV row has the wrong number of cells");
    out_ << '\n';
    in_row_ = 0;
  }

 private:
  CsvWriter& raw(const std::string& s) {
    out_ << (in_row_ ? "," : "") << s;
    ++in_row_;
    return *this;
  }

  std::ofstream out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

}  // namespace mixopt
