#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace snf {

using Date = std::chrono::year_month_day;

/// Strict ISO-8601 calendar date (YYYY-MM-DD); nullopt on any deviation.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& date);

std::string read_file(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: truncate then write.
void write_file(const std::filesystem::path& path, std::string_view bytes);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Shortest text that parses back to the identical double.
std::string format_double(double value);
/// Strict decimal parse of a whole token; nullopt on trailing junk.
std::optional<double> parse_double(std::string_view text);

// Little-endian byte codecs used by the binary formats.
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);

/// Cursor over a byte buffer; every read reports truncation via `ok()`.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  bool ok() const noexcept { return ok_; }
  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  std::string_view take(std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

}  // namespace snf
