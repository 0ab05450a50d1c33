#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qglut {

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF tolerated.
/// The first record is the header.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in);

  /// Index of a required column; throws InvalidArgument when absent.
  std::size_t column(std::string_view name) const;
  std::optional<std::size_t> optional_column(std::string_view name) const;

  /// Next non-empty record, padded with empty strings to the header width.
  std::optional<std::vector<std::string>> next();

  const std::vector<std::string>& header() const noexcept { return header_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::optional<std::vector<std::string>> read_record();

  std::istream& in_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

double parse_double(const std::string& text, std::string_view field);
std::string csv_escape(std::string_view field);

}  // namespace qglut
