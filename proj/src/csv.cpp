#include "qglut/csv.hpp"

#include <charconv>
#include <cmath>
#include <istream>

#include "qglut/error.hpp"

namespace qglut {

CsvReader::CsvReader(std::istream& in) : in_(in) {
  auto head = read_record();
  if (!head) fail(ErrorCode::InvalidArgument, "CSV input has no header");
  header_ = std::move(*head);
  if (!header_.empty() && header_[0].starts_with("\xEF\xBB\xBF")) {
    header_[0].erase(0, 3);  // UTF-8 BOM
  }
}

std::optional<std::size_t> CsvReader::optional_column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t CsvReader::column(std::string_view name) const {
  auto idx = optional_column(name);
  if (!idx) fail(ErrorCode::InvalidArgument, "CSV is missing column '" + std::string(name) + "'");
  return *idx;
}

std::optional<std::vector<std::string>> CsvReader::read_record() {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool any = false;
  char ch;
  while (in_.get(ch)) {
    any = true;
    if (quoted) {
      if (ch == '"') {
        if (in_.peek() == '"') {
          in_.get(ch);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line_;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      ++line_;
      fields.push_back(std::move(field));
      return fields;
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  if (!any) return std::nullopt;
  fields.push_back(std::move(field));
  return fields;
}

std::optional<std::vector<std::string>> CsvReader::next() {
  while (auto rec = read_record()) {
    if (rec->size() == 1 && (*rec)[0].empty()) continue;
    if (rec->size() > header_.size()) {
      fail(ErrorCode::InvalidArgument,
           "CSV record near line " + std::to_string(line_) + " has too many fields");
    }
    rec->resize(header_.size());
    return rec;
  }
  return std::nullopt;
}

double parse_double(const std::string& text, std::string_view field) {
  std::size_t begin = text.find_first_not_of(" \t");
  std::size_t end = text.find_last_not_of(" \t");
  if (begin == std::string::npos) {
    fail(ErrorCode::InvalidArgument, "empty value for " + std::string(field));
  }
  double value = 0.0;
  const char* first = text.data() + begin;
  const char* last = text.data() + end + 1;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    fail(ErrorCode::InvalidArgument,
         "invalid number '" + text + "' for " + std::string(field));
  }
  return value;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace qglut
