#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mtqsar/errors.hpp"

namespace mtqsar::csv {

// RFC 4180 field quoting. Output always uses LF line endings.
inline std::string quote(std::string_view field) {
  const bool needs = field.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string join_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += quote(fields[i]);
  }
  out.push_back('\n');
  return out;
}

// Shortest round-trip decimal rendering; deterministic across runs.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorCode::IoError, "cannot open for writing: " + path);
  }
  void row(const std::vector<std::string>& fields) { out_ << join_row(fields); }
  void close() { out_.close(); }

 private:
  std::ofstream out_;
};

// Streaming RFC 4180 reader; handles quoted fields, embedded newlines and
// both LF and CRLF input.
class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw Error(ErrorCode::IoError, "cannot open: " + path);
  }

  // Returns false at end of input. `line` reports the 1-based line number
  // on which the row started (for error messages).
  bool next(std::vector<std::string>& fields, std::size_t& line) {
    fields.clear();
    int c = in_.get();
    // skip blank lines
    while (c == '\n' || c == '\r') {
      if (c == '\n') ++line_;
      c = in_.get();
    }
    if (c == EOF) return false;
    line = line_ + 1;
    std::string field;
    bool in_quotes = false;
    for (;;) {
      if (c == EOF) {
        fields.push_back(std::move(field));
        if (in_quotes)
          throw Error(ErrorCode::MalformedRow,
                      path_ + ":" + std::to_string(line) + ": unterminated quote");
        return true;
      }
      if (in_quotes) {
        if (c == '"') {
          const int peek = in_.get();
          if (peek == '"') {
            field.push_back('"');
          } else {
            in_quotes = false;
            in_.unget();
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(char(c));
        }
      } else if (c == '"') {
        in_quotes = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
      } else if (c == '\r') {
        // swallow; treat as part of CRLF
      } else if (c == '\n') {
        ++line_;
        fields.push_back(std::move(field));
        return true;
      } else {
        field.push_back(char(c));
      }
      c = in_.get();
    }
  }

 private:
  std::ifstream in_;
  std::string path_;
  std::size_t line_ = 0;
};

}  // namespace mtqsar::csv
