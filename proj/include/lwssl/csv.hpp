// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "lwssl/common.hpp"

namespace lwssl {

// RFC-4180 CSV. Fields are quoted only when they need to be, so output is
// byte-stable for the determinism checks.
namespace csv {

inline std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  return out + "\"";
}

inline std::string join_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += escape(fields[i]);
  }
  return out + "\r\n";
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::string fmt(std::int64_t v) { return std::to_string(v); }
inline std::string fmt(std::size_t v) { return std::to_string(v); }

class Writer {
 public:
  explicit Writer(const std::string& path) : f_(path, std::ios::binary | std::ios::trunc) {
    if (!f_) throw IoError("csv: cannot open " + path + " for writing");
  }
  void row(const std::vector<std::string>& fields) { f_ << join_row(fields); }
  void flush() { f_.flush(); }

 private:
  std::ofstream f_;
};

// Minimal reader for our own files (handles quoted fields and CRLF).
std::vector<std::vector<std::string>> inline read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("csv: cannot open " + path);
  std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < all.size(); ++i) {
    char c = all[i];
    if (quoted) {
      if (c == '"' && i + 1 < all.size() && all[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      if (!field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        field.clear();
        rows.push_back(std::move(row));
        row.clear();
      }
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace csv
}  // namespace lwssl
