#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "echolab/error.hpp"

namespace echolab {

using ordered_json = nlohmann::ordered_json;

// Shortest text that carries 17 significant digits, so doubles round-trip.
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorKind::io, "cannot open for writing: " + path.string(), "out");
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
  }

  CsvWriter& cell(double v) {
    sep();
    out_ << format_double(v);
    return *this;
  }
  CsvWriter& cell(int v) {
    sep();
    out_ << v;
    return *this;
  }
  CsvWriter& cell(std::string_view s) {
    sep();
    out_ << s;
    return *this;
  }
  void end_row() {
    out_ << '\n';
    first_ = true;
  }

  void close() {
    out_.close();
    if (!out_) throw Error(ErrorKind::io, "write failed: " + path_.string(), "out");
  }

 private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }

  std::filesystem::path path_;
  std::ofstream out_;
  bool first_ = true;
};

inline void write_json(const std::filesystem::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot open for writing: " + path.string(), "out");
  out << j.dump(2) << '\n';
  out.close();
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string(), "out");
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw Error(ErrorKind::io, "cannot create output directory: " + dir.string(), "out");
}

}  // namespace echolab
