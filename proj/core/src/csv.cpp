#include "sidlab/csv.hpp"

#include <cstdio>
#include <stdexcept>

namespace sidlab {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvFile::CsvFile(const std::filesystem::path& path,
                 const std::vector<std::string>& header)
    : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out_ << ',';
    out_ << header[i];
  }
  out_ << '\n';
}

void CsvFile::cell(double v) { cell(g17(v)); }

void CsvFile::cell(long long v) { cell(std::to_string(v)); }

void CsvFile::cell(const std::string& v) {
  if (row_open_) out_ << ',';
  out_ << v;
  row_open_ = true;
}

void CsvFile::end_row() {
  out_ << '\n';
  row_open_ = false;
}

std::uint64_t fnv1a64_bytes(std::span<const unsigned char> bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::uint64_t h = 14695981039346656037ULL;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace sidlab
