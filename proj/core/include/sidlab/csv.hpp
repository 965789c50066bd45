#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace sidlab {

/// Shortest round-trippable decimal (17 significant digits).
std::string g17(double v);

/// Minimal deterministic CSV writer; all floats go through g17.
class CsvFile {
 public:
  CsvFile(const std::filesystem::path& path,
          const std::vector<std::string>& header);
  void cell(double v);
  void cell(long long v);
  void cell(int v) { cell(static_cast<long long>(v)); }
  void cell(const std::string& v);
  void end_row();

 private:
  std::ofstream out_;
  bool row_open_ = false;
};

std::uint64_t fnv1a64_bytes(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace sidlab
