#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace osr {

// 8-bit binary PGM (P5).
struct PgmImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint8_t> pixels;  // row-major, height*width
};

PgmImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const PgmImage& img);

// Header-less manifest lines `class_name,relative_path` (UTF-8, LF).
struct ManifestEntry {
  std::string class_name;
  std::string relative_path;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

}  // namespace osr
