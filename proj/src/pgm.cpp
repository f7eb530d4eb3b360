#include "osr/pgm_io.hpp"

#include <fstream>
#include <sstream>

#include "osr/error.hpp"

namespace osr {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  for (;;) {
    const int c = in.peek();
    if (c == EOF) throw DataError("pgm: truncated header in " + path.string());
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  in >> tok;
  return tok;
}

int parse_int(const std::string& tok, const char* what, const std::filesystem::path& path) {
  try {
    size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError("pgm: malformed " + std::string(what) + " '" + tok + "' in " + path.string());
  }
}

}  // namespace

PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("pgm: cannot open " + path.string());

  const std::string magic = next_token(in, path);
  if (magic != "P5") throw DataError("pgm: expected P5 magic in " + path.string() + ", got '" + magic + "'");

  PgmImage img;
  img.width = parse_int(next_token(in, path), "width", path);
  img.height = parse_int(next_token(in, path), "height", path);
  img.maxval = parse_int(next_token(in, path), "maxval", path);
  if (img.width <= 0 || img.height <= 0) throw DataError("pgm: non-positive dimensions in " + path.string());
  if (img.maxval <= 0 || img.maxval > 255) {
    throw DataError("pgm: only 8-bit maxval (1..255) supported, got " + std::to_string(img.maxval) +
                    " in " + path.string());
  }
  in.get();  // single whitespace after maxval

  img.pixels.resize(static_cast<size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw DataError("pgm: truncated pixel data in " + path.string());
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const PgmImage& img) {
  if (img.pixels.size() != static_cast<size_t>(img.width) * img.height) {
    throw DataError("pgm: pixel buffer does not match dimensions for " + path.string());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("pgm: cannot write " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n" << img.maxval << "\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw DataError("pgm: write failed for " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest: cannot open " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 >= line.size()) {
      throw DataError("manifest: malformed line " + std::to_string(lineno) + " in " + path.string());
    }
    entries.push_back({line.substr(0, comma), line.substr(comma + 1)});
  }
  if (entries.empty()) throw DataError("manifest: no entries in " + path.string());
  return entries;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("manifest: cannot write " + path.string());
  for (const auto& e : entries) out << e.class_name << ',' << e.relative_path << '\n';
  if (!out) throw DataError("manifest: write failed for " + path.string());
}

}  // namespace osr
