#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "osr/error.hpp"
#include "osr/network.hpp"
#include "osr/rng.hpp"

namespace osr {

inline constexpr int kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'O', 'S', 'R', 'C', 'K', 'P', 'T', '\n'};

// CRC-32 (IEEE 802.3, reflected 0xEDB88320).
namespace detail {

inline const std::array<std::uint32_t, 256>& crc32_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}

inline std::uint32_t crc32(std::uint32_t crc, const std::uint8_t* data, size_t len) {
  crc ^= 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) crc = crc32_table()[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

template <class T>
void append_scalar_le(std::vector<std::uint8_t>& out, T v) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(v);
  for (size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <class T>
T read_scalar_le(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

template <class T>
constexpr const char* scalar_tag() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <class T>
std::vector<std::pair<std::string, const Tensor<T>*>> tensor_list(const Params<T>& p) {
  std::vector<std::pair<std::string, const Tensor<T>*>> list;
  for (size_t l = 0; l < p.conv.size(); ++l) {
    list.emplace_back("conv" + std::to_string(l) + ".w", &p.conv[l].w);
    list.emplace_back("conv" + std::to_string(l) + ".b", &p.conv[l].b);
  }
  list.emplace_back("disc.w", &p.disc.w);
  list.emplace_back("disc.b", &p.disc.b);
  return list;
}

}  // namespace detail

// Layout: magic, u32 header length, JSON header, little-endian scalar
// payload, u32 CRC-32 over header+payload.
template <class T>
void save_checkpoint(const Params<T>& params, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["version"] = params.version;
  header["scalar"] = detail::scalar_tag<T>();
  header["prng"] = Rng::kAlgorithm;
  header["seed"] = params.init_seed;
  header["arch"] = {
      {"input_size", params.arch.input_size},
      {"conv_channels", params.arch.conv_channels},
      {"disc_input", to_string(params.arch.disc_input)},
      {"disc_classes", params.arch.disc_classes},
  };
  auto tensors = detail::tensor_list(params);
  auto& tlist = header["tensors"] = nlohmann::ordered_json::array();
  for (const auto& [name, t] : tensors) {
    tlist.push_back({{"name", name}, {"shape", t->shape}});
  }
  const std::string header_bytes = header.dump();

  std::vector<std::uint8_t> payload;
  for (const auto& [name, t] : tensors) {
    payload.reserve(payload.size() + t->data.size() * sizeof(T));
    for (T v : t->data) detail::append_scalar_le(payload, v);
  }

  std::uint32_t crc = detail::crc32(0, reinterpret_cast<const std::uint8_t*>(header_bytes.data()),
                                    header_bytes.size());
  crc = detail::crc32(crc, payload.data(), payload.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t hlen = static_cast<std::uint32_t>(header_bytes.size());
  std::uint8_t lenb[4] = {static_cast<std::uint8_t>(hlen), static_cast<std::uint8_t>(hlen >> 8),
                          static_cast<std::uint8_t>(hlen >> 16), static_cast<std::uint8_t>(hlen >> 24)};
  out.write(reinterpret_cast<const char*>(lenb), 4);
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  std::uint8_t crcb[4] = {static_cast<std::uint8_t>(crc), static_cast<std::uint8_t>(crc >> 8),
                          static_cast<std::uint8_t>(crc >> 16), static_cast<std::uint8_t>(crc >> 24)};
  out.write(reinterpret_cast<const char*>(crcb), 4);
  if (!out) throw DataError("checkpoint: write failed for " + path.string());
}

template <class T>
Params<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint not found: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  size_t off = 0;
  auto need = [&](size_t n, const char* what) {
    if (bytes.size() - off < n) {
      throw DataError("checkpoint: truncated file (" + std::string(what) + ") in " + path.string());
    }
  };

  need(sizeof(kCheckpointMagic), "magic");
  if (!std::equal(kCheckpointMagic, kCheckpointMagic + sizeof(kCheckpointMagic), bytes.begin())) {
    throw DataError("checkpoint: bad magic in " + path.string());
  }
  off += sizeof(kCheckpointMagic);

  need(4, "header length");
  const std::uint32_t hlen = static_cast<std::uint32_t>(bytes[off]) |
                             (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
                             (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
                             (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
  off += 4;
  need(hlen, "header");
  const std::string header_bytes(bytes.begin() + off, bytes.begin() + off + hlen);
  off += hlen;

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: malformed header in " + path.string() + ": " + e.what());
  }

  const int version = header.at("version").get<int>();
  if (version > kCheckpointVersion) {
    throw DataError("checkpoint: file version " + std::to_string(version) +
                    " is newer than supported version " + std::to_string(kCheckpointVersion));
  }
  const std::string scalar = header.at("scalar").get<std::string>();
  if (scalar != detail::scalar_tag<T>()) {
    throw ConfigError("checkpoint: scalar width is " + scalar + ", expected " +
                      detail::scalar_tag<T>());
  }

  if (bytes.size() < off + 4) throw DataError("checkpoint: truncated payload in " + path.string());
  const size_t payload_len = bytes.size() - off - 4;
  const std::uint8_t* payload = bytes.data() + off;
  const std::uint8_t* crcb = bytes.data() + bytes.size() - 4;
  const std::uint32_t stored_crc = static_cast<std::uint32_t>(crcb[0]) |
                                   (static_cast<std::uint32_t>(crcb[1]) << 8) |
                                   (static_cast<std::uint32_t>(crcb[2]) << 16) |
                                   (static_cast<std::uint32_t>(crcb[3]) << 24);
  std::uint32_t crc = detail::crc32(0, reinterpret_cast<const std::uint8_t*>(header_bytes.data()),
                                    header_bytes.size());
  crc = detail::crc32(crc, payload, payload_len);
  if (crc != stored_crc) throw DataError("checkpoint: checksum failure in " + path.string());

  Params<T> p;
  p.version = version;
  p.init_seed = header.at("seed").get<std::uint64_t>();
  const auto& ja = header.at("arch");
  p.arch.input_size = ja.at("input_size").get<int>();
  p.arch.conv_channels = ja.at("conv_channels").get<std::vector<int>>();
  p.arch.disc_input = disc_input_from_string(ja.at("disc_input").get<std::string>());
  p.arch.disc_classes = ja.at("disc_classes").get<int>();
  p.arch.validate();

  std::vector<std::pair<std::string, Shape>> tensors;
  for (const auto& jt : header.at("tensors")) {
    tensors.emplace_back(jt.at("name").get<std::string>(), jt.at("shape").get<Shape>());
  }

  size_t expected = 0;
  for (const auto& [name, shape] : tensors) expected += static_cast<size_t>(numel(shape));
  if (payload_len != expected * sizeof(T)) {
    throw DataError("checkpoint: payload holds " + std::to_string(payload_len / sizeof(T)) +
                    " scalars, header expects " + std::to_string(expected));
  }

  size_t pos = 0;
  auto read_tensor = [&](const Shape& shape, bool rg) {
    Tensor<T> t = Tensor<T>::zeros(shape, rg);
    for (auto& v : t.data) {
      v = detail::read_scalar_le<T>(payload + pos);
      pos += sizeof(T);
    }
    return t;
  };
  for (const auto& [name, shape] : tensors) {
    if (name == "disc.w") {
      p.disc.w = read_tensor(shape, true);
    } else if (name == "disc.b") {
      p.disc.b = read_tensor(shape, true);
    } else if (name.ends_with(".w")) {
      p.conv.push_back({read_tensor(shape, true), Tensor<T>()});
    } else if (name.ends_with(".b")) {
      if (p.conv.empty()) throw DataError("checkpoint: bias before kernel in tensor list");
      p.conv.back().b = read_tensor(shape, true);
    } else {
      throw DataError("checkpoint: unknown tensor '" + name + "'");
    }
  }
  if (static_cast<int>(p.conv.size()) != p.arch.n_blocks()) {
    throw DataError("checkpoint: tensor list does not match arch block count");
  }
  if (!all_finite(p.disc.w.data) || !all_finite(p.disc.b.data)) {
    throw NumericError("checkpoint: non-finite discriminator parameters");
  }
  for (const auto& layer : p.conv) {
    if (!all_finite(layer.w.data) || !all_finite(layer.b.data)) {
      throw NumericError("checkpoint: non-finite conv parameters");
    }
  }
  return p;
}

}  // namespace osr
