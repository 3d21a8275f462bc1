#pragma once

// Self-describing binary container shared by every persisted artifact:
//
//   <one line of UTF-8 JSON header>\n<raw little-endian payload>
//
// The header always carries "version", "kind", "dtype" and "payload_bytes";
// the remaining fields depend on the kind (see README).

#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdpose/core/error.hpp"

namespace mdpose {

using Json = nlohmann::json;

inline constexpr int kContainerVersion = 1;

struct Container {
  Json header;
  std::vector<std::uint8_t> payload;
};

namespace detail {

inline std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_f32le(std::span<const float> values) {
  std::vector<std::uint8_t> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &values[i], 4);
    if constexpr (std::endian::native == std::endian::big) bits = detail::byteswap32(bits);
    std::memcpy(out.data() + 4 * i, &bits, 4);
  }
  return out;
}

inline std::vector<float> decode_f32le(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) throw IoError("f32le payload length is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) bits = detail::byteswap32(bits);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

inline std::string serialize(const Container& c) {
  Json header = c.header;
  header["payload_bytes"] = c.payload.size();
  std::string text = header.dump();
  text.push_back('\n');
  text.append(reinterpret_cast<const char*>(c.payload.data()), c.payload.size());
  return text;
}

inline Container deserialize(const std::string& bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw IoError("container has no header terminator");
  Container c;
  try {
    c.header = Json::parse(bytes.substr(0, newline));
  } catch (const Json::exception& e) {
    throw IoError(std::string("container header is not valid JSON: ") + e.what());
  }
  if (!c.header.contains("version") || c.header["version"] != kContainerVersion)
    throw IoError("unsupported container version");
  const std::size_t expected = c.header.value("payload_bytes", std::size_t{0});
  const std::size_t actual = bytes.size() - newline - 1;
  if (expected != actual)
    throw IoError("container payload size mismatch: header says " + std::to_string(expected) +
                  ", file has " + std::to_string(actual));
  c.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(newline) + 1, bytes.end());
  return c;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_container(const std::filesystem::path& path, const Container& c) {
  write_file(path, serialize(c));
}

inline Container load_container(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

inline void expect_kind(const Container& c, const std::string& kind, const std::string& dtype) {
  if (c.header.value("kind", std::string{}) != kind)
    throw IoError("expected container kind '" + kind + "'");
  if (c.header.value("dtype", std::string{}) != dtype)
    throw IoError("expected dtype '" + dtype + "' for kind '" + kind + "'");
}

}  // namespace mdpose
