#include "scg/binary_io.hpp"

#include <openssl/sha.h>

#include <bit>
#include <fstream>
#include <sstream>

#include "scg/error.hpp"

namespace scg {

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::put_f32_array(std::span<const float> values) {
  buf_.reserve(buf_.size() + 4 * values.size());
  for (float v : values) put_f32(v);
}

std::uint8_t ByteReader::get_u8() { return static_cast<std::uint8_t>(get_bytes(1)[0]); }

std::uint32_t ByteReader::get_u32() {
  const std::string_view b = get_bytes(4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[i]);
  return v;
}

float ByteReader::get_f32() { return std::bit_cast<float>(get_u32()); }

std::string_view ByteReader::get_bytes(std::size_t n) {
  if (n > remaining()) {
    throw IoError("truncated data: wanted " + std::to_string(n) + " bytes at offset " +
                  std::to_string(pos_) + ", " + std::to_string(remaining()) + " left");
  }
  const std::string_view out = bytes_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::vector<float> ByteReader::get_f32_array(std::size_t n) {
  if (n > remaining() / 4) throw IoError("truncated float payload");
  std::vector<float> out(n);
  for (float& v : out) v = get_f32();
  return out;
}

std::uint32_t checked_u32(std::size_t value, const char* what) {
  if (value > 0xffffffffu) throw DimensionError(std::string(what) + " exceeds u32 range");
  return static_cast<std::uint32_t>(value);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Digest sha256(std::string_view bytes) {
  Digest d{};
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), d.data());
  return d;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (std::uint8_t b : bytes) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xf]);
  }
  return s;
}

}  // namespace scg
