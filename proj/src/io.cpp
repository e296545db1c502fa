#include "hyperei/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace hei {

namespace {

constexpr std::size_t kMaxElements = std::size_t(1) << 28;  // dim-overflow guard

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string() + " for reading");
  in.seekg(0, std::ios::end);
  const auto len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> buf(static_cast<std::size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(buf.data()), len);
  if (!in) throw IoError("read failed on " + path.string());
  return buf;
}

// Atomic write: stage into <path>.tmp, then rename over the target.
void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed on " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::uint32_t get_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8 & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 16 & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 24 & 0xff));
}

float get_f32le(const unsigned char* p) { return std::bit_cast<float>(get_u32le(p)); }

void put_f32le(std::vector<unsigned char>& out, float v) {
  put_u32le(out, std::bit_cast<std::uint32_t>(v));
}

void check_magic(const std::vector<unsigned char>& buf, const char* magic,
                 const std::string& path) {
  if (buf.size() < 4 || std::memcmp(buf.data(), magic, 4) != 0)
    throw FormatError(path + ": bad magic, expected \"" + magic + "\"", 0);
}

std::uint32_t read_dim(const std::vector<unsigned char>& buf, std::size_t offset,
                       const std::string& path, const char* name) {
  if (buf.size() < offset + 4)
    throw FormatError(path + ": header truncated before " + name, buf.size());
  const std::uint32_t v = get_u32le(buf.data() + offset);
  if (v == 0) throw FormatError(path + ": " + name + " must be positive", offset);
  return v;
}

}  // namespace

HsiCube load_cube(const std::filesystem::path& path) {
  const auto buf = read_file(path);
  check_magic(buf, "HSC1", path.string());
  const std::uint32_t h = read_dim(buf, 4, path.string(), "height");
  const std::uint32_t w = read_dim(buf, 8, path.string(), "width");
  const std::uint32_t c = read_dim(buf, 12, path.string(), "bands");
  const std::size_t n = std::size_t(h) * w * c;
  if (n / w / c != h || n > kMaxElements)
    throw FormatError(path.string() + ": declared dimensions overflow the element guard", 4);
  const std::size_t expected = 16 + 4 * n;
  if (buf.size() != expected)
    throw FormatError(path.string() + ": payload truncated, expected " +
                          std::to_string(expected) + " bytes but file has " +
                          std::to_string(buf.size()),
                      buf.size());
  HsiCube cube{int(h), int(w), int(c)};
  for (std::size_t k = 0; k < n; ++k) cube.data[Eigen::Index(k)] = get_f32le(buf.data() + 16 + 4 * k);
  return cube;
}

void save_cube(const HsiCube& cube, const std::filesystem::path& path) {
  if (cube.height <= 0 || cube.width <= 0 || cube.bands <= 0)
    throw ConfigError("save_cube: dimensions must be positive");
  if (cube.data.size() != cube.size())
    throw ConfigError("save_cube: data length does not match dimensions");
  if (!cube.all_finite()) throw ConfigError("save_cube: cube contains non-finite values");
  std::vector<unsigned char> out;
  out.reserve(16 + 4 * std::size_t(cube.size()));
  out.insert(out.end(), {'H', 'S', 'C', '1'});
  put_u32le(out, std::uint32_t(cube.height));
  put_u32le(out, std::uint32_t(cube.width));
  put_u32le(out, std::uint32_t(cube.bands));
  for (Eigen::Index k = 0; k < cube.size(); ++k) put_f32le(out, cube.data[k]);
  write_file(path, out);
}

SpatialMask load_mask(const std::filesystem::path& path) {
  const auto buf = read_file(path);
  check_magic(buf, "HSM1", path.string());
  const std::uint32_t h = read_dim(buf, 4, path.string(), "height");
  const std::uint32_t w = read_dim(buf, 8, path.string(), "width");
  const std::size_t n = std::size_t(h) * w;
  if (n / w != h || n > kMaxElements)
    throw FormatError(path.string() + ": declared dimensions overflow the element guard", 4);
  const std::size_t expected = 12 + n;
  if (buf.size() != expected)
    throw FormatError(path.string() + ": payload truncated, expected " +
                          std::to_string(expected) + " bytes but file has " +
                          std::to_string(buf.size()),
                      buf.size());
  SpatialMask mask{int(h), int(w)};
  for (std::size_t k = 0; k < n; ++k) {
    const unsigned char b = buf[12 + k];
    if (b > 1)
      throw FormatError(path.string() + ": mask byte must be 0 or 1, got " + std::to_string(b),
                        12 + k);
    mask.bits[Eigen::Index(k)] = b;
  }
  return mask;
}

void save_mask(const SpatialMask& mask, const std::filesystem::path& path) {
  if (mask.height <= 0 || mask.width <= 0)
    throw ConfigError("save_mask: dimensions must be positive");
  if (mask.bits.size() != mask.size())
    throw ConfigError("save_mask: bit array length does not match dimensions");
  if ((mask.bits > 1).any()) throw ConfigError("save_mask: entries must be 0 or 1");
  std::vector<unsigned char> out;
  out.reserve(12 + std::size_t(mask.size()));
  out.insert(out.end(), {'H', 'S', 'M', '1'});
  put_u32le(out, std::uint32_t(mask.height));
  put_u32le(out, std::uint32_t(mask.width));
  for (Eigen::Index k = 0; k < mask.size(); ++k)
    out.push_back(static_cast<unsigned char>(mask.bits[k]));
  write_file(path, out);
}

std::uint64_t file_fnv1a(const std::filesystem::path& path) {
  const auto buf = read_file(path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char b : buf) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace hei
