#include "hyperei/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace hei::net {

std::string to_string(Attention mode) {
  switch (mode) {
    case Attention::None: return "none";
    case Attention::Spatial: return "spatial";
    case Attention::Spectral: return "spectral";
    case Attention::Both: return "both";
  }
  return "?";
}

Attention attention_from_string(const std::string& s) {
  if (s == "none") return Attention::None;
  if (s == "spatial") return Attention::Spatial;
  if (s == "spectral") return Attention::Spectral;
  if (s == "both") return Attention::Both;
  throw ConfigError("unknown attention mode '" + s + "' (none|spatial|spectral|both)");
}

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> 8 * i & 0xff));
}
void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> 8 * i & 0xff));
}
std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << 8 * i;
  return v;
}
std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << 8 * i;
  return v;
}

std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// config header: in_bands, base, depth, rank, mode (u32 each), seed (u64)
constexpr std::size_t kHeaderBytes = 4 + 5 * 4 + 8;
constexpr std::size_t kHashOffset = kHeaderBytes;

std::vector<unsigned char> encode_header(const ModelConfig& cfg) {
  std::vector<unsigned char> out{'H', 'E', 'I', '1'};
  put_u32(out, std::uint32_t(cfg.in_bands));
  put_u32(out, std::uint32_t(cfg.base_channels));
  put_u32(out, std::uint32_t(cfg.depth));
  put_u32(out, std::uint32_t(cfg.attention_rank));
  put_u32(out, std::uint32_t(cfg.attention_mode));
  put_u64(out, cfg.seed);
  return out;
}

}  // namespace

void save_checkpoint(const Params<float>& params, const std::filesystem::path& path) {
  std::vector<unsigned char> out = encode_header(params.config);
  put_u64(out, fnv1a(out.data(), out.size()));
  for (const auto& [name, t] : params.entries)
    for (Eigen::Index i = 0; i < t.size(); ++i)
      put_u32(out, std::bit_cast<std::uint32_t>(t.values()[i]));

  const std::filesystem::path tmp = path.string() + ".tmp";
  std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
  if (!f) throw IoError("write failed on " + tmp.string());
  f.close();
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string());
}

Params<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path.string() + " for reading");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), "HEI1", 4) != 0)
    throw FormatError(path.string() + ": bad magic, expected \"HEI1\"", 0);
  if (buf.size() < kHashOffset + 8)
    throw FormatError(path.string() + ": header truncated", buf.size());

  ModelConfig cfg;
  cfg.in_bands = int(get_u32(buf.data() + 4));
  cfg.base_channels = int(get_u32(buf.data() + 8));
  cfg.depth = int(get_u32(buf.data() + 12));
  cfg.attention_rank = int(get_u32(buf.data() + 16));
  const std::uint32_t mode = get_u32(buf.data() + 20);
  if (mode > 3) throw FormatError(path.string() + ": invalid attention mode", 20);
  cfg.attention_mode = static_cast<Attention>(mode);
  cfg.seed = get_u64(buf.data() + 24);

  const std::uint64_t stored = get_u64(buf.data() + kHashOffset);
  if (stored != fnv1a(buf.data(), kHeaderBytes))
    throw FormatError(path.string() + ": config hash mismatch, refusing to load", kHashOffset);

  Params<float> params = build_model<float>(cfg);
  const std::size_t expected = kHashOffset + 8 + 4 * std::size_t(params.parameter_count());
  if (buf.size() != expected)
    throw FormatError(path.string() + ": payload truncated, expected " +
                          std::to_string(expected) + " bytes but file has " +
                          std::to_string(buf.size()),
                      buf.size());
  std::size_t off = kHashOffset + 8;
  for (auto& [name, t] : params.entries)
    for (Eigen::Index i = 0; i < t.size(); ++i, off += 4)
      t.values()[i] = std::bit_cast<float>(get_u32(buf.data() + off));
  return params;
}

}  // namespace hei::net
