#include "defectgen/inversion/embedding_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/hash.hpp"

static_assert(std::endian::native == std::endian::little,
              "embedding serialization assumes a little-endian host");

namespace defectgen::inversion {

namespace {

constexpr char kMagic[4] = {'D', 'F', 'E', '1'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xFF));
  b.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
  const std::vector<unsigned char>& buf;
  std::size_t off = 0;

  void need(std::size_t n, const char* field) {
    if (off + n > buf.size())
      throw FormatError(std::string("embedding file truncated at ") + field);
  }
  std::uint16_t u16(const char* field) {
    need(2, field);
    std::uint16_t v = static_cast<std::uint16_t>(buf[off]) |
                      (static_cast<std::uint16_t>(buf[off + 1]) << 8);
    off += 2;
    return v;
  }
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(buf[off + i]) << (8 * i);
    off += 4;
    return v;
  }
};

}  // namespace

void save_embedding(const ConceptEmbedding& e, const std::filesystem::path& path) {
  if (e.name.empty()) throw ParamError("embedding name is empty");
  if (e.name.size() > 0xFFFF) throw ParamError("embedding name too long");
  if (e.v.size() <= 0) throw ParamError("embedding vector is empty");
  for (Eigen::Index i = 0; i < e.v.size(); ++i)
    if (!std::isfinite(e.v(i))) throw ParamError("embedding contains non-finite values");

  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u16(buf, kVersion);
  put_u16(buf, static_cast<std::uint16_t>(e.name.size()));
  buf.insert(buf.end(), e.name.begin(), e.name.end());
  put_u32(buf, static_cast<std::uint32_t>(e.v.size()));
  const std::size_t voff = buf.size();
  buf.resize(voff + sizeof(float) * static_cast<std::size_t>(e.v.size()));
  std::memcpy(buf.data() + voff, e.v.data(), sizeof(float) * e.v.size());
  const std::string meta = e.meta.is_null() ? "{}" : e.meta.dump();
  put_u32(buf, static_cast<std::uint32_t>(meta.size()));
  buf.insert(buf.end(), meta.begin(), meta.end());
  put_u32(buf, crc32_bytes(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

ConceptEmbedding load_embedding(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 4 + 2 + 2 + 4 + 4 + 4)
    throw FormatError("embedding file truncated at header");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("embedding file: bad magic");

  // Verify the trailing CRC before trusting any length field.
  std::uint32_t crc_stored = 0;
  for (int i = 0; i < 4; ++i)
    crc_stored |= static_cast<std::uint32_t>(buf[buf.size() - 4 + i]) << (8 * i);
  if (crc_stored != crc32_bytes(buf.data(), buf.size() - 4))
    throw FormatError("embedding file: checksum mismatch");

  Reader r{buf, 4};
  const std::uint16_t version = r.u16("version");
  if (version != kVersion)
    throw FormatError("embedding file: unsupported version " +
                      std::to_string(version));
  const std::uint16_t name_len = r.u16("name length");
  r.need(name_len, "name");
  ConceptEmbedding e;
  e.name.assign(reinterpret_cast<const char*>(buf.data() + r.off), name_len);
  r.off += name_len;
  const std::uint32_t dim = r.u32("dimension");
  if (dim == 0 || dim > (1u << 20))
    throw FormatError("embedding file: implausible dimension " + std::to_string(dim));
  r.need(sizeof(float) * dim, "vector");
  e.v.resize(dim);
  std::memcpy(e.v.data(), buf.data() + r.off, sizeof(float) * dim);
  r.off += sizeof(float) * dim;
  const std::uint32_t meta_len = r.u32("metadata length");
  r.need(meta_len, "metadata");
  try {
    e.meta = nlohmann::json::parse(buf.begin() + static_cast<long>(r.off),
                                   buf.begin() + static_cast<long>(r.off + meta_len));
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("embedding file: metadata JSON: ") + ex.what());
  }
  r.off += meta_len;
  if (r.off + 4 != buf.size())
    throw FormatError("embedding file: trailing bytes");
  return e;
}

}  // namespace defectgen::inversion
