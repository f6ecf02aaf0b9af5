#include "defectgen/core/blockfile.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/hash.hpp"

static_assert(std::endian::native == std::endian::little,
              "block file serialization assumes a little-endian host");

namespace defectgen {

namespace {

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  buf.push_back(static_cast<unsigned char>(v & 0xFF));
  buf.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
  buf.push_back(static_cast<unsigned char>((v >> 16) & 0xFF));
  buf.push_back(static_cast<unsigned char>((v >> 24) & 0xFF));
}

std::uint32_t get_u32(const std::vector<unsigned char>& buf, std::size_t off) {
  return static_cast<std::uint32_t>(buf[off]) |
         (static_cast<std::uint32_t>(buf[off + 1]) << 8) |
         (static_cast<std::uint32_t>(buf[off + 2]) << 16) |
         (static_cast<std::uint32_t>(buf[off + 3]) << 24);
}

}  // namespace

void write_block_file(const std::filesystem::path& path, nlohmann::json manifest,
                      const std::vector<NamedBlock>& blocks) {
  nlohmann::json index = nlohmann::json::array();
  for (const auto& b : blocks) {
    if (b.data.size() != static_cast<std::size_t>(b.rows) * b.cols)
      throw ParamError("block '" + b.name + "' size does not match its shape");
    index.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  }
  manifest["blocks"] = std::move(index);
  const std::string mjson = manifest.dump();

  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kBlockFileMagic, kBlockFileMagic + 4);
  put_u32(buf, kBlockFileVersion);
  put_u32(buf, static_cast<std::uint32_t>(mjson.size()));
  buf.insert(buf.end(), mjson.begin(), mjson.end());
  for (const auto& b : blocks) {
    const std::size_t off = buf.size();
    buf.resize(off + b.data.size() * sizeof(float));
    std::memcpy(buf.data() + off, b.data.data(), b.data.size() * sizeof(float));
  }
  put_u32(buf, crc32_bytes(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

const NamedBlock& BlockFile::find(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw FormatError("block file is missing block '" + name + "'");
}

BlockFile read_block_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());

  if (buf.size() < 16) throw FormatError("block file truncated: header");
  if (std::memcmp(buf.data(), kBlockFileMagic, 4) != 0)
    throw FormatError("block file: bad magic");
  const std::uint32_t version = get_u32(buf, 4);
  if (version != kBlockFileVersion)
    throw FormatError("block file: unsupported version " + std::to_string(version));

  const std::uint32_t crc_stored = get_u32(buf, buf.size() - 4);
  const std::uint32_t crc_actual = crc32_bytes(buf.data(), buf.size() - 4);
  if (crc_stored != crc_actual) throw FormatError("block file: checksum mismatch");

  const std::uint32_t mlen = get_u32(buf, 8);
  std::size_t off = 12;
  if (off + mlen + 4 > buf.size())
    throw FormatError("block file truncated: manifest");
  BlockFile bf;
  try {
    bf.manifest = nlohmann::json::parse(buf.begin() + off, buf.begin() + off + mlen);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("block file: manifest JSON: ") + e.what());
  }
  off += mlen;

  if (!bf.manifest.contains("blocks") || !bf.manifest["blocks"].is_array())
    throw FormatError("block file: manifest lacks a blocks index");
  for (const auto& entry : bf.manifest["blocks"]) {
    NamedBlock b;
    try {
      b.name = entry.at("name").get<std::string>();
      b.rows = entry.at("rows").get<long>();
      b.cols = entry.at("cols").get<long>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("block file: block index entry: ") + e.what());
    }
    if (b.rows < 0 || b.cols < 0)
      throw FormatError("block file: negative shape for block '" + b.name + "'");
    const std::size_t nbytes =
        static_cast<std::size_t>(b.rows) * static_cast<std::size_t>(b.cols) *
        sizeof(float);
    if (off + nbytes + 4 > buf.size())
      throw FormatError("block file truncated: block '" + b.name + "'");
    b.data.resize(static_cast<std::size_t>(b.rows) * b.cols);
    std::memcpy(b.data.data(), buf.data() + off, nbytes);
    off += nbytes;
    bf.blocks.push_back(std::move(b));
  }
  if (off + 4 != buf.size())
    throw FormatError("block file: trailing bytes after last block");
  return bf;
}

}  // namespace defectgen
