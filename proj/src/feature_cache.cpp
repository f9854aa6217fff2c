#include "ctl/feature_cache.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "ctl/errors.hpp"
#include "ctl/hashing.hpp"

namespace ctl {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'L', 'F', 'E', 'A', 'T', '\x01'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& buf, float f) {
  put_u32(buf, std::bit_cast<std::uint32_t>(f));
}

class Reader {
 public:
  Reader(std::istream& in, std::string path)
      : in_(in), path_(std::move(path)) {}

  bool at_eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }

  std::string bytes(std::size_t n) {
    std::string buf(n, '\0');
    in_.read(buf.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw ChecksumMismatchError("truncated cache file '" + path_ + "'");
    }
    return buf;
  }

  std::uint32_t u32() {
    const std::string b = bytes(4);
    return static_cast<std::uint32_t>(static_cast<unsigned char>(b[0])) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(b[1])) << 8) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(b[2])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(b[3])) << 24);
  }

 private:
  std::istream& in_;
  std::string path_;
};

std::uint32_t crc_of(const std::string& buf) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
              static_cast<uInt>(buf.size())));
}

float f32_from_u32(std::uint32_t v) { return std::bit_cast<float>(v); }

}  // namespace

void write_feature_cache(const std::string& path, const FeatureSpec& spec,
                         const std::vector<FeatureRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");

  std::string header(kMagic, sizeof(kMagic));
  put_u32(header, kVersion);
  put_u32(header, static_cast<std::uint32_t>(spec.d1));
  put_u32(header, static_cast<std::uint32_t>(spec.map_w));
  put_u32(header, static_cast<std::uint32_t>(spec.map_h));
  put_u32(header, static_cast<std::uint32_t>(spec.d2));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  for (const auto& rec : records) {
    if (static_cast<int>(rec.features.global.v.size()) != spec.d1 ||
        rec.features.map.cells() != spec.cells() ||
        rec.features.map.d2 != spec.d2) {
      throw ShapeError("feature record '" + rec.id + "' does not match spec");
    }
    std::string buf;
    put_u32(buf, static_cast<std::uint32_t>(rec.id.size()));
    buf.append(rec.id);
    for (float f : rec.features.global.v) put_f32(buf, f);
    for (float f : rec.features.map.v) put_f32(buf, f);
    put_u32(buf, crc_of(buf));
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw IoError("failed writing cache '" + path + "'");
}

FeatureCache read_feature_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  Reader r(in, path);

  const std::string magic = r.bytes(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatVersionMismatchError("'" + path + "' is not a feature cache");
  }
  if (r.u32() != kVersion) {
    throw FormatVersionMismatchError("unsupported cache version in '" + path +
                                     "'");
  }
  FeatureCache cache;
  cache.spec.d1 = static_cast<int>(r.u32());
  cache.spec.map_w = static_cast<int>(r.u32());
  cache.spec.map_h = static_cast<int>(r.u32());
  cache.spec.d2 = static_cast<int>(r.u32());
  if (!cache.spec.valid()) {
    throw FormatVersionMismatchError("corrupt cache header in '" + path + "'");
  }

  const std::size_t map_len =
      static_cast<std::size_t>(cache.spec.cells()) * cache.spec.d2;
  while (!r.at_eof()) {
    std::string buf;
    const std::uint32_t id_len = r.u32();
    put_u32(buf, id_len);
    buf.append(r.bytes(id_len));

    FeatureRecord rec;
    rec.id = buf.substr(4);
    const std::string payload =
        r.bytes((static_cast<std::size_t>(cache.spec.d1) + map_len) * 4);
    buf.append(payload);
    const std::uint32_t stored_crc = r.u32();
    if (stored_crc != crc_of(buf)) {
      throw ChecksumMismatchError("record '" + rec.id + "' in '" + path +
                                  "' failed its CRC");
    }

    auto read_f32 = [&payload](std::size_t i) {
      const auto* p =
          reinterpret_cast<const unsigned char*>(payload.data()) + 4 * i;
      return f32_from_u32(static_cast<std::uint32_t>(p[0]) |
                          (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) |
                          (static_cast<std::uint32_t>(p[3]) << 24));
    };
    rec.features.global.v.resize(cache.spec.d1);
    for (int i = 0; i < cache.spec.d1; ++i) {
      rec.features.global.v[i] = read_f32(i);
    }
    rec.features.map.w = cache.spec.map_w;
    rec.features.map.h = cache.spec.map_h;
    rec.features.map.d2 = cache.spec.d2;
    rec.features.map.v.resize(map_len);
    for (std::size_t i = 0; i < map_len; ++i) {
      rec.features.map.v[i] = read_f32(cache.spec.d1 + i);
    }
    cache.index[rec.id] = cache.records.size();
    cache.records.push_back(std::move(rec));
  }
  return cache;
}

std::string image_content_hash(const Image& img) {
  return hex64(fnv1a64(img.rgb.data(), img.rgb.size()));
}

}  // namespace ctl
