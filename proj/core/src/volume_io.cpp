#include "slicerec/volume_io.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace slicerec {

namespace {

constexpr char kMagic[4] = {'V', 'O', 'L', 'R'};
constexpr std::size_t kHeaderSize = 32;

void put_u32(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_volume(const Volume& v, const std::filesystem::path& path) {
  v.validate();
  for (const Slice& s : v.slices)
    for (double p : s.pixels)
      if (p < 0.0 || p > 1.0)
        throw DataError("volume '" + v.scan_id +
                        "': pixel outside [0,1], normalize before saving");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");

  std::array<unsigned char, kHeaderSize> header{};
  std::memcpy(header.data(), kMagic, 4);
  put_u32(header.data() + 4, kVolrVersion);
  put_u32(header.data() + 8, static_cast<std::uint32_t>(v.n_slices()));
  put_u32(header.data() + 12, static_cast<std::uint32_t>(v.height()));
  put_u32(header.data() + 16, static_cast<std::uint32_t>(v.width()));
  out.write(reinterpret_cast<const char*>(header.data()), kHeaderSize);

  std::vector<unsigned char> row(static_cast<std::size_t>(v.width()) * 2);
  for (const Slice& s : v.slices)
    for (int r = 0; r < s.height; ++r) {
      for (int c = 0; c < s.width; ++c) {
        const std::uint16_t q =
            static_cast<std::uint16_t>(std::lround(s.at(r, c) * 65535.0));
        row[2 * c] = static_cast<unsigned char>(q & 0xff);
        row[2 * c + 1] = static_cast<unsigned char>((q >> 8) & 0xff);
      }
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size()));
    }
  if (!out) throw FormatError("short write to '" + path.string() + "'");
}

Volume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open volume '" + path.string() + "'");

  std::array<unsigned char, kHeaderSize> header{};
  in.read(reinterpret_cast<char*>(header.data()), kHeaderSize);
  if (in.gcount() != static_cast<std::streamsize>(kHeaderSize))
    throw FormatError("'" + path.string() + "': truncated header");
  if (std::memcmp(header.data(), kMagic, 4) != 0)
    throw FormatError("'" + path.string() + "': bad magic, not a volume file");
  const std::uint32_t version = get_u32(header.data() + 4);
  if (version != kVolrVersion)
    throw FormatError("'" + path.string() + "': unsupported version " +
                      std::to_string(version));
  const std::uint32_t n = get_u32(header.data() + 8);
  const std::uint32_t h = get_u32(header.data() + 12);
  const std::uint32_t w = get_u32(header.data() + 16);
  if (n == 0 || h == 0 || w == 0)
    throw FormatError("'" + path.string() + "': zero dimension in header");
  if (n > 100000 || h > 100000 || w > 100000)
    throw FormatError("'" + path.string() + "': implausible header dimensions");

  Volume v;
  v.scan_id = path.stem().string();
  v.subject_id = v.scan_id;
  v.slices.reserve(n);
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w * 2);
  for (std::uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
      throw FormatError("'" + path.string() + "': truncated pixel data at slice " +
                        std::to_string(i));
    Slice s(static_cast<int>(h), static_cast<int>(w));
    for (std::size_t j = 0; j < s.pixels.size(); ++j) {
      const std::uint16_t q = static_cast<std::uint16_t>(
          buf[2 * j] | (static_cast<std::uint16_t>(buf[2 * j + 1]) << 8));
      s.pixels[j] = q / 65535.0;
    }
    v.slices.push_back(std::move(s));
  }
  // Trailing garbage means the header lied about the shape.
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0)
    throw FormatError("'" + path.string() + "': trailing bytes after pixel data");
  return v;
}

}  // namespace slicerec
