#include "avf/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace avf {

static_assert(std::endian::native == std::endian::little,
              "array files are little-endian; big-endian hosts unsupported");

namespace {
constexpr char kMagic[4] = {'A', 'V', 'F', '1'};
constexpr std::uint32_t kDtypeF32 = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
}  // namespace

void save_array_f32(const std::filesystem::path& path, const Shape& shape,
                    const std::vector<double>& data) {
  if (numel(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("save_array_f32: shape/data mismatch");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for write: " + path.string());
  os.write(kMagic, 4);
  put_u32(os, kDtypeF32);
  put_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) put_u32(os, static_cast<std::uint32_t>(d));
  std::vector<float> buf(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) buf[i] = static_cast<float>(data[i]);
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

void load_array_f32(const std::filesystem::path& path, Shape& shape,
                    std::vector<double>& data) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad array header: " + path.string());
  if (get_u32(is) != kDtypeF32)
    throw std::runtime_error("unsupported dtype in " + path.string());
  std::uint32_t nd = get_u32(is);
  if (nd > 8) throw std::runtime_error("implausible rank in " + path.string());
  shape.resize(nd);
  for (auto& d : shape) d = static_cast<int>(get_u32(is));
  const std::int64_t n = numel(shape);
  std::vector<float> buf(static_cast<std::size_t>(n));
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw std::runtime_error("truncated array file: " + path.string());
  data.resize(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) data[i] = buf[i];
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<std::size_t>(is.gcount()), h);
  }
  return h;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for write: " + path.string());
  os << text;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace avf
