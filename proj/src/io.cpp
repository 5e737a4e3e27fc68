#include "lsenet/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lsenet::io {

namespace {

constexpr char kMagic[4] = {'L', 'S', 'T', '1'};

void write_header(std::ostream& os, Dtype dtype, const std::vector<int>& shape) {
  os.write(kMagic, 4);
  const uint8_t dt = static_cast<uint8_t>(dtype);
  const uint8_t ndim = static_cast<uint8_t>(shape.size());
  const uint16_t reserved = 0;
  os.write(reinterpret_cast<const char*>(&dt), 1);
  os.write(reinterpret_cast<const char*>(&ndim), 1);
  os.write(reinterpret_cast<const char*>(&reserved), 2);
  for (int e : shape) {
    const uint32_t v = static_cast<uint32_t>(e);
    os.write(reinterpret_cast<const char*>(&v), 4);
  }
}

void atomic_rename(const std::filesystem::path& tmp,
                   const std::filesystem::path& path) {
  std::filesystem::rename(tmp, path);
}

template <class T>
void write_payload(const std::filesystem::path& path, Dtype dtype,
                   const std::vector<int>& shape, std::span<const T> data) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    write_header(os, dtype, shape);
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!os) throw std::runtime_error("write failed: " + path.string());
  }
  atomic_rename(tmp, path);
}

}  // namespace

void write_lst1(const std::filesystem::path& path, const std::vector<int>& shape,
                std::span<const float> data) {
  write_payload(path, Dtype::F32, shape, data);
}

void write_lst1(const std::filesystem::path& path, const std::vector<int>& shape,
                std::span<const uint8_t> data) {
  write_payload(path, Dtype::U8, shape, data);
}

Lst1 read_lst1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  char magic[4];
  uint8_t dt = 0, ndim = 0;
  uint16_t reserved = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&dt), 1);
  is.read(reinterpret_cast<char*>(&ndim), 1);
  is.read(reinterpret_cast<char*>(&reserved), 2);
  if (!is || std::memcmp(magic, kMagic, 4) != 0 || reserved != 0)
    throw std::runtime_error("bad LST1 magic/header in " + path.string());
  if (dt > 1) throw std::runtime_error("unknown LST1 dtype in " + path.string());

  Lst1 out;
  out.dtype = static_cast<Dtype>(dt);
  size_t n = 1;
  for (int i = 0; i < ndim; ++i) {
    uint32_t e = 0;
    is.read(reinterpret_cast<char*>(&e), 4);
    if (!is) throw std::runtime_error("truncated LST1 header in " + path.string());
    out.shape.push_back(static_cast<int>(e));
    n *= e;
  }
  if (out.dtype == Dtype::F32) {
    out.f32.resize(n);
    is.read(reinterpret_cast<char*>(out.f32.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    out.u8.resize(n);
    is.read(reinterpret_cast<char*>(out.u8.data()),
            static_cast<std::streamsize>(n));
  }
  if (!is) throw std::runtime_error("truncated LST1 payload in " + path.string());
  // no trailing garbage
  is.peek();
  if (!is.eof())
    throw std::runtime_error("trailing bytes after LST1 payload in " + path.string());
  return out;
}

void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path.string());
  }
  atomic_rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace lsenet::io
