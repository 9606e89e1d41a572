#include "pren/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace pren {

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4)
    throw CheckpointIoError(CheckpointError::truncated,
                            "checkpoint truncated while reading u32");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void read_exact(std::istream& is, char* dst, std::streamsize n,
                const char* what) {
  is.read(dst, n);
  if (is.gcount() != n)
    throw CheckpointIoError(CheckpointError::truncated,
                            std::string("checkpoint truncated while reading ") +
                                what);
}

}  // namespace

void save_checkpoint(const ParamSet<float>& params,
                     const std::string& config_echo, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw CheckpointIoError(CheckpointError::io,
                            "cannot open '" + path + "' for writing");
  os.write("PREN", 4);
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(os, static_cast<std::uint32_t>(d));
    // f32 little-endian; x86 native layout matches.
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  write_u32(os, static_cast<std::uint32_t>(config_echo.size()));
  os.write(config_echo.data(),
           static_cast<std::streamsize>(config_echo.size()));
  if (!os)
    throw CheckpointIoError(CheckpointError::io,
                            "write failure on '" + path + "'");
}

CheckpointContents load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw CheckpointIoError(CheckpointError::io,
                            "cannot open '" + path + "' for reading");
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, "PREN", 4) != 0)
    throw CheckpointIoError(CheckpointError::bad_magic,
                            "'" + path + "' is not a PREN checkpoint");
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw CheckpointIoError(
        CheckpointError::version_mismatch,
        "checkpoint version " + std::to_string(version) + ", expected " +
            std::to_string(kCheckpointVersion));
  CheckpointContents out;
  const std::uint32_t count = read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    read_exact(is, name.data(), name_len, "tensor name");
    const std::uint32_t rank = read_u32(is);
    std::vector<int> shape;
    shape.reserve(rank);
    for (std::uint32_t r = 0; r < rank; ++r)
      shape.push_back(static_cast<int>(read_u32(is)));
    Tensor<float> t(shape);
    read_exact(is, reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(float)),
               "tensor data");
    out.params.emplace(std::move(name), std::move(t));
  }
  const std::uint32_t cfg_len = read_u32(is);
  out.config_echo.resize(cfg_len);
  read_exact(is, out.config_echo.data(), cfg_len, "config echo");
  is.peek();
  if (!is.eof())
    throw CheckpointIoError(CheckpointError::trailing_data,
                            "'" + path + "' has trailing bytes after payload");
  return out;
}

}  // namespace pren
