#include "minitts/core/serialize.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace minitts {

namespace {

constexpr std::uint32_t kMagic = 0x4d545453;  // "MTTS"
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

std::string read_string(std::istream& is) {
  std::uint64_t n = read_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  write_u32(os, kMagic);
  write_u32(os, kVersion);
  write_string(os, ckpt.kind);
  write_string(os, ckpt.meta.dump());
  write_u64(os, static_cast<std::uint64_t>(ckpt.params.size()));
  for (int h = 0; h < ckpt.params.size(); ++h) {
    const Mat& m = ckpt.params.value(h);
    write_string(os, ckpt.params.name(h));
    write_u64(os, static_cast<std::uint64_t>(m.rows()));
    write_u64(os, static_cast<std::uint64_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  if (read_u32(is) != kMagic) throw std::runtime_error("load_checkpoint: bad magic in " + path);
  std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version) + " in " + path);
  }
  Checkpoint ckpt;
  ckpt.kind = read_string(is);
  ckpt.meta = nlohmann::json::parse(read_string(is));
  std::uint64_t count = read_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = read_string(is);
    std::uint64_t rows = read_u64(is);
    std::uint64_t cols = read_u64(is);
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    ckpt.params.add(name, std::move(m));
  }
  if (!is) throw std::runtime_error("load_checkpoint: truncated file " + path);
  return ckpt;
}

}  // namespace minitts
