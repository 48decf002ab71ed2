#include "fdfo/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace fdfo {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

constexpr char kMagic[4] = {'F', 'D', 'F', 'O'};
constexpr uint32_t kVersion = 1;

struct Writer {
  FILE* f;
  const std::string& path;
  void bytes(const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n) {
      throw std::runtime_error("checkpoint write failed: " + path);
    }
  }
  void u32(uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void f64(double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    u64(bits);
  }
  void vec(const Vec& v) {
    for (double d : v) f64(d);
  }
};

struct Reader {
  FILE* f;
  const std::string& path;
  void bytes(void* p, size_t n) {
    if (std::fread(p, 1, n, f) != n) {
      throw std::runtime_error("checkpoint truncated or unreadable: " + path);
    }
  }
  uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  void vec(Vec& v, size_t n) {
    v.resize(n);
    for (size_t i = 0; i < n; ++i) v[i] = f64();
  }
};

struct FileCloser {
  FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  FileCloser closer{f};
  Writer w{f, path};
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(ck.net.d));
  w.u32(static_cast<uint32_t>(ck.net.C));
  w.u32(static_cast<uint32_t>(ck.net.hidden));
  w.u32(static_cast<uint32_t>(ck.net.layers));
  w.u32(static_cast<uint32_t>(ck.net.embed));
  w.u64(ck.net.theta.size());
  w.vec(ck.net.theta);
  unsigned char has_opt = ck.has_opt ? 1 : 0;
  w.bytes(&has_opt, 1);
  if (ck.has_opt) {
    if (ck.opt.m.size() != ck.net.theta.size() ||
        ck.opt.v.size() != ck.net.theta.size()) {
      throw std::runtime_error("checkpoint: optimizer state shape mismatch");
    }
    w.vec(ck.opt.m);
    w.vec(ck.opt.v);
    w.u64(static_cast<uint64_t>(ck.opt.step));
  }
  w.u64(ck.config_hash);
  w.u32(static_cast<uint32_t>(ck.epoch));
  if (std::fflush(f) != 0) {
    throw std::runtime_error("checkpoint flush failed: " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  FileCloser closer{f};
  Reader r{f, path};
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  }
  uint32_t version = r.u32();
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version) + ": " + path);
  }
  Checkpoint ck;
  ck.net.d = static_cast<int>(r.u32());
  ck.net.C = static_cast<int>(r.u32());
  ck.net.hidden = static_cast<int>(r.u32());
  ck.net.layers = static_cast<int>(r.u32());
  ck.net.embed = static_cast<int>(r.u32());
  uint64_t n = r.u64();
  if (n != static_cast<uint64_t>(ck.net.n_params())) {
    throw std::runtime_error("checkpoint parameter count mismatch: " + path);
  }
  r.vec(ck.net.theta, n);
  unsigned char has_opt = 0;
  r.bytes(&has_opt, 1);
  ck.has_opt = has_opt != 0;
  if (ck.has_opt) {
    r.vec(ck.opt.m, n);
    r.vec(ck.opt.v, n);
    ck.opt.step = r.u64();
  }
  ck.config_hash = r.u64();
  ck.epoch = static_cast<int>(r.u32());
  return ck;
}

}  // namespace fdfo
