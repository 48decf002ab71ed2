#pragma once
// Counter-based RNG (Philox4x32-10) with purpose-tagged streams.
//
// Every random draw in the project is a pure function of (seed, stream,
// position), so parallel workers get reproducible, non-overlapping streams
// regardless of scheduling, and runs are byte-identical across thread counts.

#include <cmath>
#include <cstdint>

namespace fdfo {

// One Philox4x32-10 block: 4 output words from a 4-word counter and 2-word key.
inline void philox4x32(const uint32_t ctr[4], const uint32_t key[2],
                       uint32_t out[4]) {
  constexpr uint32_t kMul0 = 0xD2511F53u, kMul1 = 0xCD9E8D57u;
  constexpr uint32_t kWeyl0 = 0x9E3779B9u, kWeyl1 = 0xBB67AE85u;
  uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
  uint32_t k0 = key[0], k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    uint64_t p0 = static_cast<uint64_t>(kMul0) * c0;
    uint64_t p1 = static_cast<uint64_t>(kMul1) * c2;
    uint32_t h0 = static_cast<uint32_t>(p0 >> 32), l0 = static_cast<uint32_t>(p0);
    uint32_t h1 = static_cast<uint32_t>(p1 >> 32), l1 = static_cast<uint32_t>(p1);
    uint32_t n0 = h1 ^ c1 ^ k0, n1 = l1, n2 = h0 ^ c3 ^ k1, n3 = l0;
    c0 = n0;
    c1 = n1;
    c2 = n2;
    c3 = n3;
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  out[0] = c0;
  out[1] = c1;
  out[2] = c2;
  out[3] = c3;
}

// Stream purposes. Streams are (purpose, a, b) triples packed into 64 bits:
// purpose<<56 | a<<28 | b. Callers keep a < 2^28 and b < 2^28.
enum class StreamKind : uint64_t {
  init = 1,        // parameter initialization
  pretrain = 2,    // pre-training batches (a = step)
  pair = 3,        // rollout pairs (a = epoch, b = pair index; member noise)
  pair_hat = 4,    // second pair member
  schedule = 5,    // per-pair/group schedule draws
  shuffle = 6,     // sample shuffling (a = epoch)
  group = 7,       // baseline groups (a = epoch, b = group*G + member)
  mc = 8,          // verification Monte-Carlo blocks
  eval = 9,        // evaluation rollouts (never reused for training)
  diversity = 10,  // diversity-statistic noise
};

constexpr uint64_t stream_id(StreamKind k, uint64_t a = 0, uint64_t b = 0) {
  return (static_cast<uint64_t>(k) << 56) | ((a & 0xfffffffull) << 28) |
         (b & 0xfffffffull);
}

// Stateful view over one stream. uniform() is in (0,1]; gaussian() is
// standard normal via Box-Muller (pairs cached).
class Rng {
 public:
  Rng(uint64_t seed, uint64_t stream)
      : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
        stream_(stream) {}

  uint64_t next_u64() {
    if (sub_ == 0) refill();
    uint64_t hi = buf_[sub_], lo = buf_[sub_ + 1];
    sub_ = (sub_ + 2) & 3;
    return (hi << 32) | lo;
  }

  // (0,1]: 53-bit mantissa, never returns 0 so log() is safe.
  double uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1p-53;
  }

  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform(), u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

 private:
  void refill() {
    uint32_t ctr[4] = {static_cast<uint32_t>(block_),
                       static_cast<uint32_t>(block_ >> 32),
                       static_cast<uint32_t>(stream_),
                       static_cast<uint32_t>(stream_ >> 32)};
    philox4x32(ctr, key_, buf_);
    ++block_;
  }

  uint32_t key_[2];
  uint64_t stream_;
  uint64_t block_ = 0;
  uint32_t buf_[4] = {0, 0, 0, 0};
  int sub_ = 0;  // next unread word pair in buf_ (0 or 2; 0 means refill)
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace fdfo
