#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "doctest.h"
#include "fdfo/rng.hpp"

using namespace fdfo;

TEST_CASE("philox4x32-10 matches the published test vectors") {
  uint32_t out[4];

  const uint32_t zeros_ctr[4] = {0, 0, 0, 0};
  const uint32_t zeros_key[2] = {0, 0};
  philox4x32(zeros_ctr, zeros_key, out);
  CHECK(out[0] == 0x6627e8d5u);
  CHECK(out[1] == 0xe169c58du);
  CHECK(out[2] == 0xbc57ac4cu);
  CHECK(out[3] == 0x9b00dbd8u);

  const uint32_t ff_ctr[4] = {0xffffffffu, 0xffffffffu, 0xffffffffu,
                              0xffffffffu};
  const uint32_t ff_key[2] = {0xffffffffu, 0xffffffffu};
  philox4x32(ff_ctr, ff_key, out);
  CHECK(out[0] == 0x408f276du);
  CHECK(out[1] == 0x41c83b0eu);
  CHECK(out[2] == 0xa20bc7c6u);
  CHECK(out[3] == 0x6d5451fdu);

  // counter/key drawn from the hex digits of pi
  const uint32_t pi_ctr[4] = {0x243f6a88u, 0x85a308d3u, 0x13198a2eu,
                              0x03707344u};
  const uint32_t pi_key[2] = {0xa4093822u, 0x299f31d0u};
  philox4x32(pi_ctr, pi_key, out);
  CHECK(out[0] == 0xd16cfe09u);
  CHECK(out[1] == 0x94fdccebu);
  CHECK(out[2] == 0x5001e420u);
  CHECK(out[3] == 0x24126ea1u);
}

TEST_CASE("stream ids pack kind/a/b without collisions") {
  std::set<uint64_t> seen;
  for (uint64_t a = 0; a < 7; ++a) {
    for (uint64_t b = 0; b < 7; ++b) {
      seen.insert(stream_id(StreamKind::pair, a, b));
      seen.insert(stream_id(StreamKind::pair_hat, a, b));
    }
  }
  CHECK(seen.size() == 2 * 7 * 7);
  // purpose occupies the top byte
  CHECK((stream_id(StreamKind::mc, 0, 0) >> 56) == 8);
  CHECK((stream_id(StreamKind::eval, 1, 2) & 0xfffffffull) == 2);
}

TEST_CASE("identical (seed, stream) reproduces; different streams differ") {
  Rng a(42, stream_id(StreamKind::pair, 3, 4));
  Rng b(42, stream_id(StreamKind::pair, 3, 4));
  Rng c(42, stream_id(StreamKind::pair, 3, 5));
  Rng d(43, stream_id(StreamKind::pair, 3, 4));
  bool same = true, c_differs = false, d_differs = false;
  for (int i = 0; i < 64; ++i) {
    uint64_t va = a.next_u64();
    same = same && (va == b.next_u64());
    c_differs = c_differs || (va != c.next_u64());
    d_differs = d_differs || (va != d.next_u64());
  }
  CHECK(same);
  CHECK(c_differs);
  CHECK(d_differs);
}

TEST_CASE("uniform lies in (0,1] and never returns zero") {
  Rng r(7, stream_id(StreamKind::mc, 0, 0));
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 200000; ++i) {
    double u = r.uniform();
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);   // actually explores the low end
  CHECK(hi > 0.99);   // and the high end
}

TEST_CASE("gaussian moments match a standard normal") {
  Rng r(11, stream_id(StreamKind::mc, 1, 0));
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    double g = r.gaussian();
    s1 += g;
    s2 += g * g;
    s4 += g * g * g * g;
  }
  double mean = s1 / n, var = s2 / n, kurt = s4 / n;
  // z-score bounds: std errs are sqrt(1/n), sqrt(2/n), sqrt(96/n)
  CHECK(std::abs(mean) < 4.0 * std::sqrt(1.0 / n));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(kurt - 3.0) < 4.0 * std::sqrt(96.0 / n));
}

TEST_CASE("distinct streams are statistically independent") {
  // correlation between paired draws of adjacent streams
  double sxy = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
  const int n = 100000;
  Rng a(5, stream_id(StreamKind::pair, 0, 0));
  Rng b(5, stream_id(StreamKind::pair, 0, 1));
  for (int i = 0; i < n; ++i) {
    double x = a.gaussian(), y = b.gaussian();
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  double cov = sxy / n - (sx / n) * (sy / n);
  double corr = cov / std::sqrt((sxx / n - sx / n * (sx / n)) *
                                (syy / n - sy / n * (sy / n)));
  CHECK(std::abs(corr) < 4.0 / std::sqrt(static_cast<double>(n)));
}
