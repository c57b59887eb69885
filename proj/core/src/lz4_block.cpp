#include "pcpipe/lz4_block.hpp"

#include <cstring>

#include "pcpipe/errors.hpp"

namespace pcpipe::lz4 {

namespace {

constexpr std::size_t kMinMatch = 4;
// The last 5 bytes are always literals; a match may not start within the
// last 12 bytes of input. Standard block-format end conditions.
constexpr std::size_t kLastLiterals = 5;
constexpr std::size_t kMfLimit = 12;
constexpr std::size_t kMaxOffset = 65535;
constexpr unsigned kHashLog = 16;

inline std::uint32_t read32(const std::uint8_t* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

inline std::uint32_t hash32(std::uint32_t v) {
  return (v * 2654435761u) >> (32 - kHashLog);
}

}  // namespace

std::size_t max_compressed_size(std::size_t n) { return n + n / 255 + 16; }

std::size_t compress(const std::uint8_t* src, std::size_t n, std::uint8_t* dst,
                     std::size_t dst_capacity) {
  std::size_t op = 0;

  auto put = [&](std::uint8_t b) -> bool {
    if (op >= dst_capacity) return false;
    dst[op++] = b;
    return true;
  };
  auto put_len_ext = [&](std::size_t len) -> bool {
    while (len >= 255) {
      if (!put(255)) return false;
      len -= 255;
    }
    return put(static_cast<std::uint8_t>(len));
  };
  auto emit = [&](std::size_t anchor, std::size_t ip, std::size_t match_len,
                  std::size_t offset) -> bool {
    const std::size_t lit = ip - anchor;
    const std::size_t ml = match_len == 0 ? 0 : match_len - kMinMatch;
    const std::uint8_t token =
        static_cast<std::uint8_t>((lit >= 15 ? 15u : lit) << 4 |
                                  (match_len == 0 ? 0u : (ml >= 15 ? 15u : ml)));
    if (!put(token)) return false;
    if (lit >= 15 && !put_len_ext(lit - 15)) return false;
    if (op + lit > dst_capacity) return false;
    std::memcpy(dst + op, src + anchor, lit);
    op += lit;
    if (match_len != 0) {
      if (!put(static_cast<std::uint8_t>(offset & 0xff))) return false;
      if (!put(static_cast<std::uint8_t>(offset >> 8))) return false;
      if (ml >= 15 && !put_len_ext(ml - 15)) return false;
    }
    return true;
  };

  if (n == 0) return put(0) ? op : 0;

  std::size_t ip = 0;
  std::size_t anchor = 0;

  if (n > kMfLimit) {
    std::vector<std::uint32_t> table(std::size_t{1} << kHashLog, UINT32_MAX);
    const std::size_t match_limit = n - kMfLimit;
    const std::size_t end_limit = n - kLastLiterals;
    while (ip < match_limit) {
      const std::uint32_t seq = read32(src + ip);
      const std::uint32_t h = hash32(seq);
      const std::uint32_t cand = table[h];
      table[h] = static_cast<std::uint32_t>(ip);
      if (cand != UINT32_MAX && ip - cand <= kMaxOffset &&
          read32(src + cand) == seq) {
        std::size_t m = ip + kMinMatch;
        std::size_t r = cand + kMinMatch;
        while (m < end_limit && src[m] == src[r]) {
          ++m;
          ++r;
        }
        if (!emit(anchor, ip, m - ip, ip - cand)) return 0;
        ip = m;
        anchor = ip;
      } else {
        ++ip;
      }
    }
  }

  // trailing literals
  if (!emit(anchor, n, 0, 0)) return 0;
  return op;
}

std::vector<std::uint8_t> compress(std::span<const std::uint8_t> src) {
  std::vector<std::uint8_t> out(max_compressed_size(src.size()));
  const std::size_t k = compress(src.data(), src.size(), out.data(), out.size());
  if (k == 0) fail(Errc::kCorruptPage, "lz4 compress buffer overflow");
  out.resize(k);
  return out;
}

void decompress(const std::uint8_t* src, std::size_t n, std::uint8_t* dst,
                std::size_t raw_len) {
  std::size_t ip = 0;
  std::size_t op = 0;

  auto corrupt = [](const char* what) { fail(Errc::kCorruptPage, what); };

  auto read_len_ext = [&](std::size_t base) -> std::size_t {
    std::size_t len = base;
    if (base == 15) {
      std::uint8_t b;
      do {
        if (ip >= n) corrupt("truncated length");
        b = src[ip++];
        len += b;
      } while (b == 255);
    }
    return len;
  };

  while (true) {
    if (ip >= n) corrupt("truncated stream");
    const std::uint8_t token = src[ip++];
    const std::size_t lit = read_len_ext(token >> 4);
    if (ip + lit > n || op + lit > raw_len) corrupt("literal overrun");
    std::memcpy(dst + op, src + ip, lit);
    ip += lit;
    op += lit;
    if (ip == n) {
      if (op != raw_len) corrupt("size mismatch");
      return;
    }
    if (ip + 2 > n) corrupt("truncated offset");
    const std::size_t offset = src[ip] | (std::size_t{src[ip + 1]} << 8);
    ip += 2;
    if (offset == 0 || offset > op) corrupt("bad offset");
    const std::size_t match_len = kMinMatch + read_len_ext(token & 0x0f);
    if (op + match_len > raw_len) corrupt("match overrun");
    // byte-wise copy: offsets shorter than the match length overlap
    const std::uint8_t* ref = dst + op - offset;
    for (std::size_t i = 0; i < match_len; ++i) dst[op + i] = ref[i];
    op += match_len;
  }
}

std::vector<std::uint8_t> decompress(std::span<const std::uint8_t> src,
                                     std::size_t raw_len) {
  std::vector<std::uint8_t> out(raw_len);
  decompress(src.data(), src.size(), out.data(), raw_len);
  return out;
}

}  // namespace pcpipe::lz4
