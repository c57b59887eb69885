#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pcpipe::lz4 {

// Worst-case output size for an incompressible input of n bytes.
std::size_t max_compressed_size(std::size_t n);

// Compresses src into dst (LZ4 block format). Returns the compressed size,
// or 0 if dst is too small.
std::size_t compress(const std::uint8_t* src, std::size_t n, std::uint8_t* dst,
                     std::size_t dst_capacity);

std::vector<std::uint8_t> compress(std::span<const std::uint8_t> src);

// Decompresses an LZ4 block that must expand to exactly raw_len bytes.
// Throws PcError(kCorruptPage) on any malformed or truncated stream.
void decompress(const std::uint8_t* src, std::size_t n, std::uint8_t* dst,
                std::size_t raw_len);

std::vector<std::uint8_t> decompress(std::span<const std::uint8_t> src,
                                     std::size_t raw_len);

}  // namespace pcpipe::lz4
