#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flowvault/bytes.hpp"

namespace flowvault {

enum class ChunkingMode : uint8_t { kCdc = 0, kFixed = 1, kNone = 2 };

struct ChunkingConfig {
  ChunkingMode mode = ChunkingMode::kCdc;
  uint32_t target_size = 4096;
  uint32_t min_size = 1024;
  uint32_t max_size = 16384;
  uint32_t window = 48;

  // CDC with min = target/4, max = 4*target, 48-byte window.
  static ChunkingConfig cdc(uint32_t target);
  static ChunkingConfig fixed(uint32_t size);
  static ChunkingConfig none();
  // "cdc:4096", "fixed:1024", "none".
  static ChunkingConfig parse(const std::string& text);

  void validate() const;
  std::string str() const;
  friend bool operator==(const ChunkingConfig&, const ChunkingConfig&) = default;
};

// Rabin fingerprint over GF(2) modulo a fixed degree-63 irreducible
// polynomial, maintained over a sliding window of bytes.
class RabinWindow {
 public:
  static constexpr uint64_t kPolynomial = 0xbfe6b8a5bf378d83ULL;

  explicit RabinWindow(uint32_t window);

  uint64_t slide(uint8_t in);
  uint64_t value() const { return fp_; }
  void reset();

  // Fingerprint of a whole byte string, computed without a window. Used by
  // tests as an independent route to the windowed value.
  static uint64_t fingerprint(ByteView bytes);

 private:
  static uint64_t append(uint64_t fp, uint8_t b);
  static const std::array<uint64_t, 256>& shift_table();

  uint32_t window_;
  std::array<uint64_t, 256> remove_{};
  std::vector<uint8_t> ring_;
  size_t pos_ = 0;
  uint64_t fp_ = 0;
};

struct ChunkSpan {
  size_t offset = 0;
  size_t len = 0;
  friend bool operator==(const ChunkSpan&, const ChunkSpan&) = default;
};

// Splits `stream` into chunks that tile it exactly. Empty stream -> empty list.
std::vector<ChunkSpan> chunk_stream(ByteView stream, const ChunkingConfig& config);

}  // namespace flowvault
