#include "flowvault/chunking.hpp"

#include <charconv>

namespace flowvault {

ChunkingConfig ChunkingConfig::cdc(uint32_t target) {
  ChunkingConfig c;
  c.mode = ChunkingMode::kCdc;
  c.target_size = target;
  c.min_size = target / 4;
  c.max_size = target * 4;
  c.window = 48;
  return c;
}

ChunkingConfig ChunkingConfig::fixed(uint32_t size) {
  ChunkingConfig c;
  c.mode = ChunkingMode::kFixed;
  c.target_size = c.min_size = c.max_size = size;
  c.window = 0;
  return c;
}

ChunkingConfig ChunkingConfig::none() {
  ChunkingConfig c;
  c.mode = ChunkingMode::kNone;
  c.target_size = c.min_size = c.max_size = 0;
  c.window = 0;
  return c;
}

ChunkingConfig ChunkingConfig::parse(const std::string& text) {
  if (text == "none") return none();
  auto colon = text.find(':');
  if (colon == std::string::npos)
    throw UsageError("chunking must be cdc:<size>, fixed:<size> or none, got '" + text + "'");
  std::string kind = text.substr(0, colon);
  uint32_t size = 0;
  const char* b = text.data() + colon + 1;
  const char* e = text.data() + text.size();
  auto [p, ec] = std::from_chars(b, e, size);
  if (ec != std::errc() || p != e || size == 0) throw UsageError("bad chunk size in '" + text + "'");
  ChunkingConfig c;
  if (kind == "cdc") {
    c = cdc(size);
  } else if (kind == "fixed") {
    c = fixed(size);
  } else {
    throw UsageError("unknown chunking mode '" + kind + "'");
  }
  c.validate();
  return c;
}

void ChunkingConfig::validate() const {
  switch (mode) {
    case ChunkingMode::kNone:
      return;
    case ChunkingMode::kFixed:
      if (target_size == 0) throw UsageError("fixed chunking needs a positive size");
      return;
    case ChunkingMode::kCdc:
      if (target_size < 2 || (target_size & (target_size - 1)))
        throw UsageError("CDC target size must be a power of two");
      if (!(min_size <= target_size && target_size <= max_size) || min_size == 0)
        throw UsageError("CDC requires 0 < min <= target <= max");
      if (window == 0) throw UsageError("CDC window must be positive");
      return;
  }
}

std::string ChunkingConfig::str() const {
  switch (mode) {
    case ChunkingMode::kCdc:
      return "cdc:" + std::to_string(target_size);
    case ChunkingMode::kFixed:
      return "fixed:" + std::to_string(target_size);
    case ChunkingMode::kNone:
      return "none";
  }
  return "?";
}

namespace {

constexpr uint64_t kMask63 = (uint64_t{1} << 63) - 1;

// Reduces a polynomial of degree < 128 modulo P (degree 63).
uint64_t polymod(unsigned __int128 v) {
  const unsigned __int128 p = RabinWindow::kPolynomial;
  for (int bit = 127; bit >= 63; --bit)
    if ((v >> bit) & 1) v ^= p << (bit - 63);
  return static_cast<uint64_t>(v);
}

std::array<uint64_t, 256> make_shift_table() {
  std::array<uint64_t, 256> t{};
  for (unsigned i = 0; i < 256; ++i) t[i] = polymod(static_cast<unsigned __int128>(i) << 63);
  return t;
}

}  // namespace

const std::array<uint64_t, 256>& RabinWindow::shift_table() {
  static const std::array<uint64_t, 256> table = make_shift_table();
  return table;
}

uint64_t RabinWindow::append(uint64_t fp, uint8_t b) {
  const uint64_t top = fp >> 55;
  return (((fp << 8) & kMask63) | b) ^ shift_table()[top];
}

RabinWindow::RabinWindow(uint32_t window) : window_(window), ring_(window, 0) {
  if (window == 0) throw UsageError("rabin window must be positive");
  for (unsigned o = 0; o < 256; ++o) {
    uint64_t g = o;
    for (uint32_t i = 1; i < window_; ++i) g = append(g, 0);
    remove_[o] = g;
  }
}

void RabinWindow::reset() {
  std::fill(ring_.begin(), ring_.end(), 0);
  pos_ = 0;
  fp_ = 0;
}

uint64_t RabinWindow::slide(uint8_t in) {
  fp_ ^= remove_[ring_[pos_]];
  ring_[pos_] = in;
  pos_ = pos_ + 1 == window_ ? 0 : pos_ + 1;
  fp_ = append(fp_, in);
  return fp_;
}

uint64_t RabinWindow::fingerprint(ByteView bytes) {
  unsigned __int128 acc = 0;
  uint64_t fp = 0;
  for (uint8_t b : bytes) {
    acc = (static_cast<unsigned __int128>(fp) << 8) | b;
    fp = polymod(acc);
  }
  return fp;
}

std::vector<ChunkSpan> chunk_stream(ByteView stream, const ChunkingConfig& config) {
  config.validate();
  std::vector<ChunkSpan> out;
  const size_t n = stream.size();
  if (n == 0) return out;
  switch (config.mode) {
    case ChunkingMode::kNone:
      out.push_back({0, n});
      return out;
    case ChunkingMode::kFixed:
      for (size_t off = 0; off < n; off += config.target_size)
        out.push_back({off, std::min<size_t>(config.target_size, n - off)});
      return out;
    case ChunkingMode::kCdc:
      break;
  }
  RabinWindow rw(config.window);
  const uint64_t mask = config.target_size - 1;
  size_t start = 0;
  for (size_t i = 0; i < n; ++i) {
    const uint64_t fp = rw.slide(stream[i]);
    const size_t len = i + 1 - start;
    const bool content_cut = len >= config.min_size && i + 1 >= config.window && (fp & mask) == mask;
    if (content_cut || len >= config.max_size) {
      out.push_back({start, len});
      start = i + 1;
    }
  }
  if (start < n) out.push_back({start, n - start});
  return out;
}

}  // namespace flowvault
