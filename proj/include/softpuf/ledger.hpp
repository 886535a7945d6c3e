#pragma once

// Proof-of-work chain of authenticated transactions.
//
// One transaction per block. A block's hash is SHA-512 over
//   index(8) | prev_hash(64) | payload(79) | difficulty(1) | timestamp(8) | nonce(8)
// with integers big-endian, and must start with `difficulty` zero bits.
//
// Chain file, one block per line:
//   index,prev_hash_hex,payload_hex,nonce,difficulty,timestamp,block_hash_hex

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "softpuf/error.hpp"
#include "softpuf/hex.hpp"
#include "softpuf/registry.hpp"
#include "softpuf/sha512.hpp"
#include "softpuf/wire.hpp"

namespace softpuf::ledger {

using Hash = Sha512::Digest;
using Payload = std::array<std::uint8_t, wire::kTransactionPayload>;

inline constexpr unsigned kMaxDifficulty = 32;

struct Block {
  std::uint64_t index = 0;
  Hash prev_hash{};
  Payload payload{};
  std::uint64_t nonce = 0;
  unsigned difficulty = 0;
  std::uint64_t timestamp = 0;
  Hash block_hash{};

  friend bool operator==(const Block&, const Block&) = default;
};

inline unsigned leading_zero_bits(std::span<const std::uint8_t> digest) {
  unsigned n = 0;
  for (std::uint8_t b : digest) {
    if (b != 0) return n + static_cast<unsigned>(std::countl_zero(b));
    n += 8;
  }
  return n;
}

inline bool meets_difficulty(const Hash& h, unsigned difficulty) { return leading_zero_bits(h) >= difficulty; }

namespace detail {

inline constexpr std::size_t kHeaderBytes = 8 + 64 + wire::kTransactionPayload + 1 + 8 + 8;
inline constexpr std::size_t kNonceOffset = kHeaderBytes - 8;

inline void put_u64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i, v >>= 8) out[i] = static_cast<std::uint8_t>(v & 0xff);
}

inline std::array<std::uint8_t, kHeaderBytes> header_bytes(const Block& b) {
  std::array<std::uint8_t, kHeaderBytes> h{};
  std::uint8_t* p = h.data();
  put_u64(p, b.index);
  p += 8;
  p = std::copy(b.prev_hash.begin(), b.prev_hash.end(), p);
  p = std::copy(b.payload.begin(), b.payload.end(), p);
  *p++ = static_cast<std::uint8_t>(b.difficulty);
  put_u64(p, b.timestamp);
  put_u64(p + 8, b.nonce);
  return h;
}

}  // namespace detail

inline Hash compute_hash(const Block& b) { return sha512(detail::header_bytes(b)); }

inline Block genesis_block() {
  Block g;
  g.block_hash = compute_hash(g);
  return g;
}

enum class AppendReason { ok, bad_index, broken_link, difficulty, hash_mismatch };

inline std::string_view to_string(AppendReason r) {
  switch (r) {
    case AppendReason::ok: return "ok";
    case AppendReason::bad_index: return "bad-index";
    case AppendReason::broken_link: return "broken-link";
    case AppendReason::difficulty: return "difficulty";
    case AppendReason::hash_mismatch: return "hash-mismatch";
  }
  return "unknown";
}

class Chain {
 public:
  Chain() : blocks_{genesis_block()} {}
  explicit Chain(const Block& genesis) : blocks_{genesis} {}

  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& tip() const { return blocks_.back(); }
  std::size_t size() const { return blocks_.size(); }

  // The minimum difficulty the next block must meet. Never decreases.
  unsigned current_difficulty() const { return std::max(floor_, tip().difficulty); }

  void raise_difficulty(unsigned d) {
    require(d <= kMaxDifficulty, "difficulty above 32");
    floor_ = std::max(floor_, d);
  }

  // Validation without mutation.
  AppendReason check(const Block& b) const {
    if (b.index != tip().index + 1) return AppendReason::bad_index;
    if (b.prev_hash != tip().block_hash) return AppendReason::broken_link;
    if (b.difficulty < current_difficulty() || b.difficulty > kMaxDifficulty) return AppendReason::difficulty;
    if (compute_hash(b) != b.block_hash) return AppendReason::hash_mismatch;
    if (!meets_difficulty(b.block_hash, b.difficulty)) return AppendReason::difficulty;
    return AppendReason::ok;
  }

  AppendReason append(const Block& b) {
    const AppendReason r = check(b);
    if (r == AppendReason::ok) blocks_.push_back(b);
    return r;
  }

  friend bool operator==(const Chain& a, const Chain& b) { return a.blocks_ == b.blocks_; }

 private:
  std::vector<Block> blocks_;
  unsigned floor_ = 0;
};

// Smallest nonce >= nonce_start whose hash meets `difficulty`.
inline Block mine_block(const Chain& chain, const Payload& payload, unsigned difficulty, std::uint64_t nonce_start,
                        std::uint64_t timestamp = 0) {
  require(difficulty <= kMaxDifficulty, "difficulty must be at most 32");
  Block b;
  b.index = chain.tip().index + 1;
  b.prev_hash = chain.tip().block_hash;
  b.payload = payload;
  b.difficulty = difficulty;
  b.timestamp = timestamp;
  auto header = detail::header_bytes(b);
  for (std::uint64_t nonce = nonce_start;; ++nonce) {
    detail::put_u64(header.data() + detail::kNonceOffset, nonce);
    const Hash h = sha512(header);
    if (meets_difficulty(h, difficulty)) {
      b.nonce = nonce;
      b.block_hash = h;
      return b;
    }
    if (nonce == UINT64_MAX) fail(ErrorCode::mining_failed, "nonce space exhausted");
  }
}

inline Payload make_payload(const wire::Frame& frame, const wire::Digest& digest) {
  Payload p{};
  std::copy(frame.begin(), frame.end(), p.begin());
  std::copy(digest.begin(), digest.end(), p.begin() + wire::kFrameSize);
  return p;
}

// ---------------------------------------------------------------------------
// Authentication of an incoming transaction

enum class RejectReason { none, integrity, malformed_frame, unknown_device, key_mismatch };

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::none: return "none";
    case RejectReason::integrity: return "integrity";
    case RejectReason::malformed_frame: return "malformed-frame";
    case RejectReason::unknown_device: return "unknown-device";
    case RejectReason::key_mismatch: return "key-mismatch";
  }
  return "unknown";
}

struct Verdict {
  RejectReason reason = RejectReason::none;
  std::optional<registry::TrustedIdentity> identity;

  bool accepted() const { return reason == RejectReason::none; }
};

// The frame carries key_len and the first min(key_len, 64) key bits, left
// aligned; both must agree with the stored key and unused bits must be zero.
inline bool key_matches(const wire::TransactionMessage& msg, const model::DeviceKey& stored) {
  if (msg.key_len != stored.length()) return false;
  const std::size_t n = std::min<std::size_t>(stored.length(), wire::kKeyFieldBits);
  for (std::size_t i = 0; i < wire::kKeyFieldBits; ++i) {
    const bool expected = i < n && stored.bits[i];
    if ((((msg.key >> (63 - i)) & 1U) != 0) != expected) return false;
  }
  return true;
}

// Checks, in order: digest recomputes, frame decodes, device is enrolled,
// key matches. The first failing check is the reject reason.
inline Verdict authenticate(const registry::Registry& reg, std::span<const std::uint8_t> frame,
                            const wire::Digest& digest) {
  if (wire::hash_message(frame) != digest) return {RejectReason::integrity, std::nullopt};
  wire::TransactionMessage msg;
  try {
    msg = wire::decode(frame);
  } catch (const Error&) {
    return {RejectReason::malformed_frame, std::nullopt};
  }
  auto id = reg.lookup(msg.mac);
  if (!id) return {RejectReason::unknown_device, std::nullopt};
  if (!key_matches(msg, id->key)) return {RejectReason::key_mismatch, std::nullopt};
  return {RejectReason::none, std::move(id)};
}

// ---------------------------------------------------------------------------
// Persistence

inline std::string format_block(const Block& b) {
  return std::to_string(b.index) + ',' + hex::encode(b.prev_hash) + ',' + hex::encode(b.payload) + ',' +
         std::to_string(b.nonce) + ',' + std::to_string(b.difficulty) + ',' + std::to_string(b.timestamp) + ',' +
         hex::encode(b.block_hash);
}

namespace detail {

// Canonical unsigned decimal only (no sign, no leading zeros), so that every
// byte of the record matters.
inline std::optional<std::uint64_t> parse_canonical_u64(std::string_view s) {
  if (s.empty() || (s.size() > 1 && s[0] == '0')) return std::nullopt;
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

template <std::size_t N>
inline bool parse_fixed_hex(std::string_view s, std::array<std::uint8_t, N>& out) {
  auto bytes = hex::decode(s);
  if (!bytes || bytes->size() != N) return false;
  std::copy(bytes->begin(), bytes->end(), out.begin());
  return true;
}

}  // namespace detail

inline Block parse_block(std::string_view line, std::size_t position) {
  std::vector<std::string_view> f;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i)
    if (i == line.size() || line[i] == ',') {
      f.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  if (f.size() != 7) throw IntegrityError(position, "record has " + std::to_string(f.size()) + " fields, expected 7");
  Block b;
  auto index = detail::parse_canonical_u64(f[0]);
  auto nonce = detail::parse_canonical_u64(f[3]);
  auto difficulty = detail::parse_canonical_u64(f[4]);
  auto timestamp = detail::parse_canonical_u64(f[5]);
  if (!index || !nonce || !difficulty || !timestamp) throw IntegrityError(position, "malformed numeric field");
  if (!detail::parse_fixed_hex(f[1], b.prev_hash) || !detail::parse_fixed_hex(f[2], b.payload) ||
      !detail::parse_fixed_hex(f[6], b.block_hash))
    throw IntegrityError(position, "malformed hex field");
  if (*difficulty > kMaxDifficulty) throw IntegrityError(position, "difficulty above 32");
  b.index = *index;
  b.nonce = *nonce;
  b.difficulty = static_cast<unsigned>(*difficulty);
  b.timestamp = *timestamp;
  return b;
}

inline void save_chain(const Chain& chain, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot write " + tmp.string());
    for (const auto& b : chain.blocks()) out << format_block(b) << '\n';
    if (!out.flush()) fail(ErrorCode::io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Re-verifies the whole chain; the first bad record raises IntegrityError
// naming its position.
inline Chain load_chain(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  std::string line;
  std::size_t position = 0;
  Chain chain;
  bool have_genesis = false;
  while (std::getline(in, line)) {
    const Block b = parse_block(line, position);
    if (position == 0) {
      if (b.index != 0) throw IntegrityError(0, "genesis index must be 0");
      if (b.prev_hash != Hash{}) throw IntegrityError(0, "genesis prev_hash must be zero");
      if (compute_hash(b) != b.block_hash || !meets_difficulty(b.block_hash, b.difficulty))
        throw IntegrityError(0, "genesis hash does not verify");
      chain = Chain(b);
      have_genesis = true;
    } else {
      const AppendReason r = chain.append(b);
      if (r != AppendReason::ok) throw IntegrityError(position, std::string(to_string(r)));
    }
    ++position;
  }
  if (!have_genesis) throw IntegrityError(0, "missing genesis block");
  return chain;
}

}  // namespace softpuf::ledger
