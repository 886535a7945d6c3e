#pragma once

// Transaction framing and the client/miner datagram protocol.
//
// Frame (15 bytes, MSB first):
//   mac[48] | key[64] | key_len[7] | pad[1] = 0       -> 119 bits + 1 pad
//
// Datagram:
//   "SPUF" | version (0x01) | type | payload
//   TRANSACTION payload = frame (15) + SHA-512(frame) (64)
//   ACK / REJECT payload = the 64-byte digest being answered

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "softpuf/error.hpp"
#include "softpuf/model.hpp"
#include "softpuf/registry.hpp"
#include "softpuf/sha512.hpp"

namespace softpuf::wire {

using registry::MacAddress;

inline constexpr std::size_t kFrameBits = 119;
inline constexpr std::size_t kFrameSize = 15;
inline constexpr std::size_t kDigestSize = Sha512::kDigestSize;
inline constexpr std::size_t kKeyFieldBits = 64;
inline constexpr std::uint8_t kMaxKeyLen = 127;

using Frame = std::array<std::uint8_t, kFrameSize>;
using Digest = Sha512::Digest;

struct TransactionMessage {
  MacAddress mac;
  std::uint64_t key = 0;     // key bits left-aligned: key bit 0 is bit 63
  std::uint8_t key_len = 0;  // 1..127

  friend bool operator==(const TransactionMessage&, const TransactionMessage&) = default;
};

// The key field carries the first min(len, 64) key bits.
inline TransactionMessage make_message(const MacAddress& mac, const model::DeviceKey& key) {
  require(key.length() >= 1 && key.length() <= kMaxKeyLen, "key length must be in [1, 127]");
  TransactionMessage msg{mac, 0, static_cast<std::uint8_t>(key.length())};
  for (std::size_t i = 0; i < std::min<std::size_t>(key.length(), kKeyFieldBits); ++i)
    if (key.bits[i]) msg.key |= std::uint64_t{1} << (63 - i);
  return msg;
}

namespace detail {

class BitWriter {
 public:
  explicit BitWriter(std::span<std::uint8_t> out) : out_(out) { std::fill(out_.begin(), out_.end(), 0); }
  void put(std::uint64_t value, std::size_t width) {
    for (std::size_t i = width; i-- > 0; ++pos_)
      if ((value >> i) & 1U) out_[pos_ / 8] |= static_cast<std::uint8_t>(0x80U >> (pos_ % 8));
  }

 private:
  std::span<std::uint8_t> out_;
  std::size_t pos_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint64_t get(std::size_t width) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i, ++pos_) v = (v << 1) | ((in_[pos_ / 8] >> (7 - pos_ % 8)) & 1U);
    return v;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Frame encode(const TransactionMessage& msg) {
  require(msg.key_len >= 1 && msg.key_len <= kMaxKeyLen, "key_len must be in [1, 127]");
  Frame f{};
  detail::BitWriter w(f);
  w.put(msg.mac.value(), 48);
  w.put(msg.key, 64);
  w.put(msg.key_len, 7);
  w.put(0, 1);
  return f;
}

inline TransactionMessage decode(std::span<const std::uint8_t> frame) {
  if (frame.size() != kFrameSize) fail(ErrorCode::malformed_frame, "frame must be 15 bytes, got " + std::to_string(frame.size()));
  detail::BitReader r(frame);
  TransactionMessage msg;
  msg.mac = MacAddress::from_value(r.get(48));
  msg.key = r.get(64);
  msg.key_len = static_cast<std::uint8_t>(r.get(7));
  if (r.get(1) != 0) fail(ErrorCode::malformed_frame, "pad bit is set");
  if (msg.key_len == 0) fail(ErrorCode::malformed_frame, "key_len is zero");
  return msg;
}

inline Digest hash_message(std::span<const std::uint8_t> frame) { return sha512(frame); }

// ---------------------------------------------------------------------------
// Datagrams

inline constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'P', 'U', 'F'};
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 6;
inline constexpr std::size_t kTransactionPayload = kFrameSize + kDigestSize;
inline constexpr std::size_t kMaxDatagram = kHeaderSize + kTransactionPayload;
inline constexpr std::uint16_t kDefaultMinerPort = 45454;

enum class MsgType : std::uint8_t { transaction = 0x01, ack = 0x02, reject = 0x03 };

struct Datagram {
  MsgType type = MsgType::transaction;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const Datagram&, const Datagram&) = default;
};

inline std::size_t payload_size(MsgType type) {
  return type == MsgType::transaction ? kTransactionPayload : kDigestSize;
}

inline std::vector<std::uint8_t> make_datagram(MsgType type, std::span<const std::uint8_t> payload) {
  if (type != MsgType::transaction && type != MsgType::ack && type != MsgType::reject)
    fail(ErrorCode::malformed_datagram, "unknown message type");
  if (payload.size() != payload_size(type))
    fail(ErrorCode::malformed_datagram, "payload length " + std::to_string(payload.size()) + " does not match type");
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(type));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline Datagram parse_datagram(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) fail(ErrorCode::malformed_datagram, "datagram shorter than header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) fail(ErrorCode::malformed_datagram, "bad magic");
  if (bytes[4] != kVersion) fail(ErrorCode::malformed_datagram, "unsupported version " + std::to_string(bytes[4]));
  const std::uint8_t t = bytes[5];
  if (t < 0x01 || t > 0x03) fail(ErrorCode::malformed_datagram, "unknown message type " + std::to_string(t));
  Datagram d{static_cast<MsgType>(t), {bytes.begin() + kHeaderSize, bytes.end()}};
  if (d.payload.size() != payload_size(d.type))
    fail(ErrorCode::malformed_datagram, "payload length " + std::to_string(d.payload.size()) + " does not match type");
  return d;
}

inline std::vector<std::uint8_t> transaction_payload(const Frame& frame, const Digest& digest) {
  std::vector<std::uint8_t> p(frame.begin(), frame.end());
  p.insert(p.end(), digest.begin(), digest.end());
  return p;
}

struct TransactionParts {
  Frame frame{};
  Digest digest{};
};

inline TransactionParts split_transaction(std::span<const std::uint8_t> payload) {
  if (payload.size() != kTransactionPayload) fail(ErrorCode::malformed_datagram, "transaction payload must be 79 bytes");
  TransactionParts parts;
  std::copy_n(payload.begin(), kFrameSize, parts.frame.begin());
  std::copy_n(payload.begin() + kFrameSize, kDigestSize, parts.digest.begin());
  return parts;
}

}  // namespace softpuf::wire
