#pragma once

// Enrollment store for trusted devices.
//
// A key is generated by the model (K_n), persisted here (Kd_n) and embedded
// in the deployed device (T_n); all three are the same bit string, so the
// store holds one DeviceKey per identity. Revoked identities stay in the
// file as history but never answer lookups.
//
// File format, one record per line:
//   mac,key_hex,key_len,enrolled_at,status

#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "softpuf/error.hpp"
#include "softpuf/hex.hpp"
#include "softpuf/model.hpp"

namespace softpuf::registry {

using model::DeviceKey;

struct MacAddress {
  std::array<std::uint8_t, 6> octets{};

  std::uint64_t value() const {
    std::uint64_t v = 0;
    for (auto o : octets) v = (v << 8) | o;
    return v;
  }

  static MacAddress from_value(std::uint64_t v) {
    MacAddress m;
    for (std::size_t i = 6; i-- > 0; v >>= 8) m.octets[i] = static_cast<std::uint8_t>(v & 0xff);
    return m;
  }

  // Accepts "aa:bb:cc:dd:ee:ff" in either case; always prints lowercase.
  static MacAddress parse(std::string_view text) {
    require(text.size() == 17, "malformed MAC address '" + std::string(text) + "'");
    MacAddress m;
    for (std::size_t i = 0; i < 6; ++i) {
      if (i > 0) require(text[i * 3 - 1] == ':', "malformed MAC address '" + std::string(text) + "'");
      char pair[2] = {static_cast<char>(std::tolower(static_cast<unsigned char>(text[i * 3]))),
                      static_cast<char>(std::tolower(static_cast<unsigned char>(text[i * 3 + 1])))};
      auto hi = hex::nibble(pair[0]);
      auto lo = hex::nibble(pair[1]);
      require(hi && lo, "malformed MAC address '" + std::string(text) + "'");
      m.octets[i] = static_cast<std::uint8_t>((*hi << 4) | *lo);
    }
    return m;
  }

  std::string to_string() const {
    std::string out;
    for (std::size_t i = 0; i < 6; ++i) {
      if (i > 0) out += ':';
      out += hex::encode(std::span(&octets[i], 1));
    }
    return out;
  }

  friend bool operator==(const MacAddress&, const MacAddress&) = default;
};

enum class Status { active, revoked };

struct TrustedIdentity {
  MacAddress mac;
  DeviceKey key;
  std::int64_t enrolled_at = 0;  // seconds, UTC
  Status status = Status::active;

  friend bool operator==(const TrustedIdentity&, const TrustedIdentity&) = default;
};

inline std::string format_record(const TrustedIdentity& id) {
  return id.mac.to_string() + ',' + id.key.to_hex() + ',' + std::to_string(id.key.length()) + ',' +
         std::to_string(id.enrolled_at) + ',' + (id.status == Status::active ? "active" : "revoked");
}

inline TrustedIdentity parse_record(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  require(f.size() == 5, "registry record needs 5 fields: " + line);
  TrustedIdentity id;
  id.mac = MacAddress::parse(f[0]);
  require(id.mac.to_string() == f[0], "registry MAC must be lowercase: " + line);
  std::size_t len = 0;
  auto [p, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), len);
  require(ec == std::errc() && p == f[2].data() + f[2].size(), "bad key_len: " + line);
  id.key = DeviceKey::from_hex(f[1], len);
  auto [p2, ec2] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), id.enrolled_at);
  require(ec2 == std::errc() && p2 == f[3].data() + f[3].size(), "bad enrolled_at: " + line);
  if (f[4] == "active")
    id.status = Status::active;
  else if (f[4] == "revoked")
    id.status = Status::revoked;
  else
    fail(ErrorCode::invalid_parameter, "bad status: " + line);
  return id;
}

class Registry {
 public:
  Registry() = default;

  // Opens a file-backed registry; a missing file starts empty. Every
  // mutation is written back before it returns.
  explicit Registry(std::filesystem::path backing) : path_(std::move(backing)) {
    if (std::filesystem::exists(*path_)) records_ = read_file(*path_);
  }

  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  TrustedIdentity enroll(const MacAddress& mac, const DeviceKey& key, std::int64_t now) {
    require(key.length() >= 1 && key.length() <= model::kMaxKeyBits, "key length must be in [1, 127]");
    std::unique_lock lock(mutex_);
    if (find_active(mac)) fail(ErrorCode::already_enrolled, mac.to_string() + " already has an active identity");
    TrustedIdentity id{mac, key, now, Status::active};
    records_.push_back(id);
    persist();
    return id;
  }

  std::optional<TrustedIdentity> lookup(const MacAddress& mac) const {
    std::shared_lock lock(mutex_);
    if (const auto* id = find_active(mac)) return *id;
    return std::nullopt;
  }

  void revoke(const MacAddress& mac) {
    std::unique_lock lock(mutex_);
    auto* id = find_active(mac);
    if (!id) fail(ErrorCode::not_found, mac.to_string() + " is not enrolled");
    id->status = Status::revoked;
    persist();
  }

  std::vector<TrustedIdentity> records() const {
    std::shared_lock lock(mutex_);
    return records_;
  }

  void save(const std::filesystem::path& path) const {
    std::shared_lock lock(mutex_);
    write_file(path, records_);
  }

  static std::vector<TrustedIdentity> read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io, "cannot open " + path.string());
    std::vector<TrustedIdentity> out;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto id = parse_record(line);
      if (id.status == Status::active)
        for (const auto& prev : out)
          if (prev.status == Status::active && prev.mac == id.mac)
            fail(ErrorCode::integrity, "registry has two active identities for " + id.mac.to_string());
      out.push_back(std::move(id));
    }
    return out;
  }

 private:
  static void write_file(const std::filesystem::path& path, const std::vector<TrustedIdentity>& records) {
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) fail(ErrorCode::io, "cannot write " + tmp.string());
      for (const auto& id : records) out << format_record(id) << '\n';
      if (!out.flush()) fail(ErrorCode::io, "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

  void persist() {
    if (path_) write_file(*path_, records_);
  }

  TrustedIdentity* find_active(const MacAddress& mac) {
    for (auto& id : records_)
      if (id.status == Status::active && id.mac == mac) return &id;
    return nullptr;
  }
  const TrustedIdentity* find_active(const MacAddress& mac) const {
    return const_cast<Registry*>(this)->find_active(mac);
  }

  std::optional<std::filesystem::path> path_;
  std::vector<TrustedIdentity> records_;
  mutable std::shared_mutex mutex_;
};

}  // namespace softpuf::registry
