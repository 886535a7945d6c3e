#pragma once

// Simulated 64-stage arbiter PUF with eight parallel chains.
//
// Each chain follows the additive delay model: the delay difference at the
// arbiter is dot(weights, phi(c)) where phi is the parity transform of the
// challenge and the last weight is a bias term. The response bit is the
// sign of that difference (ties resolve to 0).

#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "softpuf/error.hpp"
#include "softpuf/hex.hpp"
#include "softpuf/rng.hpp"

namespace softpuf::puf {

inline constexpr std::size_t kStages = 64;
inline constexpr std::size_t kFeatures = kStages + 1;
inline constexpr std::size_t kChains = 8;

using FeatureVector = std::array<double, kFeatures>;
using ChainWeights = std::array<double, kFeatures>;

// Bit 0 is the most significant bit of `bits`.
struct Challenge {
  std::uint64_t bits = 0;

  constexpr int bit(std::size_t j) const { return static_cast<int>((bits >> (kStages - 1 - j)) & 1U); }
  friend constexpr bool operator==(Challenge, Challenge) = default;
};

// Bit k is chain k's output; chain 0 is the most significant bit.
struct Response {
  std::uint8_t bits = 0;

  constexpr int bit(std::size_t k) const { return (bits >> (kChains - 1 - k)) & 1U; }
  constexpr void set(std::size_t k, int value) {
    const auto mask = static_cast<std::uint8_t>(1U << (kChains - 1 - k));
    bits = static_cast<std::uint8_t>(value ? (bits | mask) : (bits & ~mask));
  }
  friend constexpr bool operator==(Response, Response) = default;
};

struct Crp {
  Challenge challenge;
  Response response;
  friend bool operator==(const Crp&, const Crp&) = default;
};

struct CrpDataset {
  std::vector<Crp> rows;
  std::string source;
};

struct PufInstance {
  std::string device_id;
  std::array<ChainWeights, kChains> chains{};
  double noise_sigma = 0.0;

  friend bool operator==(const PufInstance&, const PufInstance&) = default;
};

inline PufInstance make_puf(std::uint64_t seed, double noise_sigma) {
  require(noise_sigma >= 0.0, "noise_sigma must be non-negative");
  PufInstance puf;
  puf.device_id = "puf-" + std::to_string(seed);
  puf.noise_sigma = noise_sigma;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& chain : puf.chains)
    for (double& w : chain) w = normal(rng);
  return puf;
}

// phi_i = prod_{j >= i} (1 - 2 c_j) for i < 64, phi_64 = 1.
inline FeatureVector features(Challenge challenge) {
  FeatureVector phi{};
  double acc = 1.0;
  for (std::size_t i = kStages; i-- > 0;) {
    acc *= challenge.bit(i) ? -1.0 : 1.0;
    phi[i] = acc;
  }
  phi[kStages] = 1.0;
  return phi;
}

inline double dot(const ChainWeights& w, const FeatureVector& phi) {
  double s = 0.0;
  for (std::size_t i = 0; i < kFeatures; ++i) s += w[i] * phi[i];
  return s;
}

// Noiseless delay-model response.
inline Response evaluate(const PufInstance& puf, Challenge challenge) {
  const FeatureVector phi = features(challenge);
  Response r;
  for (std::size_t k = 0; k < kChains; ++k) r.set(k, dot(puf.chains[k], phi) > 0.0);
  return r;
}

template <std::uniform_random_bit_generator Gen>
Response evaluate(const PufInstance& puf, Challenge challenge, Gen& rng) {
  if (puf.noise_sigma == 0.0) return evaluate(puf, challenge);
  const FeatureVector phi = features(challenge);
  std::normal_distribution<double> noise(0.0, puf.noise_sigma);
  Response r;
  for (std::size_t k = 0; k < kChains; ++k) r.set(k, dot(puf.chains[k], phi) + noise(rng) > 0.0);
  return r;
}

inline CrpDataset generate_dataset(const PufInstance& puf, std::size_t count, std::uint64_t seed) {
  require(count >= 1, "dataset count must be at least 1");
  CrpDataset ds;
  ds.source = "generated:" + puf.device_id + ":seed=" + std::to_string(seed);
  ds.rows.reserve(count);
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    Challenge c{rng()};
    ds.rows.push_back({c, evaluate(puf, c, rng)});
  }
  return ds;
}

// CSV: header `challenge_hex,response_hex`, then `<16 hex>,<2 hex>` rows.
inline constexpr std::string_view kCsvHeader = "challenge_hex,response_hex";

inline void write_csv(const CrpDataset& ds, std::ostream& out) {
  out << kCsvHeader << '\n';
  std::string line;
  for (const Crp& row : ds.rows) {
    line = hex::encode_u64(row.challenge.bits, 16);
    line += ',';
    line += hex::encode_u64(row.response.bits, 2);
    line += '\n';
    out << line;
  }
}

inline CrpDataset read_csv(std::istream& in, std::string source) {
  CrpDataset ds;
  ds.source = std::move(source);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) fail(ErrorCode::invalid_parameter, "missing CSV header in " + ds.source);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto c = line.size() == 19 && line[16] == ',' ? hex::decode_u64(std::string_view(line).substr(0, 16)) : std::nullopt;
    auto r = c ? hex::decode_u64(std::string_view(line).substr(17, 2)) : std::nullopt;
    if (!c || !r) fail(ErrorCode::invalid_parameter, ds.source + ":" + std::to_string(line_no) + ": malformed CRP row");
    ds.rows.push_back({Challenge{*c}, Response{static_cast<std::uint8_t>(*r)}});
  }
  return ds;
}

inline void save_csv(const CrpDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open " + path + " for writing");
  write_csv(ds, out);
  if (!out) fail(ErrorCode::io, "write failed: " + path);
}

inline CrpDataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  return read_csv(in, path);
}

}  // namespace softpuf::puf
