#pragma once

// Software model of a PUF: regressors trained on CRPs whose sign-thresholded
// outputs stand in for the hardware responses, and the key derivation that
// turns those outputs into a device key.

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "softpuf/error.hpp"
#include "softpuf/hex.hpp"
#include "softpuf/linalg.hpp"
#include "softpuf/puf.hpp"
#include "softpuf/rng.hpp"

namespace softpuf::model {

using puf::Challenge;
using puf::ChainWeights;
using puf::CrpDataset;
using puf::kChains;
using puf::kFeatures;

enum class ModelKind { linear, ridge, knn };

inline std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::linear: return "linear";
    case ModelKind::ridge: return "ridge";
    case ModelKind::knn: return "knn";
  }
  return "unknown";
}

inline ModelKind parse_kind(const std::string& text) {
  if (text == "linear") return ModelKind::linear;
  if (text == "ridge") return ModelKind::ridge;
  if (text == "knn") return ModelKind::knn;
  fail(ErrorCode::invalid_parameter, "unknown model kind '" + text + "'");
}

struct Hyperparams {
  double ridge_lambda = 1.0;
  std::size_t knn_k = 5;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

using Scores = std::array<double, kChains>;

struct RegressionModel {
  ModelKind kind = ModelKind::linear;
  Hyperparams hyper;
  std::array<ChainWeights, kChains> weights{};  // linear / ridge
  std::vector<puf::Crp> memory;                 // knn training rows
  bool used_min_norm = false;

  friend bool operator==(const RegressionModel&, const RegressionModel&) = default;
};

// Training target for chain k: +1 when the bit is set, -1 otherwise.
inline double target(puf::Response r, std::size_t chain) { return r.bit(chain) ? 1.0 : -1.0; }

// Suffix-parity bits of a challenge: bit i (MSB-first) is set iff
// features(c)[i] == -1. Hamming distance over these equals feature-space
// Hamming distance.
inline std::uint64_t parity_code(Challenge c) {
  std::uint64_t x = c.bits;
  // Prefix XOR toward the least significant end of an MSB-first word is a
  // suffix XOR in challenge-bit order.
  x ^= x << 1;
  x ^= x << 2;
  x ^= x << 4;
  x ^= x << 8;
  x ^= x << 16;
  x ^= x << 32;
  return x;
}

inline RegressionModel train(const CrpDataset& dataset, ModelKind kind, const Hyperparams& hyper = {}) {
  require(!dataset.rows.empty(), "training dataset is empty");
  RegressionModel m;
  m.kind = kind;
  m.hyper = hyper;

  if (kind == ModelKind::knn) {
    require(hyper.knn_k >= 1, "knn k must be at least 1");
    m.memory = dataset.rows;
    return m;
  }

  const double lambda = kind == ModelKind::ridge ? hyper.ridge_lambda : 0.0;
  require(lambda >= 0.0, "ridge lambda must be non-negative");
  if (kind == ModelKind::linear) m.hyper.ridge_lambda = 0.0;

  // The feature matrix is shared by all chains: build X^T X once and one
  // X^T y per chain. Only the upper triangle is accumulated.
  linalg::SymmetricMatrix gram(kFeatures);
  std::vector<std::vector<double>> xty(kChains, std::vector<double>(kFeatures, 0.0));
  for (const auto& row : dataset.rows) {
    const auto phi = puf::features(row.challenge);
    for (std::size_t i = 0; i < kFeatures; ++i) {
      double* g = &gram.a[i * kFeatures];
      const double pi = phi[i];
      for (std::size_t j = i; j < kFeatures; ++j) g[j] += pi * phi[j];
    }
    for (std::size_t k = 0; k < kChains; ++k) {
      const double t = target(row.response, k);
      for (std::size_t i = 0; i < kFeatures; ++i) xty[k][i] += t * phi[i];
    }
  }
  for (std::size_t i = 0; i < kFeatures; ++i) {
    for (std::size_t j = 0; j < i; ++j) gram(i, j) = gram(j, i);
    gram(i, i) += lambda;
  }

  auto solved = linalg::solve_spd(gram, xty);
  m.used_min_norm = solved.used_pseudo_inverse;
  for (std::size_t k = 0; k < kChains; ++k)
    for (std::size_t i = 0; i < kFeatures; ++i) m.weights[k][i] = solved.solutions[k][i];
  return m;
}

namespace detail {

inline Scores predict_knn(const RegressionModel& m, Challenge c) {
  const std::uint64_t query = parity_code(c);
  const std::size_t k = std::min(m.hyper.knn_k, m.memory.size());

  std::array<std::size_t, puf::kStages + 1> histogram{};
  for (const auto& row : m.memory) ++histogram[std::popcount(parity_code(row.challenge) ^ query)];

  std::size_t cutoff = 0, below = 0;
  while (below + histogram[cutoff] < k) below += histogram[cutoff++];
  std::size_t at_cutoff = k - below;  // taken in training-row order

  Scores s{};
  for (const auto& row : m.memory) {
    const auto d = static_cast<std::size_t>(std::popcount(parity_code(row.challenge) ^ query));
    if (d > cutoff) continue;
    if (d == cutoff) {
      if (at_cutoff == 0) continue;
      --at_cutoff;
    }
    for (std::size_t ch = 0; ch < kChains; ++ch) s[ch] += target(row.response, ch);
  }
  for (double& v : s) v /= static_cast<double>(k);
  return s;
}

}  // namespace detail

inline Scores predict(const RegressionModel& m, Challenge c) {
  if (m.kind == ModelKind::knn) return detail::predict_knn(m, c);
  const auto phi = puf::features(c);
  Scores s{};
  for (std::size_t k = 0; k < kChains; ++k) s[k] = puf::dot(m.weights[k], phi);
  return s;
}

inline puf::Response predict_response(const RegressionModel& m, Challenge c) {
  const Scores s = predict(m, c);
  puf::Response r;
  for (std::size_t k = 0; k < kChains; ++k) r.set(k, s[k] > 0.0);
  return r;
}

// ---------------------------------------------------------------------------
// Device keys

inline constexpr std::size_t kMaxKeyBits = 127;

// Bit 0 is the first (most significant) key bit.
struct DeviceKey {
  std::vector<bool> bits;

  std::size_t length() const { return bits.size(); }
  friend bool operator==(const DeviceKey&, const DeviceKey&) = default;

  // ceil(len/8) bytes, big-endian value of the bit string, zero-padded high bits.
  std::string to_hex() const {
    const std::size_t nbytes = (bits.size() + 7) / 8;
    std::vector<std::uint8_t> bytes(nbytes, 0);
    const std::size_t pad = nbytes * 8 - bits.size();
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) {
        const std::size_t pos = pad + i;
        bytes[pos / 8] |= static_cast<std::uint8_t>(0x80U >> (pos % 8));
      }
    return hex::encode(bytes);
  }

  static DeviceKey from_hex(std::string_view text, std::size_t length) {
    require(length >= 1 && length <= kMaxKeyBits, "key length must be in [1, 127]");
    auto bytes = hex::decode(text);
    const std::size_t nbytes = (length + 7) / 8;
    require(bytes && bytes->size() == nbytes, "key hex does not match key length");
    const std::size_t pad = nbytes * 8 - length;
    DeviceKey key;
    for (std::size_t pos = 0; pos < nbytes * 8; ++pos) {
      const bool bit = ((*bytes)[pos / 8] >> (7 - pos % 8)) & 1U;
      if (pos < pad)
        require(!bit, "key hex has nonzero padding bits");
      else
        key.bits.push_back(bit);
    }
    return key;
  }
};

inline DeviceKey derive_key(const RegressionModel& m, std::uint64_t device_seed, std::size_t length_n) {
  require(length_n >= 1 && length_n <= kMaxKeyBits, "key length must be in [1, 127]");
  Rng rng(device_seed);
  DeviceKey key;
  key.bits.reserve((length_n + 7) / 8 * 8);
  for (std::size_t n = 0; n < (length_n + 7) / 8; ++n) {
    const Scores s = predict(m, Challenge{rng()});
    for (double v : s) key.bits.push_back(v > 0.0);
  }
  key.bits.resize(length_n);
  return key;
}

// ---------------------------------------------------------------------------
// Persistence: a line-oriented text file; weights are printed with 17
// significant digits so they reload bit-exactly.

inline void write_model(const RegressionModel& m, std::ostream& out) {
  out << "softpuf-model 1\n";
  out << "kind " << to_string(m.kind) << '\n';
  out << std::setprecision(17) << "ridge_lambda " << m.hyper.ridge_lambda << '\n';
  out << "knn_k " << m.hyper.knn_k << '\n';
  if (m.kind == ModelKind::knn) {
    out << "rows " << m.memory.size() << '\n';
    for (const auto& row : m.memory)
      out << hex::encode_u64(row.challenge.bits, 16) << ',' << hex::encode_u64(row.response.bits, 2) << '\n';
    return;
  }
  for (std::size_t k = 0; k < kChains; ++k) {
    out << "chain";
    for (double w : m.weights[k]) out << ' ' << w;
    out << '\n';
  }
}

inline RegressionModel read_model(std::istream& in) {
  auto bad = [](const std::string& why) { fail(ErrorCode::invalid_parameter, "malformed model file: " + why); };
  std::string tag, kind;
  int version = 0;
  RegressionModel m;
  if (!(in >> tag >> version) || tag != "softpuf-model" || version != 1) bad("header");
  if (!(in >> tag >> kind) || tag != "kind") bad("kind");
  m.kind = parse_kind(kind);
  if (!(in >> tag >> m.hyper.ridge_lambda) || tag != "ridge_lambda") bad("ridge_lambda");
  if (!(in >> tag >> m.hyper.knn_k) || tag != "knn_k") bad("knn_k");
  if (m.kind == ModelKind::knn) {
    std::size_t rows = 0;
    if (!(in >> tag >> rows) || tag != "rows") bad("rows");
    m.memory.reserve(rows);
    std::string line;
    for (std::size_t i = 0; i < rows; ++i) {
      if (!(in >> line) || line.size() != 19 || line[16] != ',') bad("knn row");
      auto c = hex::decode_u64(std::string_view(line).substr(0, 16));
      auto r = hex::decode_u64(std::string_view(line).substr(17, 2));
      if (!c || !r) bad("knn row");
      m.memory.push_back({Challenge{*c}, puf::Response{static_cast<std::uint8_t>(*r)}});
    }
    return m;
  }
  for (std::size_t k = 0; k < kChains; ++k) {
    if (!(in >> tag) || tag != "chain") bad("chain");
    for (double& w : m.weights[k])
      if (!(in >> w)) bad("weight");
  }
  return m;
}

inline void save_model(const RegressionModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open " + path + " for writing");
  write_model(m, out);
}

inline RegressionModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  return read_model(in);
}

}  // namespace softpuf::model
