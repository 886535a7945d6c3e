#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "softpuf/compare.hpp"
#include "softpuf/model.hpp"

using namespace softpuf;
using model::ModelKind;
using puf::Challenge;

namespace {

const puf::CrpDataset& noiseless_100k() {
  static const auto ds = puf::generate_dataset(puf::make_puf(7, 0.0), 100000, mix_seed(7, 1));
  return ds;
}

double holdout_sign_accuracy(const model::RegressionModel& m, const puf::PufInstance& p, std::size_t n,
                             std::uint64_t seed) {
  Rng rng(seed);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Challenge c{rng()};
    const auto want = puf::evaluate(p, c);
    const auto got = model::predict_response(m, c);
    hits += puf::kChains - std::popcount(static_cast<unsigned>(want.bits ^ got.bits));
  }
  return static_cast<double>(hits) / static_cast<double>(n * puf::kChains);
}

}  // namespace

TEST(Train, LinearLearnsNoiselessArbiter) {
  const auto m = model::train(noiseless_100k(), ModelKind::linear);
  EXPECT_GT(holdout_sign_accuracy(m, puf::make_puf(7, 0.0), 20000, 555), 0.95);
  EXPECT_FALSE(m.used_min_norm);
  EXPECT_EQ(m.hyper.ridge_lambda, 0.0);
}

TEST(Train, RidgeAlsoLearns) {
  const auto m = model::train(noiseless_100k(), ModelKind::ridge, {1.0, 5});
  EXPECT_GT(holdout_sign_accuracy(m, puf::make_puf(7, 0.0), 20000, 556), 0.95);
}

TEST(Train, AllZeroResponsesPredictNegative) {
  auto ds = puf::generate_dataset(puf::make_puf(3, 0.0), 2000, 9);
  for (auto& row : ds.rows) row.response.bits = 0;
  const auto m = model::train(ds, ModelKind::linear);
  std::size_t negative = 0;
  for (const auto& row : ds.rows) {
    const auto s = model::predict(m, row.challenge);
    for (std::size_t k = 0; k < puf::kChains; ++k) negative += s[k] < 0.0;
  }
  EXPECT_EQ(negative, ds.rows.size() * puf::kChains);
}

TEST(Train, EmptyDatasetRejected) {
  for (auto kind : {ModelKind::linear, ModelKind::ridge, ModelKind::knn}) {
    try {
      model::train(puf::CrpDataset{}, kind);
      FAIL() << "expected an error";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::invalid_parameter);
    }
  }
}

TEST(Train, NegativeLambdaAndZeroKRejected) {
  const auto ds = puf::generate_dataset(puf::make_puf(3, 0.0), 100, 9);
  EXPECT_THROW(model::train(ds, ModelKind::ridge, {-1.0, 5}), Error);
  EXPECT_THROW(model::train(ds, ModelKind::knn, {1.0, 0}), Error);
}

TEST(Train, IsBitwiseDeterministic) {
  const auto ds = puf::generate_dataset(puf::make_puf(3, 0.2), 5000, 9);
  for (auto kind : {ModelKind::linear, ModelKind::ridge, ModelKind::knn})
    EXPECT_EQ(model::train(ds, kind), model::train(ds, kind));
}

TEST(Train, UnderdeterminedFallsBackToMinimumNorm) {
  // With 8 rows the 65x65 normal matrix has rank 8. The minimum-norm solution
  // is X^T (X X^T)^-1 t, computed here with an 8x8 inverse.
  const auto ds = puf::generate_dataset(puf::make_puf(21, 0.0), 8, 77);
  const auto m = model::train(ds, ModelKind::linear);
  EXPECT_TRUE(m.used_min_norm);

  oracle::Matrix x;
  for (const auto& row : ds.rows) {
    const auto phi = oracle::parity_features(row.challenge.bits);
    x.emplace_back(phi.begin(), phi.end());
  }
  oracle::Matrix xxt(8, std::vector<double>(8, 0.0));
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      for (std::size_t f = 0; f < 65; ++f) xxt[i][j] += x[i][f] * x[j][f];
  const auto inv = oracle::inverse(xxt);
  for (std::size_t k = 0; k < puf::kChains; ++k) {
    std::vector<double> t;
    for (const auto& row : ds.rows) t.push_back(row.response.bit(k) ? 1.0 : -1.0);
    const auto alpha = oracle::mul(inv, t);
    for (std::size_t f = 0; f < 65; ++f) {
      double w = 0.0;
      for (std::size_t i = 0; i < 8; ++i) w += x[i][f] * alpha[i];
      EXPECT_NEAR(m.weights[k][f], w, 1e-9) << "chain " << k << " feature " << f;
    }
    // An interpolating fit reproduces its training targets.
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(model::predict(m, ds.rows[i].challenge)[k], t[i], 1e-9);
  }
}

TEST(LeastSquares, TwoStageToyMatchesNormalEquations) {
  // A 2-stage arbiter has 3 parity features; solve (X^T X)^-1 X^T y by
  // cofactors and compare.
  Rng rng(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double w0 = normal(rng), w1 = normal(rng), w2 = normal(rng);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    const std::size_t n = 4 + trial % 5;  // 4..8 rows
    for (std::size_t r = 0; r < n; ++r) {
      const int c0 = (r >> 1) & 1, c1 = r & 1;  // cycle through all 4 challenges
      const double p1 = 1 - 2 * c1, p0 = (1 - 2 * c0) * p1;
      rows.push_back({p0, p1, 1.0});
      const double delta = w0 * p0 + w1 * p1 + w2 + 0.1 * normal(rng);
      y.push_back(delta > 0 ? 1.0 : -1.0);
    }
    oracle::Matrix xtx(3, std::vector<double>(3, 0.0));
    std::vector<double> xty(3, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (int i = 0; i < 3; ++i) {
        xty[i] += rows[r][i] * y[r];
        for (int j = 0; j < 3; ++j) xtx[i][j] += rows[r][i] * rows[r][j];
      }
    const auto want = oracle::mul(oracle::inverse3(xtx), xty);
    const auto got = linalg::least_squares(rows, y);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(got[i], want[i], 1e-9);
  }
}

TEST(Predict, ZeroWeightModelScoresZero) {
  model::RegressionModel m;
  Rng rng(1);
  for (int t = 0; t < 50; ++t)
    for (double s : model::predict(m, Challenge{rng()})) EXPECT_EQ(s, 0.0);
}

TEST(Predict, HugeRidgeShrinksToZero) {
  const auto m = model::train(puf::generate_dataset(puf::make_puf(5, 0.0), 5000, 2), ModelKind::ridge, {1e12, 5});
  Rng rng(1);
  for (int t = 0; t < 100; ++t)
    for (double s : model::predict(m, Challenge{rng()})) EXPECT_NEAR(s, 0.0, 1e-6);
}

TEST(Predict, KnnWithKEqualToSizeIsDatasetMean) {
  const auto ds = puf::generate_dataset(puf::make_puf(5, 0.0), 300, 2);
  const auto m = model::train(ds, ModelKind::knn, {1.0, ds.rows.size()});
  std::array<double, puf::kChains> mean{};
  for (const auto& row : ds.rows)
    for (std::size_t k = 0; k < puf::kChains; ++k) mean[k] += model::target(row.response, k);
  for (double& v : mean) v /= static_cast<double>(ds.rows.size());
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto s = model::predict(m, Challenge{rng()});
    for (std::size_t k = 0; k < puf::kChains; ++k) EXPECT_NEAR(s[k], mean[k], 1e-12);
  }
}

TEST(Predict, KnnMatchesBruteForceNeighbours) {
  // Brute force: Hamming distance between parity-feature vectors, ties by
  // training order, mean target of the k nearest.
  const auto ds = puf::generate_dataset(puf::make_puf(6, 0.0), 400, 3);
  const std::size_t k = 7;
  const auto m = model::train(ds, ModelKind::knn, {1.0, k});
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    const Challenge q{rng()};
    const auto pq = oracle::parity_features(q.bits);
    std::vector<std::pair<int, std::size_t>> dist;
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
      const auto pr = oracle::parity_features(ds.rows[i].challenge.bits);
      int d = 0;
      for (int f = 0; f < 64; ++f) d += pq[f] != pr[f];
      dist.push_back({d, i});
    }
    std::sort(dist.begin(), dist.end());
    const auto s = model::predict(m, q);
    for (std::size_t c = 0; c < puf::kChains; ++c) {
      double want = 0.0;
      for (std::size_t j = 0; j < k; ++j) want += model::target(ds.rows[dist[j].second].response, c);
      EXPECT_NEAR(s[c], want / k, 1e-12);
    }
  }
}

TEST(Predict, KnnRecallsTrainingRowsWithKOne) {
  const auto ds = puf::generate_dataset(puf::make_puf(6, 0.0), 200, 3);
  const auto m = model::train(ds, ModelKind::knn, {1.0, 1});
  for (const auto& row : ds.rows) EXPECT_EQ(model::predict_response(m, row.challenge), row.response);
}

TEST(DeriveKey, ZeroModelGivesZeroKey) {
  model::RegressionModel m;
  for (std::uint64_t seed : {0ULL, 1ULL, 12345ULL}) {
    const auto key = model::derive_key(m, seed, 64);
    EXPECT_EQ(key.length(), 64U);
    for (bool b : key.bits) EXPECT_FALSE(b);
  }
}

TEST(DeriveKey, LengthAndDeterminism) {
  const auto m = model::train(puf::generate_dataset(puf::make_puf(5, 0.0), 3000, 2), ModelKind::linear);
  for (std::size_t len : {1U, 7U, 8U, 9U, 63U, 64U, 65U, 127U}) {
    const auto a = model::derive_key(m, 99, len);
    EXPECT_EQ(a.length(), len);
    EXPECT_EQ(a, model::derive_key(m, 99, len));
  }
  // Shorter keys are prefixes of longer ones from the same stream.
  const auto k127 = model::derive_key(m, 5, 127);
  const auto k20 = model::derive_key(m, 5, 20);
  EXPECT_TRUE(std::equal(k20.bits.begin(), k20.bits.end(), k127.bits.begin()));
}

TEST(DeriveKey, FollowsThresholdedPredictions) {
  const auto m = model::train(puf::generate_dataset(puf::make_puf(5, 0.0), 3000, 2), ModelKind::linear);
  const auto key = model::derive_key(m, 31, 20);
  Rng rng(31);
  std::vector<bool> want;
  for (int n = 0; n < 3; ++n)
    for (double s : model::predict(m, Challenge{rng()})) want.push_back(s > 0.0);
  want.resize(20);
  EXPECT_EQ(key.bits, want);
}

TEST(DeriveKey, DistinctSeedsGiveDistinctKeys) {
  const auto m = model::train(puf::generate_dataset(puf::make_puf(5, 0.0), 3000, 2), ModelKind::linear);
  const auto base = model::derive_key(m, 1000, 64);
  for (std::uint64_t s = 0; s < 100; ++s) EXPECT_NE(model::derive_key(m, s, 64), base) << s;
}

TEST(DeriveKey, LengthOutOfRangeRejected) {
  model::RegressionModel m;
  EXPECT_THROW(model::derive_key(m, 1, 0), Error);
  EXPECT_THROW(model::derive_key(m, 1, 128), Error);
}

TEST(DeviceKey, HexRoundTrip) {
  Rng rng(9);
  for (std::size_t len = 1; len <= 127; ++len) {
    model::DeviceKey k;
    for (std::size_t i = 0; i < len; ++i) k.bits.push_back(rng() & 1U);
    const auto hex = k.to_hex();
    EXPECT_EQ(hex.size(), (len + 7) / 8 * 2);
    EXPECT_EQ(model::DeviceKey::from_hex(hex, len), k);
  }
  model::DeviceKey three{{true, false, true}};
  EXPECT_EQ(three.to_hex(), "05");
  EXPECT_THROW(model::DeviceKey::from_hex("0d", 3), Error);  // nonzero padding
  EXPECT_THROW(model::DeviceKey::from_hex("0505", 3), Error);
}

TEST(ModelFile, RoundTripsEveryKind) {
  const auto ds = puf::generate_dataset(puf::make_puf(5, 0.1), 500, 2);
  for (auto kind : {ModelKind::linear, ModelKind::ridge, ModelKind::knn}) {
    const auto m = model::train(ds, kind, {0.25, 3});
    std::stringstream ss;
    model::write_model(m, ss);
    const auto back = model::read_model(ss);
    EXPECT_EQ(back.kind, m.kind);
    EXPECT_EQ(back.hyper.ridge_lambda, m.hyper.ridge_lambda);
    EXPECT_EQ(back.hyper.knn_k, m.hyper.knn_k);
    EXPECT_EQ(back.weights, m.weights);
    EXPECT_EQ(back.memory, m.memory);
  }
  std::stringstream junk("softpuf-model 2\n");
  EXPECT_THROW(model::read_model(junk), Error);
}

TEST(ModelSpec, Parsing) {
  EXPECT_EQ(model::parse_spec("linear").kind, ModelKind::linear);
  const auto r = model::parse_spec("ridge:0.5");
  EXPECT_EQ(r.kind, ModelKind::ridge);
  EXPECT_EQ(r.hyper.ridge_lambda, 0.5);
  const auto k = model::parse_spec("knn:7");
  EXPECT_EQ(k.kind, ModelKind::knn);
  EXPECT_EQ(k.hyper.knn_k, 7U);
  for (const char* bad : {"", "lasso", "ridge:", "ridge:-1", "knn:0", "knn:x", "linear:3"})
    EXPECT_THROW(model::parse_spec(bad), Error) << bad;
}
