#pragma once

// Reference computations the tests compare the library against. Each one is
// written independently of the library code it checks, as directly as the
// math allows, and favours clarity over speed.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

// ---------------------------------------------------------------------------
// Private-chain race

// Exact probability that the attacker (block share q) wins within `horizon`
// blocks: it needs a chain strictly longer than the honest one and at least
// z + 1 blocks long. Dynamic programme over (attacker, honest) block counts.
inline double race_bounded(double q, unsigned z, unsigned horizon) {
  // prob[a] = probability of being at (a, n - a) without having won yet.
  std::vector<double> prob(horizon + 2, 0.0);
  prob[0] = 1.0;
  double won = 0.0;
  for (unsigned n = 0; n < horizon; ++n) {
    std::vector<double> next(horizon + 2, 0.0);
    for (unsigned a = 0; a <= n; ++a) {
      if (prob[a] == 0.0) continue;
      const unsigned h = n - a;
      // attacker block
      if (a + 1 > h && a + 1 >= z + 1)
        won += prob[a] * q;
      else
        next[a + 1] += prob[a] * q;
      // honest block
      next[a] += prob[a] * (1.0 - q);
    }
    prob.swap(next);
  }
  return won;
}

// Unbounded race: the attacker must first reach z + 1 blocks, after which
// the honest chain has k blocks; from a deficit it catches up with
// probability (q/p)^(deficit + 1).
inline double race_unbounded(double q, unsigned z) {
  const double p = 1.0 - q;
  if (q >= p) return 1.0;
  // P(honest has exactly k blocks when attacker reaches z + 1) is negative
  // binomial; the attacker already leads iff k <= z.
  double win = 0.0;
  for (unsigned k = 0; k < 2000; ++k) {
    const double log_c = std::lgamma(z + 1.0 + k) - std::lgamma(k + 1.0) - std::lgamma(z + 1.0);
    const double pk = std::exp(log_c + (z + 1.0) * std::log(q) + k * std::log(p));
    const double catch_up = k <= z ? 1.0 : std::pow(q / p, static_cast<double>(k - z));
    win += pk * catch_up;
  }
  return win;
}

// ---------------------------------------------------------------------------
// Metrics, straight from the definitions in long double.

struct Metrics {
  long double mae, mse, r2, mape, sign_accuracy;
};

inline Metrics metrics(const std::vector<double>& p, const std::vector<double>& a) {
  const long double n = static_cast<long double>(a.size());
  long double mean = 0;
  for (double x : a) mean += x;
  mean /= n;
  long double abs_err = 0, sq_err = 0, ape = 0, ss_tot = 0, hits = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(p[i]) - a[i];
    abs_err += d < 0 ? -d : d;
    sq_err += d * d;
    const long double denom = std::fabs(a[i]) > 1e-12 ? std::fabs(static_cast<long double>(a[i])) : 1e-12L;
    ape += (d < 0 ? -d : d) / denom;
    ss_tot += (a[i] - mean) * (a[i] - mean);
    const bool ps = p[i] >= 0, as = a[i] >= 0;
    hits += ps == as ? 1 : 0;
  }
  return {abs_err / n, sq_err / n, 1 - sq_err / ss_tot, ape / n, hits / n};
}

// ---------------------------------------------------------------------------
// Small dense linear algebra

using Matrix = std::vector<std::vector<double>>;

// Inverse by Gauss-Jordan elimination with partial pivoting.
inline Matrix inverse(Matrix m) {
  const std::size_t n = m.size();
  Matrix inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(m[r][c]) > std::fabs(m[piv][c])) piv = r;
    std::swap(m[c], m[piv]);
    std::swap(inv[c], inv[piv]);
    const double d = m[c][c];
    for (std::size_t j = 0; j < n; ++j) {
      m[c][j] /= d;
      inv[c][j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = m[r][c];
      for (std::size_t j = 0; j < n; ++j) {
        m[r][j] -= f * m[c][j];
        inv[r][j] -= f * inv[c][j];
      }
    }
  }
  return inv;
}

// 3x3 inverse by cofactors.
inline Matrix inverse3(const Matrix& m) {
  const double a = m[0][0], b = m[0][1], c = m[0][2];
  const double d = m[1][0], e = m[1][1], f = m[1][2];
  const double g = m[2][0], h = m[2][1], i = m[2][2];
  const double det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  return {{(e * i - f * h) / det, (c * h - b * i) / det, (b * f - c * e) / det},
          {(f * g - d * i) / det, (a * i - c * g) / det, (c * d - a * f) / det},
          {(d * h - e * g) / det, (b * g - a * h) / det, (a * e - b * d) / det}};
}

inline std::vector<double> mul(const Matrix& m, const std::vector<double>& v) {
  std::vector<double> out(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += m[i][j] * v[j];
  return out;
}

// ---------------------------------------------------------------------------
// Parity features by the product rule, one product per entry.

inline std::vector<int> parity_features(std::uint64_t challenge) {
  std::vector<int> phi(65, 1);
  for (int i = 0; i < 64; ++i) {
    int prod = 1;
    for (int j = i; j < 64; ++j) {
      const int cj = static_cast<int>((challenge >> (63 - j)) & 1U);
      prod *= 1 - 2 * cj;
    }
    phi[i] = prod;
  }
  return phi;
}

}  // namespace oracle

namespace testing_support {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "softpuf-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) std::abort();
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace testing_support
