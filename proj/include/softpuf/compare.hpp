#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "softpuf/metrics.hpp"
#include "softpuf/model.hpp"

namespace softpuf::model {

struct ModelSpec {
  ModelKind kind = ModelKind::linear;
  Hyperparams hyper;

  std::string label() const {
    std::ostringstream os;
    os << to_string(kind);
    if (kind == ModelKind::ridge) os << "(lambda=" << hyper.ridge_lambda << ')';
    if (kind == ModelKind::knn) os << "(k=" << hyper.knn_k << ')';
    return os.str();
  }
};

// Parses "linear", "ridge", "ridge:0.5", "knn", "knn:7".
inline ModelSpec parse_spec(const std::string& text) {
  ModelSpec spec;
  const auto colon = text.find(':');
  spec.kind = parse_kind(text.substr(0, colon));
  if (colon == std::string::npos) return spec;
  const std::string arg = text.substr(colon + 1);
  try {
    std::size_t used = 0;
    if (spec.kind == ModelKind::ridge) {
      spec.hyper.ridge_lambda = std::stod(arg, &used);
    } else if (spec.kind == ModelKind::knn) {
      spec.hyper.knn_k = std::stoul(arg, &used);
    } else {
      used = std::string::npos;
    }
    if (used != arg.size()) fail(ErrorCode::invalid_parameter, "bad model spec '" + text + "'");
  } catch (const std::logic_error&) {
    fail(ErrorCode::invalid_parameter, "bad model spec '" + text + "'");
  }
  const bool ok = spec.kind == ModelKind::knn
                      ? std::all_of(arg.begin(), arg.end(), ::isdigit) && spec.hyper.knn_k >= 1
                      : std::isfinite(spec.hyper.ridge_lambda) && spec.hyper.ridge_lambda >= 0.0;
  if (!ok) fail(ErrorCode::invalid_parameter, "bad model spec '" + text + "'");
  return spec;
}

// A row either computed locally (all metrics present) or supplied as an
// annotation, which may carry only some columns.
struct ComparisonRow {
  std::string model;
  std::optional<double> mae, mse, r2, mape, sign_accuracy;
  bool annotation = false;

  static ComparisonRow from(std::string name, const MetricsReport& m) {
    return {std::move(name), m.mae, m.mse, m.r2, m.mape, m.sign_accuracy, false};
  }
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::uint64_t split_seed = 0;
};

struct Split {
  std::vector<std::size_t> train, test;
};

inline Split split_indices(std::size_t n, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, "split fraction must be in (0, 1)");
  const auto train_count = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
  require(train_count >= 1 && train_count < n, "dataset too small for a non-empty train/test split");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_count));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(train_count), idx.end());
  return s;
}

// Per-chain scores flattened row-major against the +-1 targets.
inline MetricsReport evaluate_model(const RegressionModel& m, const CrpDataset& test) {
  std::vector<double> predicted, actual;
  predicted.reserve(test.rows.size() * kChains);
  actual.reserve(test.rows.size() * kChains);
  for (const auto& row : test.rows) {
    const Scores s = predict(m, row.challenge);
    for (std::size_t k = 0; k < kChains; ++k) {
      predicted.push_back(s[k]);
      actual.push_back(target(row.response, k));
    }
  }
  return metrics(predicted, actual);
}

inline ComparisonTable compare_models(const CrpDataset& dataset, const std::vector<ModelSpec>& specs,
                                      double split_fraction, std::uint64_t split_seed = 0) {
  const Split split = split_indices(dataset.rows.size(), split_fraction, split_seed);
  ComparisonTable table;
  table.train_rows = split.train.size();
  table.test_rows = split.test.size();
  table.split_seed = split_seed;
  if (specs.empty()) return table;

  CrpDataset train_set{{}, dataset.source + "#train"}, test_set{{}, dataset.source + "#test"};
  train_set.rows.reserve(split.train.size());
  test_set.rows.reserve(split.test.size());
  for (auto i : split.train) train_set.rows.push_back(dataset.rows[i]);
  for (auto i : split.test) test_set.rows.push_back(dataset.rows[i]);

  for (const auto& spec : specs) {
    const RegressionModel m = train(train_set, spec.kind, spec.hyper);
    table.rows.push_back(ComparisonRow::from(spec.label(), evaluate_model(m, test_set)));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr std::string_view kComparisonCsvHeader = "model,mae,mse,r2,mape,sign_accuracy";

namespace detail {

inline std::string cell(const std::optional<double>& v, int precision) {
  if (!v) return {};
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << *v;
  return os.str();
}

inline std::optional<double> parse_cell(const std::string& text) {
  if (text.empty()) return std::nullopt;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  require(used == text.size(), "bad numeric cell '" + text + "'");
  return v;
}

}  // namespace detail

inline void write_comparison_csv(const ComparisonTable& t, std::ostream& out) {
  out << kComparisonCsvHeader << '\n';
  for (const auto& r : t.rows) {
    out << r.model << ',' << detail::cell(r.mae, 6) << ',' << detail::cell(r.mse, 6) << ',' << detail::cell(r.r2, 6)
        << ',' << detail::cell(r.mape, 6) << ',' << detail::cell(r.sign_accuracy, 6) << '\n';
  }
}

inline void write_comparison_text(const ComparisonTable& t, std::ostream& out) {
  std::size_t name_width = 5;
  for (const auto& r : t.rows) name_width = std::max(name_width, r.model.size());
  auto col = [](const std::optional<double>& v) {
    std::string s = v ? detail::cell(v, 4) : "-";
    return std::string(std::max<std::size_t>(10, s.size() + 1) - s.size(), ' ') + s;
  };
  out << std::left << std::setw(static_cast<int>(name_width)) << "model" << std::right << std::setw(10) << "mae"
      << std::setw(10) << "mse" << std::setw(10) << "r2" << std::setw(10) << "mape" << std::setw(10) << "sign_acc"
      << '\n';
  for (const auto& r : t.rows) {
    out << std::left << std::setw(static_cast<int>(name_width)) << r.model << std::right << col(r.mae) << col(r.mse)
        << col(r.r2) << col(r.mape) << col(r.sign_accuracy) << '\n';
  }
  out << "# train_rows=" << t.train_rows << " test_rows=" << t.test_rows << " split_seed=" << t.split_seed << '\n';
}

// Annotation rows: same CSV header; empty cells mean "not reported".
inline std::vector<ComparisonRow> read_annotations(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kComparisonCsvHeader)
    fail(ErrorCode::invalid_parameter, "annotation file must start with '" + std::string(kComparisonCsvHeader) + "'");
  std::vector<ComparisonRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    require(cells.size() == 6, "annotation row must have 6 columns: " + line);
    ComparisonRow r;
    r.model = cells[0];
    r.mae = detail::parse_cell(cells[1]);
    r.mse = detail::parse_cell(cells[2]);
    r.r2 = detail::parse_cell(cells[3]);
    r.mape = detail::parse_cell(cells[4]);
    r.sign_accuracy = detail::parse_cell(cells[5]);
    r.annotation = true;
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<ComparisonRow> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  return read_annotations(in);
}

}  // namespace softpuf::model
