#include "aes/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "aes/error.hpp"
#include "aes/seed.hpp"

namespace aes {

DesignMatrix::DesignMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

DesignMatrix DesignMatrix::select_rows(std::span<const std::size_t> indices) const {
  DesignMatrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.values_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  }
  return out;
}

double RidgeModel::predict(std::span<const double> features) const {
  if (features.size() != weights.size()) {
    throw DataError("ridge predict: expected " + std::to_string(weights.size()) +
                    " features, got " + std::to_string(features.size()));
  }
  double s = intercept;
  for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * features[j];
  return s;
}

namespace {

using Matrix = std::vector<double>;  // row-major m x m

// In-place Cholesky G = L L^T, lower triangle holds L. Returns false when a
// pivot falls below `tol`.
bool cholesky(Matrix& g, std::size_t m, double tol) {
  for (std::size_t j = 0; j < m; ++j) {
    double d = g[j * m + j];
    for (std::size_t p = 0; p < j; ++p) d -= g[j * m + p] * g[j * m + p];
    if (!(d > tol)) return false;
    const double ljj = std::sqrt(d);
    g[j * m + j] = ljj;
    for (std::size_t i = j + 1; i < m; ++i) {
      double s = g[i * m + j];
      for (std::size_t p = 0; p < j; ++p) s -= g[i * m + p] * g[j * m + p];
      g[i * m + j] = s / ljj;
    }
  }
  return true;
}

std::vector<double> cholesky_solve(const Matrix& l, std::size_t m, std::vector<double> b) {
  for (std::size_t i = 0; i < m; ++i) {
    double s = b[i];
    for (std::size_t p = 0; p < i; ++p) s -= l[i * m + p] * b[p];
    b[i] = s / l[i * m + i];
  }
  for (std::size_t i = m; i-- > 0;) {
    double s = b[i];
    for (std::size_t p = i + 1; p < m; ++p) s -= l[p * m + i] * b[p];
    b[i] = s / l[i * m + i];
  }
  return b;
}

}  // namespace

RidgeModel ridge_fit(const DesignMatrix& x, std::span<const double> y, double alpha) {
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  if (n < 1 || m < 1) throw NumericError("ridge_fit: empty design matrix");
  if (y.size() != n) throw NumericError("ridge_fit: target length does not match rows");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw NumericError("ridge_fit: alpha must be finite and >= 0");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(y[i])) throw NumericError("ridge_fit: non-finite target");
    for (double v : x.row(i)) {
      if (!std::isfinite(v)) throw NumericError("ridge_fit: non-finite feature");
    }
  }

  const double dn = static_cast<double>(n);
  std::vector<double> col_mean(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) col_mean[j] += x(i, j);
  }
  for (auto& v : col_mean) v /= dn;
  const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / dn;

  Matrix gram(m * m, 0.0);
  std::vector<double> rhs(m, 0.0);
  std::vector<double> xc(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) xc[j] = x(i, j) - col_mean[j];
    const double yc = y[i] - y_mean;
    for (std::size_t a = 0; a < m; ++a) {
      rhs[a] += xc[a] * yc;
      for (std::size_t b = 0; b <= a; ++b) gram[a * m + b] += xc[a] * xc[b];
    }
  }
  double max_diag = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < a; ++b) gram[b * m + a] = gram[a * m + b];
    max_diag = std::max(max_diag, gram[a * m + a]);
    gram[a * m + a] += alpha;
  }

  Matrix factor = gram;
  const double tol = alpha > 0.0 ? 0.0 : 1e-10 * std::max(max_diag, 1e-300);
  if (!cholesky(factor, m, tol)) {
    throw NumericError(
        "ridge_fit: centered normal equations are singular at alpha 0; use a positive alpha");
  }
  auto w = cholesky_solve(factor, m, rhs);

  // One step of iterative refinement against the unfactored system.
  std::vector<double> resid(m);
  for (std::size_t a = 0; a < m; ++a) {
    double s = rhs[a];
    for (std::size_t b = 0; b < m; ++b) s -= gram[a * m + b] * w[b];
    resid[a] = s;
  }
  const auto delta = cholesky_solve(factor, m, resid);
  for (std::size_t a = 0; a < m; ++a) w[a] += delta[a];

  RidgeModel model;
  model.alpha = alpha;
  model.intercept = y_mean;
  for (std::size_t j = 0; j < m; ++j) model.intercept -= w[j] * col_mean[j];
  model.weights = std::move(w);
  for (double v : model.weights) {
    if (!std::isfinite(v)) throw NumericError("ridge_fit: solution is not finite");
  }
  return model;
}

std::vector<int> cv_fold_assignment(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw NumericError("cross-validation needs k >= 2");
  if (n < static_cast<std::size_t>(k)) {
    throw NumericError("cross-validation: " + std::to_string(n) + " rows cannot fill " +
                       std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  shuffle(order, rng);
  std::vector<int> fold(n);
  const auto kk = static_cast<std::size_t>(k);
  for (std::size_t f = 0; f < kk; ++f) {
    const std::size_t begin = f * n / kk;
    const std::size_t end = (f + 1) * n / kk;
    for (std::size_t p = begin; p < end; ++p) fold[order[p]] = static_cast<int>(f);
  }
  return fold;
}

CvResult cv_select_alpha(const DesignMatrix& x, std::span<const double> y,
                         std::span<const double> grid, int k, std::uint64_t seed) {
  if (grid.empty()) throw NumericError("cross-validation: empty alpha grid");
  for (double a : grid) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw NumericError("cross-validation: alpha must be >= 0");
  }
  const std::size_t n = x.rows();
  if (y.size() != n) throw NumericError("cross-validation: target length does not match rows");
  const auto fold = cv_fold_assignment(n, k, seed);

  std::vector<std::vector<std::size_t>> train(static_cast<std::size_t>(k));
  std::vector<std::vector<std::size_t>> held(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    for (int f = 0; f < k; ++f) {
      (fold[i] == f ? held : train)[static_cast<std::size_t>(f)].push_back(i);
    }
  }
  for (int f = 0; f < k; ++f) {
    if (held[static_cast<std::size_t>(f)].empty() || train[static_cast<std::size_t>(f)].size() < 2) {
      throw NumericError("cross-validation: fold " + std::to_string(f) + " is too small");
    }
  }

  CvResult result;
  for (double alpha : grid) {
    double total = 0.0;
    bool singular = false;
    for (int f = 0; f < k && !singular; ++f) {
      const auto& tr = train[static_cast<std::size_t>(f)];
      const auto& te = held[static_cast<std::size_t>(f)];
      std::vector<double> ytr;
      ytr.reserve(tr.size());
      for (auto i : tr) ytr.push_back(y[i]);
      RidgeModel model;
      try {
        model = ridge_fit(x.select_rows(tr), ytr, alpha);
      } catch (const NumericError&) {
        if (alpha != 0.0) throw;
        singular = true;
        break;
      }
      double sse = 0.0;
      for (auto i : te) {
        const double r = model.predict(x.row(i)) - y[i];
        sse += r * r;
      }
      total += sse / static_cast<double>(te.size());
    }
    const double err = singular ? std::numeric_limits<double>::infinity()
                                : total / static_cast<double>(k);
    result.errors.emplace_back(alpha, err);
  }

  double best_err = std::numeric_limits<double>::infinity();
  for (const auto& [a, e] : result.errors) best_err = std::min(best_err, e);
  if (!std::isfinite(best_err)) {
    throw NumericError("cross-validation: every alpha in the grid gave a singular fit");
  }
  // Relative slack so that errors equal up to rounding count as ties.
  const double cutoff = best_err + 1e-12 * std::abs(best_err);
  bool found = false;
  for (const auto& [a, e] : result.errors) {
    if (e <= cutoff && (!found || a > result.best_alpha)) {
      result.best_alpha = a;
      found = true;
    }
  }
  return result;
}

double weighted_median(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size()) throw NumericError("weighted_median: length mismatch");
  if (values.empty()) throw NumericError("weighted_median: no values");
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || !std::isfinite(weights[i]) || weights[i] < 0.0) {
      throw NumericError("weighted_median: values must be finite and weights >= 0");
    }
    total += weights[i];
  }
  if (!(total > 0.0)) throw NumericError("weighted_median: total weight is zero");

  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double cumulative = 0.0;
  for (auto i : order) {
    cumulative += weights[i];
    if (2.0 * cumulative >= total) return values[i];
  }
  return values[order.back()];
}

}  // namespace aes
