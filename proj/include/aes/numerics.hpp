#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace aes {

// Dense row-major n x m matrix: rows are items, columns are member models.
class DesignMatrix {
 public:
  DesignMatrix() = default;
  DesignMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  // Subset of rows, in the given order.
  DesignMatrix select_rows(std::span<const std::size_t> indices) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct RidgeModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double alpha = 0.0;

  double predict(std::span<const double> features) const;
};

// Ridge regression with an unpenalized intercept: columns and targets are
// mean-centered, (XcT Xc + alpha I) w = XcT yc is solved by Cholesky, and the
// intercept restores the means.
RidgeModel ridge_fit(const DesignMatrix& x, std::span<const double> y, double alpha);

struct CvResult {
  double best_alpha = 0.0;
  // (alpha, mean held-out squared error) in grid order. A singular fit at
  // alpha 0 scores +inf.
  std::vector<std::pair<double, double>> errors;
};

// k-fold cross-validation over `grid`. Rows are shuffled with `seed` and cut
// into k contiguous folds; the score is the mean over folds of the held-out
// mean squared error. Ties go to the larger alpha.
CvResult cv_select_alpha(const DesignMatrix& x, std::span<const double> y,
                         std::span<const double> grid, int k, std::uint64_t seed);

// Fold index for every row, as used by cv_select_alpha.
std::vector<int> cv_fold_assignment(std::size_t n, int k, std::uint64_t seed);

// Lower weighted median: after sorting by value, the first value whose
// cumulative weight reaches half of the total.
double weighted_median(std::span<const double> values, std::span<const double> weights);

}  // namespace aes
