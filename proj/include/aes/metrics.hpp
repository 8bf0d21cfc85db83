#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aes/corpus.hpp"

namespace aes {

// Which text a member model was trained on.
enum class Source { Essay, RationaleA, RationaleB };

std::string_view source_name(Source s);
Source parse_source(std::string_view name);

// Square count matrix, rows = truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int k);

  int k() const noexcept { return k_; }
  long long at(int truth, int pred) const { return counts_[index(truth, pred)]; }
  void add(int truth, int pred, long long n = 1);
  long long total() const noexcept;
  long long row_total(int truth) const;
  long long col_total(int pred) const;
  bool is_diagonal() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t index(int truth, int pred) const;

  int k_;
  std::vector<long long> counts_;
};

struct BinaryCounts {
  long long tp = 0;
  long long fp = 0;
  long long tn = 0;
  long long fn = 0;

  long long total() const noexcept { return tp + fp + tn + fn; }
};

// One-vs-rest counts for `label`.
BinaryCounts one_vs_rest(const ConfusionMatrix& cm, int label);

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, int k);

// Quadratic-weighted kappa over labels 0..k-1. Throws UndefinedMetricError
// when the expected weighted disagreement is zero.
double qwk(const ConfusionMatrix& cm);
double qwk(std::span<const int> truth, std::span<const int> pred, int k = kNumScores);

// 2 (TP TN - FN FP) / ((TP+FP)(FP+TN) + (TP+FN)(FN+TN))
double binary_kappa_eq1(const BinaryCounts& c);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Per class, one-vs-rest. Any 0/0 resolves to 0.
std::vector<ClassScores> per_class_prf(const ConfusionMatrix& cm);

// Pearson correlation of mid-ranks. Throws UndefinedMetricError when either
// input is constant.
double spearman(std::span<const double> x, std::span<const double> y);

// Mid-ranks (1-based), ties share the mean of their rank block.
std::vector<double> average_ranks(std::span<const double> values);

enum class SpearmanBasis { Continuous, Integer };

struct EvalReport {
  std::string model_id;
  std::string source;  // source tag for members, caption tag for ensembles
  std::optional<double> qwk;
  std::optional<double> spearman;
  SpearmanBasis spearman_basis = SpearmanBasis::Continuous;
  std::array<double, kNumScores> f1{};
  std::string note;  // why a metric is undefined, empty otherwise
};

// QWK and F1 from integer scores; Spearman from `continuous` when given,
// otherwise from the integer scores. Undefined metrics are left empty and
// explained in `note`.
EvalReport evaluate(std::string model_id, std::string source, std::span<const int> truth,
                    std::span<const int> scores,
                    std::optional<std::span<const double>> continuous = std::nullopt);

inline constexpr std::string_view kEvalCsvHeader =
    "model_id,source,qwk,spearman,f1_0,f1_1,f1_2,f1_3,f1_4";

// `model_id,source,qwk,spearman,f1_0..f1_4`, 4-decimal fixed point;
// undefined metrics print as "undefined".
std::string format_eval_row(const EvalReport& r);

// Sorted by QWK descending, undefined rows last, ties by model_id.
void sort_by_qwk(std::vector<EvalReport>& rows);

}  // namespace aes
