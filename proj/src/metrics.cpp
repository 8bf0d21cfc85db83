#include "aes/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aes/csv.hpp"
#include "aes/error.hpp"

namespace aes {

std::string_view source_name(Source s) {
  switch (s) {
    case Source::Essay:
      return "essay";
    case Source::RationaleA:
      return "rationale-A";
    case Source::RationaleB:
      return "rationale-B";
  }
  return "?";
}

Source parse_source(std::string_view name) {
  if (name == "essay") return Source::Essay;
  if (name == "rationale-A") return Source::RationaleA;
  if (name == "rationale-B") return Source::RationaleB;
  throw DataError("unknown source tag '" + std::string(name) +
                  "' (expected essay, rationale-A, rationale-B)");
}

ConfusionMatrix::ConfusionMatrix(int k) : k_(k) {
  if (k < 2) throw DataError("confusion matrix needs k >= 2");
  counts_.assign(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0);
}

std::size_t ConfusionMatrix::index(int truth, int pred) const {
  if (truth < 0 || truth >= k_ || pred < 0 || pred >= k_) {
    throw DataError("label out of range [0, " + std::to_string(k_ - 1) + "]");
  }
  return static_cast<std::size_t>(truth) * static_cast<std::size_t>(k_) +
         static_cast<std::size_t>(pred);
}

void ConfusionMatrix::add(int truth, int pred, long long n) {
  if (n < 0) throw DataError("negative count");
  counts_[index(truth, pred)] += n;
}

long long ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), 0LL);
}

long long ConfusionMatrix::row_total(int truth) const {
  long long s = 0;
  for (int p = 0; p < k_; ++p) s += at(truth, p);
  return s;
}

long long ConfusionMatrix::col_total(int pred) const {
  long long s = 0;
  for (int t = 0; t < k_; ++t) s += at(t, pred);
  return s;
}

bool ConfusionMatrix::is_diagonal() const {
  for (int t = 0; t < k_; ++t) {
    for (int p = 0; p < k_; ++p) {
      if (t != p && at(t, p) != 0) return false;
    }
  }
  return true;
}

BinaryCounts one_vs_rest(const ConfusionMatrix& cm, int label) {
  BinaryCounts c;
  c.tp = cm.at(label, label);
  c.fn = cm.row_total(label) - c.tp;
  c.fp = cm.col_total(label) - c.tp;
  c.tn = cm.total() - c.tp - c.fn - c.fp;
  return c;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, int k) {
  if (truth.size() != pred.size()) {
    throw DataError("confusion: truth has " + std::to_string(truth.size()) +
                    " labels, prediction has " + std::to_string(pred.size()));
  }
  if (truth.empty()) throw DataError("confusion: no items");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], pred[i]);
  return cm;
}

double qwk(const ConfusionMatrix& cm) {
  const int k = cm.k();
  const auto n = static_cast<double>(cm.total());
  if (n == 0) throw DataError("qwk: empty confusion matrix");
  std::vector<double> rows(static_cast<std::size_t>(k));
  std::vector<double> cols(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    rows[static_cast<std::size_t>(i)] = static_cast<double>(cm.row_total(i));
    cols[static_cast<std::size_t>(i)] = static_cast<double>(cm.col_total(i));
  }
  // With w_ij = (i-j)^2/(k-1)^2 and E_ij = r_i c_j / n the common factor
  // 1/(k-1)^2 cancels; both sums stay integer-valued, so the single division
  // below is the only rounding.
  double observed = 0.0;
  double expected = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double d2 = static_cast<double>((i - j) * (i - j));
      observed += d2 * static_cast<double>(cm.at(i, j));
      expected += d2 * rows[static_cast<std::size_t>(i)] * cols[static_cast<std::size_t>(j)];
    }
  }
  if (expected == 0.0) {
    throw UndefinedMetricError("qwk undefined: truth and prediction use one identical label");
  }
  return (expected - n * observed) / expected;
}

double qwk(std::span<const int> truth, std::span<const int> pred, int k) {
  return qwk(confusion(truth, pred, k));
}

double binary_kappa_eq1(const BinaryCounts& c) {
  if (c.tp < 0 || c.fp < 0 || c.tn < 0 || c.fn < 0) throw DataError("negative binary count");
  const auto num = 2.0 * (static_cast<double>(c.tp) * static_cast<double>(c.tn) -
                          static_cast<double>(c.fn) * static_cast<double>(c.fp));
  const auto den = static_cast<double>(c.tp + c.fp) * static_cast<double>(c.fp + c.tn) +
                   static_cast<double>(c.tp + c.fn) * static_cast<double>(c.fn + c.tn);
  if (den == 0.0) throw UndefinedMetricError("binary kappa undefined: zero denominator");
  return num / den;
}

std::vector<ClassScores> per_class_prf(const ConfusionMatrix& cm) {
  auto ratio = [](long long num, long long den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  std::vector<ClassScores> out;
  out.reserve(static_cast<std::size_t>(cm.k()));
  for (int c = 0; c < cm.k(); ++c) {
    const auto b = one_vs_rest(cm, c);
    ClassScores s;
    s.recall = ratio(b.tp, b.tp + b.fn);
    s.precision = ratio(b.tp, b.tp + b.fp);
    s.f1 = ratio(2 * b.tp, 2 * b.tp + b.fp + b.fn);
    out.push_back(s);
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // Positions i..j-1 hold ranks i+1..j; each gets their mean.
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("spearman: length mismatch");
  if (x.size() < 2) throw DataError("spearman: need at least two items");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw DataError("spearman: non-finite value");
    }
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedMetricError("spearman undefined: constant sequence");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

EvalReport evaluate(std::string model_id, std::string source, std::span<const int> truth,
                    std::span<const int> scores,
                    std::optional<std::span<const double>> continuous) {
  EvalReport r;
  r.model_id = std::move(model_id);
  r.source = std::move(source);
  const auto cm = confusion(truth, scores, kNumScores);
  try {
    r.qwk = qwk(cm);
  } catch (const UndefinedMetricError& e) {
    r.note = e.what();
  }

  std::vector<double> t(truth.begin(), truth.end());
  std::vector<double> p;
  if (continuous) {
    p.assign(continuous->begin(), continuous->end());
    r.spearman_basis = SpearmanBasis::Continuous;
  } else {
    p.assign(scores.begin(), scores.end());
    r.spearman_basis = SpearmanBasis::Integer;
  }
  try {
    r.spearman = spearman(t, p);
  } catch (const UndefinedMetricError& e) {
    if (!r.note.empty()) r.note += "; ";
    r.note += e.what();
  }

  const auto prf = per_class_prf(cm);
  for (std::size_t c = 0; c < r.f1.size(); ++c) r.f1[c] = prf[c].f1;
  return r;
}

std::string format_eval_row(const EvalReport& r) {
  auto metric = [](const std::optional<double>& v) {
    return v ? csv::fixed(*v, 4) : std::string("undefined");
  };
  std::string out = csv::quote(r.model_id);
  out += ',';
  out += csv::quote(r.source);
  out += ',';
  out += metric(r.qwk);
  out += ',';
  out += metric(r.spearman);
  for (double f : r.f1) {
    out += ',';
    out += csv::fixed(f, 4);
  }
  return out;
}

void sort_by_qwk(std::vector<EvalReport>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const EvalReport& a, const EvalReport& b) {
    if (a.qwk.has_value() != b.qwk.has_value()) return a.qwk.has_value();
    if (a.qwk && *a.qwk != *b.qwk) return *a.qwk > *b.qwk;
    return a.model_id < b.model_id;
  });
}

}  // namespace aes
