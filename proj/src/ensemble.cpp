#include "aes/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "aes/error.hpp"

namespace aes {

double PredictionSet::at(long long essay_id) const {
  const auto it = predictions.find(essay_id);
  if (it == predictions.end()) {
    throw DataError("member " + member_key(*this) + " has no prediction for essay " +
                    std::to_string(essay_id));
  }
  return it->second;
}

bool canonical_less(const PredictionSet& a, const PredictionSet& b) {
  const auto sa = source_name(a.source);
  const auto sb = source_name(b.source);
  if (sa != sb) return sa < sb;
  return a.model_id < b.model_id;
}

std::string member_key(const PredictionSet& p) {
  return std::string(source_name(p.source)) + "/" + p.model_id;
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::QwkOptimized:
      return "QWK Optimized Ensemble";
    case Strategy::Elite:
      return "Elite Ensemble";
    case Strategy::WeightedMedian:
      return "Weighted Median";
    case Strategy::ConfidenceWeighted:
      return "Confidence Weighted";
    case Strategy::Tiered:
      return "Tiered Ensemble";
    case Strategy::Stacking:
      return "Stacking Ensemble";
    case Strategy::CorrelationOptimized:
      return "Correlation Optimized";
  }
  return "?";
}

std::string_view strategy_slug(Strategy s) {
  switch (s) {
    case Strategy::QwkOptimized:
      return "qwk_optimized";
    case Strategy::Elite:
      return "elite";
    case Strategy::WeightedMedian:
      return "weighted_median";
    case Strategy::ConfidenceWeighted:
      return "confidence_weighted";
    case Strategy::Tiered:
      return "tiered";
    case Strategy::Stacking:
      return "stacking";
    case Strategy::CorrelationOptimized:
      return "correlation_optimized";
  }
  return "?";
}

Strategy parse_strategy(std::string_view slug) {
  for (auto s : kAllStrategies) {
    if (strategy_slug(s) == slug) return s;
  }
  throw DataError("unknown strategy '" + std::string(slug) + "'");
}

void EnsembleSpec::validate() const {
  auto in_range = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (!(elite_threshold > 0.0 && elite_threshold < 1.0)) {
    throw DataError("elite_threshold must lie in (0, 1)");
  }
  if (!in_range(confidence_threshold, 0.0, 1.0)) {
    throw DataError("confidence_threshold must lie in [0, 1]");
  }
  if (!in_range(tier_low, 0.0, 4.0) || !in_range(tier_high, 0.0, 4.0) || tier_low > tier_high) {
    throw DataError("tier thresholds must satisfy 0 <= tier_low <= tier_high <= 4");
  }
  if (!(tier_delta >= 0.0) || !std::isfinite(tier_delta)) {
    throw DataError("tier_delta must be >= 0");
  }
  double anchor_mass = 0.0;
  for (const auto& a : elite_anchors) {
    if (!(a.weight > 0.0)) throw DataError("elite anchor weights must be positive");
    anchor_mass += a.weight;
  }
  if (anchor_mass > 1.0 + 1e-12) throw DataError("elite anchor weights exceed 1");
  if (alpha_grid.empty()) throw DataError("alpha_grid is empty");
  for (double a : alpha_grid) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw DataError("alpha_grid values must be >= 0");
  }
  if (k_folds < 2) throw DataError("k_folds must be >= 2");
  if (member_filter.empty()) throw DataError("member filter is empty");
}

int finalize(double blend) {
  if (!std::isfinite(blend)) throw NumericError("finalize: non-finite blend");
  const double clipped = std::clamp(blend, static_cast<double>(kMinScore),
                                    static_cast<double>(kMaxScore));
  return static_cast<int>(std::floor(clipped + 0.5));
}

double prediction_confidence(double prediction) {
  return 1.0 - std::abs(prediction - std::floor(prediction + 0.5));
}

double qwk_exponential_weight(double qwk) { return std::exp(5.0 * (qwk - 0.8)); }

double correlation_weight(double qwk, double correlation) {
  if (qwk <= 0.0) return 0.0;
  return qwk * qwk * qwk * (1.0 + correlation);
}

namespace {

std::vector<PredictionSet> canonical(std::span<const PredictionSet> members) {
  if (members.empty()) throw DataError("ensemble: no members");
  std::vector<PredictionSet> out(members.begin(), members.end());
  std::stable_sort(out.begin(), out.end(), canonical_less);
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (member_key(out[i - 1]) == member_key(out[i])) {
      throw DataError("ensemble: duplicate member " + member_key(out[i]));
    }
  }
  return out;
}

std::vector<double> normalized(std::vector<double> w, std::string_view what) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DataError(std::string(what) + ": weights sum to zero");
  }
  for (auto& v : w) v /= total;
  return w;
}

std::vector<std::string> keys(const std::vector<PredictionSet>& members) {
  std::vector<std::string> out;
  out.reserve(members.size());
  for (const auto& m : members) out.push_back(member_key(m));
  return out;
}

// Weighted mean per essay with fixed member weights.
EnsembleOutput weighted_average(const std::vector<PredictionSet>& members,
                                std::span<const long long> essays, std::vector<double> weights,
                                Strategy strategy) {
  EnsembleOutput out;
  out.audit.strategy = std::string(strategy_slug(strategy));
  out.audit.member_order = keys(members);
  out.essay_ids.assign(essays.begin(), essays.end());
  out.blend.reserve(essays.size());
  double total = 0.0;
  for (double w : weights) total += w;
  for (auto id : essays) {
    double s = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (weights[i] == 0.0) continue;
      const double p = members[i].at(id);
      s += weights[i] * p;
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
    // The clamp only removes rounding excursions outside the hull, so that
    // unanimous members give back their value exactly.
    out.blend.push_back(std::clamp(s / total, lo, hi));
  }
  for (double b : out.blend) out.final_scores.push_back(finalize(b));
  out.audit.weights = std::move(weights);
  return out;
}

}  // namespace

std::vector<double> member_weights_qwk(std::span<const PredictionSet> members) {
  if (members.empty()) throw DataError("QWK weights: no members");
  std::vector<double> raw;
  raw.reserve(members.size());
  for (const auto& m : members) raw.push_back(qwk_exponential_weight(m.val_qwk));
  return normalized(std::move(raw), "QWK weights");
}

std::vector<double> member_weights_elite(std::span<const PredictionSet> members,
                                         const EnsembleSpec& spec) {
  std::vector<double> w(members.size(), 0.0);
  std::vector<std::size_t> others;
  double anchor_mass = 0.0;
  bool any_elite = false;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto& m = members[i];
    if (!(m.val_qwk > spec.elite_threshold)) continue;
    any_elite = true;
    const auto anchor = std::find_if(spec.elite_anchors.begin(), spec.elite_anchors.end(),
                                     [&](const EliteAnchor& a) {
                                       return a.model_id == m.model_id && a.source == m.source;
                                     });
    if (anchor != spec.elite_anchors.end()) {
      w[i] = anchor->weight;
      anchor_mass += anchor->weight;
    } else {
      others.push_back(i);
    }
  }
  if (!any_elite) {
    throw DataError("elite ensemble: no member has validation QWK above " +
                    std::to_string(spec.elite_threshold));
  }
  if (others.empty()) return normalized(std::move(w), "elite weights");

  // Rank by validation QWK, best first; ties keep the given member order.
  std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
    return members[a].val_qwk > members[b].val_qwk;
  });
  const double residual = 1.0 - anchor_mass;
  const auto count = static_cast<double>(others.size());
  const double rank_total = count * (count + 1.0) / 2.0;
  for (std::size_t r = 0; r < others.size(); ++r) {
    w[others[r]] = residual * (count - static_cast<double>(r)) / rank_total;
  }
  return normalized(std::move(w), "elite weights");
}

std::vector<double> member_weights_correlation(std::span<const PredictionSet> members,
                                               CorrelationKind kind) {
  if (members.empty()) throw DataError("correlation weights: no members");
  std::vector<double> raw;
  raw.reserve(members.size());
  for (const auto& m : members) {
    const double corr = kind == CorrelationKind::Spearman ? m.val_spearman : m.val_pearson;
    raw.push_back(correlation_weight(m.val_qwk, corr));
  }
  return normalized(std::move(raw), "correlation weights");
}

EnsembleOutput blend_qwk_optimized(std::span<const PredictionSet> members,
                                   std::span<const long long> essays) {
  const auto ordered = canonical(members);
  return weighted_average(ordered, essays, member_weights_qwk(ordered), Strategy::QwkOptimized);
}

EnsembleOutput blend_elite(std::span<const PredictionSet> members,
                           std::span<const long long> essays, const EnsembleSpec& spec) {
  const auto ordered = canonical(members);
  return weighted_average(ordered, essays, member_weights_elite(ordered, spec), Strategy::Elite);
}

EnsembleOutput blend_weighted_median(std::span<const PredictionSet> members,
                                     std::span<const long long> essays) {
  const auto ordered = canonical(members);
  const auto weights = member_weights_qwk(ordered);
  EnsembleOutput out;
  out.audit.strategy = std::string(strategy_slug(Strategy::WeightedMedian));
  out.audit.member_order = keys(ordered);
  out.essay_ids.assign(essays.begin(), essays.end());
  std::vector<double> values(ordered.size());
  for (auto id : essays) {
    for (std::size_t i = 0; i < ordered.size(); ++i) values[i] = ordered[i].at(id);
    const double b = weighted_median(values, weights);
    out.blend.push_back(b);
    out.final_scores.push_back(finalize(b));
  }
  out.audit.weights = weights;
  return out;
}

EnsembleOutput blend_confidence_weighted(std::span<const PredictionSet> members,
                                         std::span<const long long> essays,
                                         const EnsembleSpec& spec) {
  const auto ordered = canonical(members);
  EnsembleOutput out;
  out.audit.strategy = std::string(strategy_slug(Strategy::ConfidenceWeighted));
  out.audit.member_order = keys(ordered);
  out.essay_ids.assign(essays.begin(), essays.end());
  for (auto id : essays) {
    double num = 0.0;
    double den = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    auto take = [&](double p, double c) {
      num += c * c * p;
      den += c * c;
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    };
    for (const auto& m : ordered) {
      const double p = m.at(id);
      const double c = prediction_confidence(p);
      if (c > spec.confidence_threshold) take(p, c);
    }
    if (den == 0.0) {
      ++out.audit.fallback_essays;
      for (const auto& m : ordered) {
        const double p = m.at(id);
        take(p, prediction_confidence(p));
      }
    }
    const double b = std::clamp(num / den, lo, hi);
    out.blend.push_back(b);
    out.final_scores.push_back(finalize(b));
  }
  return out;
}

EnsembleOutput blend_tiered(std::span<const PredictionSet> members,
                            std::span<const long long> essays, const EnsembleSpec& spec) {
  auto out = blend_elite(members, essays, spec);
  out.audit.strategy = std::string(strategy_slug(Strategy::Tiered));
  for (std::size_t i = 0; i < out.blend.size(); ++i) {
    double b = out.blend[i];
    if (b < spec.tier_low) {
      b -= spec.tier_delta;
      ++out.audit.adjusted_essays;
    } else if (b > spec.tier_high) {
      b += spec.tier_delta;
      ++out.audit.adjusted_essays;
    }
    out.blend[i] = std::clamp(b, static_cast<double>(kMinScore), static_cast<double>(kMaxScore));
    out.final_scores[i] = finalize(out.blend[i]);
  }
  return out;
}

EnsembleOutput blend_correlation_optimized(std::span<const PredictionSet> members,
                                           std::span<const long long> essays,
                                           const EnsembleSpec& spec) {
  const auto ordered = canonical(members);
  return weighted_average(ordered, essays, member_weights_correlation(ordered, spec.correlation),
                          Strategy::CorrelationOptimized);
}

StackingModel stacking_fit(std::span<const PredictionSet> members,
                           const std::map<long long, int>& validation_truth,
                           const EnsembleSpec& spec, std::uint64_t seed) {
  const auto ordered = canonical(members);
  if (validation_truth.size() < static_cast<std::size_t>(spec.k_folds)) {
    throw DataError("stacking: validation split has fewer essays than folds");
  }
  DesignMatrix x(validation_truth.size(), ordered.size());
  std::vector<double> y;
  y.reserve(validation_truth.size());
  std::size_t r = 0;
  for (const auto& [id, truth] : validation_truth) {
    for (std::size_t c = 0; c < ordered.size(); ++c) x(r, c) = ordered[c].at(id);
    y.push_back(static_cast<double>(truth));
    ++r;
  }
  StackingModel model;
  model.member_order = keys(ordered);
  model.cv = cv_select_alpha(x, y, spec.alpha_grid, spec.k_folds, seed);
  model.ridge = ridge_fit(x, y, model.cv.best_alpha);
  return model;
}

EnsembleOutput stacking_predict(const StackingModel& model, std::span<const PredictionSet> members,
                                std::span<const long long> essays) {
  const auto ordered = canonical(members);
  if (keys(ordered) != model.member_order) {
    throw DataError("stacking: members do not match the fitted member order");
  }
  EnsembleOutput out;
  out.audit.strategy = std::string(strategy_slug(Strategy::Stacking));
  out.audit.member_order = model.member_order;
  out.audit.weights = model.ridge.weights;
  out.audit.alpha = model.ridge.alpha;
  out.audit.intercept = model.ridge.intercept;
  out.audit.cv_errors = model.cv.errors;
  out.essay_ids.assign(essays.begin(), essays.end());
  std::vector<double> features(ordered.size());
  for (auto id : essays) {
    for (std::size_t c = 0; c < ordered.size(); ++c) features[c] = ordered[c].at(id);
    const double b = std::clamp(model.ridge.predict(features), static_cast<double>(kMinScore),
                                static_cast<double>(kMaxScore));
    out.blend.push_back(b);
    out.final_scores.push_back(finalize(b));
  }
  return out;
}

std::vector<PredictionSet> filter_members(std::span<const PredictionSet> members,
                                          std::span<const Source> filter) {
  std::vector<PredictionSet> out;
  for (const auto& m : members) {
    if (std::find(filter.begin(), filter.end(), m.source) != filter.end()) out.push_back(m);
  }
  return out;
}

void compute_validation_stats(PredictionSet& member, const std::map<long long, int>& truth,
                              std::span<const long long> validation_ids) {
  std::vector<int> t;
  std::vector<int> rounded;
  std::vector<double> tc;
  std::vector<double> pc;
  for (auto id : validation_ids) {
    const auto it = truth.find(id);
    if (it == truth.end()) throw DataError("no truth for validation essay " + std::to_string(id));
    const double p = member.at(id);
    t.push_back(it->second);
    tc.push_back(it->second);
    rounded.push_back(finalize(p));
    pc.push_back(p);
  }
  try {
    member.val_qwk = qwk(t, rounded);
  } catch (const UndefinedMetricError&) {
    member.val_qwk = 0.0;
  }
  try {
    member.val_spearman = spearman(tc, pc);
  } catch (const UndefinedMetricError&) {
    member.val_spearman = 0.0;
  }
  // Pearson on raw values.
  const double n = static_cast<double>(tc.size());
  const double mt = std::accumulate(tc.begin(), tc.end(), 0.0) / n;
  const double mp = std::accumulate(pc.begin(), pc.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < tc.size(); ++i) {
    sxy += (tc[i] - mt) * (pc[i] - mp);
    sxx += (tc[i] - mt) * (tc[i] - mt);
    syy += (pc[i] - mp) * (pc[i] - mp);
  }
  member.val_pearson = (sxx > 0.0 && syy > 0.0) ? sxy / std::sqrt(sxx * syy) : 0.0;
}

EnsembleOutput run_strategy(std::span<const PredictionSet> members, const EnsembleSpec& spec,
                            const std::map<long long, int>& validation_truth,
                            std::span<const long long> essays, std::uint64_t seed) {
  switch (spec.strategy) {
    case Strategy::QwkOptimized:
      return blend_qwk_optimized(members, essays);
    case Strategy::Elite:
      return blend_elite(members, essays, spec);
    case Strategy::WeightedMedian:
      return blend_weighted_median(members, essays);
    case Strategy::ConfidenceWeighted:
      return blend_confidence_weighted(members, essays, spec);
    case Strategy::Tiered:
      return blend_tiered(members, essays, spec);
    case Strategy::Stacking:
      return stacking_predict(stacking_fit(members, validation_truth, spec, seed), members,
                              essays);
    case Strategy::CorrelationOptimized:
      return blend_correlation_optimized(members, essays, spec);
  }
  throw DataError("unknown strategy");
}

}  // namespace aes
