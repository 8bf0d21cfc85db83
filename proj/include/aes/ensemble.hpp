#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aes/metrics.hpp"
#include "aes/numerics.hpp"

namespace aes {

// One member model's continuous predictions, keyed by essay_id, together
// with its validation statistics.
struct PredictionSet {
  std::string model_id;
  Source source = Source::Essay;
  std::map<long long, double> predictions;
  double val_qwk = 0.0;
  double val_spearman = 0.0;
  double val_pearson = 0.0;

  double at(long long essay_id) const;
};

// Canonical member order: (source tag, model_id), lexicographic.
bool canonical_less(const PredictionSet& a, const PredictionSet& b);
std::string member_key(const PredictionSet& p);  // "source/model_id"

enum class Strategy {
  QwkOptimized,
  Elite,
  WeightedMedian,
  ConfidenceWeighted,
  Tiered,
  Stacking,
  CorrelationOptimized,
};

inline constexpr std::array kAllStrategies = {
    Strategy::QwkOptimized,       Strategy::Elite,   Strategy::WeightedMedian,
    Strategy::ConfidenceWeighted, Strategy::Tiered,  Strategy::Stacking,
    Strategy::CorrelationOptimized,
};

std::string_view strategy_name(Strategy s);   // "QWK Optimized Ensemble", ...
std::string_view strategy_slug(Strategy s);   // "qwk_optimized", ...
Strategy parse_strategy(std::string_view slug);

enum class CorrelationKind { Spearman, Pearson };

struct EliteAnchor {
  std::string model_id;
  Source source = Source::Essay;
  double weight = 0.0;
};

struct EnsembleSpec {
  Strategy strategy = Strategy::QwkOptimized;
  std::vector<Source> member_filter{Source::Essay, Source::RationaleA, Source::RationaleB};

  double elite_threshold = 0.8;
  std::vector<EliteAnchor> elite_anchors{{"electra-large", Source::Essay, 0.35},
                                         {"deberta-v3-large", Source::Essay, 0.25}};
  double confidence_threshold = 0.6;
  double tier_low = 1.0;
  double tier_high = 3.0;
  double tier_delta = 0.1;
  std::vector<double> alpha_grid{0.01, 0.1, 1.0, 10.0, 100.0};
  int k_folds = 5;
  CorrelationKind correlation = CorrelationKind::Spearman;

  // Throws DataError on out-of-range parameters.
  void validate() const;
};

// Audit trail of a fitted strategy.
struct EnsembleAudit {
  std::string strategy;
  std::vector<std::string> member_order;
  std::vector<double> weights;  // normalized, in member_order; empty when per-essay
  std::optional<double> alpha;
  std::optional<double> intercept;
  std::vector<std::pair<double, double>> cv_errors;
  std::size_t fallback_essays = 0;  // confidence: essays where no member passed
  std::size_t adjusted_essays = 0;  // tiered: essays moved by tier_delta
};

struct EnsembleOutput {
  std::vector<long long> essay_ids;
  std::vector<double> blend;
  std::vector<int> final_scores;
  EnsembleAudit audit;
};

// clip(blend, 0, 4), then round half up.
int finalize(double blend);

// Distance-to-nearest-score confidence: 1 - |p - round(p)|, rounding half up.
double prediction_confidence(double prediction);

// exp(5 (qwk - 0.8))
double qwk_exponential_weight(double qwk);

// qwk^3 (1 + correlation), floored at zero for negative qwk.
double correlation_weight(double qwk, double correlation);

// Normalized exponential QWK weights, one per member in the given order.
std::vector<double> member_weights_qwk(std::span<const PredictionSet> members);

// Elite weights, one per member in the given order; dropped members get 0.
// Anchors present among the elites keep their fixed weight. The remaining
// mass goes to the other elites by linear rank on validation QWK (rank r of
// R gets mass proportional to R - r + 1). Without other elites the anchors
// are renormalized; without anchors the rank rule takes the full mass.
std::vector<double> member_weights_elite(std::span<const PredictionSet> members,
                                         const EnsembleSpec& spec);

std::vector<double> member_weights_correlation(std::span<const PredictionSet> members,
                                               CorrelationKind kind = CorrelationKind::Spearman);

// Every blend_* function evaluates the given essays, sorts members into
// canonical order first and returns finalized scores.
EnsembleOutput blend_qwk_optimized(std::span<const PredictionSet> members,
                                   std::span<const long long> essays);
EnsembleOutput blend_elite(std::span<const PredictionSet> members,
                           std::span<const long long> essays, const EnsembleSpec& spec);
EnsembleOutput blend_weighted_median(std::span<const PredictionSet> members,
                                     std::span<const long long> essays);
EnsembleOutput blend_confidence_weighted(std::span<const PredictionSet> members,
                                         std::span<const long long> essays,
                                         const EnsembleSpec& spec);
EnsembleOutput blend_tiered(std::span<const PredictionSet> members,
                            std::span<const long long> essays, const EnsembleSpec& spec);
EnsembleOutput blend_correlation_optimized(std::span<const PredictionSet> members,
                                           std::span<const long long> essays,
                                           const EnsembleSpec& spec = {});

struct StackingModel {
  RidgeModel ridge;
  std::vector<std::string> member_order;
  CvResult cv;
};

// Ridge meta-learner over member predictions on the validation essays.
// Alpha comes from cv_select_alpha(spec.alpha_grid, spec.k_folds, seed).
StackingModel stacking_fit(std::span<const PredictionSet> members,
                           const std::map<long long, int>& validation_truth,
                           const EnsembleSpec& spec, std::uint64_t seed);

EnsembleOutput stacking_predict(const StackingModel& model, std::span<const PredictionSet> members,
                                std::span<const long long> essays);

// Members whose source is in the filter.
std::vector<PredictionSet> filter_members(std::span<const PredictionSet> members,
                                          std::span<const Source> filter);

// Validation statistics from rounded (QWK) and continuous (correlations)
// predictions. An undefined QWK or correlation is recorded as 0.
void compute_validation_stats(PredictionSet& member, const std::map<long long, int>& truth,
                              std::span<const long long> validation_ids);

// Dispatch by spec.strategy. Only stacking reads `validation_truth`.
EnsembleOutput run_strategy(std::span<const PredictionSet> members, const EnsembleSpec& spec,
                            const std::map<long long, int>& validation_truth,
                            std::span<const long long> essays, std::uint64_t seed);

}  // namespace aes
