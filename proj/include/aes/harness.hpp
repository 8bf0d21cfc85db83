#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aes/corpus.hpp"
#include "aes/ensemble.hpp"
#include "aes/metrics.hpp"
#include "aes/rationale.hpp"

namespace aes {

struct RunConfig {
  std::filesystem::path corpus;
  int prompt = 6;
  std::uint64_t seed = 42;
  SplitRatios ratios;
  std::filesystem::path split_manifest;  // empty: derive from corpus + seed
  std::filesystem::path members;         // member manifest
  std::filesystem::path out_dir = "out";
  EnsembleSpec ensemble;

  // rationales
  PromptConfig prompt_config;
  HttpProviderConfig provider;
  int concurrency = 4;
  int max_attempts = 5;
  std::filesystem::path journal;  // empty: <out>/journal_<generator>.ndjson
};

// Applies a JSON override document. Top-level keys override EnsembleSpec
// defaults (elite_threshold, elite_anchors, confidence_threshold, tier_low,
// tier_high, tier_delta, alpha_grid, k_folds, correlation); optional
// "split", "prompt" and "provider" objects carry the remaining settings.
// Relative file paths resolve against the config file's directory.
void apply_config_file(const std::filesystem::path& path, RunConfig& config);

// Member manifest `model_id,source_tag,path`; prediction files
// `essay_id,prediction`. Predictions are clipped to [0, 4].
std::vector<PredictionSet> load_members(const std::filesystem::path& manifest);
PredictionSet load_member_file(const std::filesystem::path& path, std::string model_id,
                               Source source);

// The four member filters and their caption tags.
struct MemberFilter {
  std::string tag;  // ens-essay, ens-essay+A, ens-essay+B, ens-all
  std::string title;
  std::vector<Source> sources;
};
const std::vector<MemberFilter>& member_filters();

struct ReportTable {
  std::string caption_tag;
  std::string title;
  std::vector<EvalReport> rows;
};

// Table CSV: kEvalCsvHeader plus one row per EvalReport in table order.
std::string format_table_csv(const ReportTable& table);

struct IngestSummary {
  std::size_t essays = 0;
  ScoreHistogram histogram;
  LengthStats lengths;
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

// Loads the corpus, writes <out>/split.csv and <out>/corpus_summary.json.
IngestSummary cmd_ingest(const RunConfig& config, std::ostream& log);

struct RationaleRunSummary {
  BatchResult batch;
  std::optional<RationaleStats> stats;
  std::optional<double> direct_qwk;  // parsed LLM score vs resolution score
};

RationaleRunSummary cmd_rationales(const RunConfig& config, ChatProvider& provider,
                                   std::ostream& log);

// One table per source tag over the test split; written to
// <out>/tables/<tag>.csv.
std::vector<ReportTable> cmd_evaluate(const RunConfig& config, std::ostream& log);

// All strategies for every member filter: fit on validation, score test.
// Per-essay outputs go to <out>/ensemble/<filter>/<strategy>.csv with a JSON
// audit sidecar; tables to <out>/tables/<filter>.csv.
std::vector<ReportTable> cmd_ensemble(const RunConfig& config, std::ostream& log);

struct ReportSummary {
  std::size_t tables_present = 0;
  std::size_t tables_missing = 0;
  std::size_t tables_verified = 0;
  std::vector<std::string> mismatches;
};

// Collects tables into <out>/report.md and <out>/report.json. When a corpus
// is configured, ensemble tables are recomputed from the per-essay outputs
// and compared byte-for-byte with the stored tables.
ReportSummary cmd_report(const RunConfig& config, std::ostream& log);

// Shared plumbing, exposed for tests.
struct EvaluationData {
  std::vector<EssayRecord> corpus;
  SplitAssignment split;
};
EvaluationData load_evaluation_data(const RunConfig& config);

// Recomputes one ensemble table from <out>/ensemble/<filter>/.
std::string recompute_ensemble_table(const RunConfig& config, const EvaluationData& data,
                                     const MemberFilter& filter);

inline constexpr std::array<const char*, 7> kReportTags = {
    "essay", "rationale-A", "rationale-B", "ens-essay", "ens-essay+B", "ens-essay+A", "ens-all"};

}  // namespace aes
