#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace aes {

inline constexpr int kMinScore = 0;
inline constexpr int kMaxScore = 4;
inline constexpr int kNumScores = kMaxScore - kMinScore + 1;

struct EssayRecord {
  long long essay_id = 0;
  int prompt_id = 0;
  std::string text;
  int rater1_score = 0;
  int rater2_score = 0;
  int resolution_score = 0;
};

// Resolution keeps the higher of the two ratings.
constexpr int resolve_score(int rater1, int rater2) { return rater1 > rater2 ? rater1 : rater2; }

// Replaces every invalid UTF-8 sequence with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

// Number of maximal runs of non-whitespace characters.
std::size_t count_words(std::string_view text);

// Reads an ASAP-schema tab-separated file, keeping rows whose essay_set
// equals `prompt_filter`. Columns are located by header name; extra columns
// are allowed. Errors name the 1-based line number.
std::vector<EssayRecord> load_corpus(const std::filesystem::path& path, int prompt_filter);

enum class Split { Train, Validation, Test };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct SplitRatios {
  double train = 0.70;
  double validation = 0.10;
  double test = 0.20;
};

struct SplitAssignment {
  std::map<long long, Split> assignment;
  std::uint64_t seed = 0;

  std::vector<long long> ids(Split s) const;
  std::size_t count(Split s) const;
  Split at(long long essay_id) const;
};

// Seeded shuffle (of essays ordered by id) then contiguous slicing into
// train/validation/test. Validation and test sizes are floor(n * ratio);
// the remainder goes to train.
SplitAssignment split(const std::vector<EssayRecord>& corpus, std::uint64_t seed,
                      const SplitRatios& ratios = {});

// `essay_id,split` with split in {train,val,test}, rows ordered by essay_id.
std::string format_split_manifest(const SplitAssignment& split);
SplitAssignment read_split_manifest(const std::filesystem::path& path);

struct ScoreHistogram {
  std::array<std::size_t, kNumScores> counts{};

  std::size_t total() const;
  std::array<double, kNumScores> percents() const;
};

ScoreHistogram score_distribution(const std::vector<EssayRecord>& corpus);

struct LengthStats {
  std::size_t min = 0;
  std::size_t max = 0;
  double mean = 0.0;
};

LengthStats length_stats(const std::vector<EssayRecord>& corpus);

// Shared by rationale statistics: min/max/mean of a non-empty sequence.
LengthStats summarize_lengths(const std::vector<std::size_t>& lengths);

}  // namespace aes
