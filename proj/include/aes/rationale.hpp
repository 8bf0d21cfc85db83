#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aes/corpus.hpp"

namespace aes {

// Holistic 0-4 rubric for the dirigible-docking prompt.
extern const std::string_view kDefaultRubric;
// Accepted obstacles to dirigible docking, appended as scoring notes.
extern const std::string_view kDirigibleScoringNotes;

inline constexpr std::size_t kTokenLimit = 512;

struct PromptConfig {
  std::string generator_id;
  std::optional<double> temperature;  // unset: default_temperature(generator_id)
  std::string passage;
  std::string writing_prompt;
  std::string rubric_text{kDefaultRubric};
  std::optional<std::string> scoring_notes;
  bool succinctness_addendum = false;

  double effective_temperature() const;
};

// 0.2 for GPT-4.1-family generators, 1.0 otherwise.
double default_temperature(std::string_view generator_id);

// Zero-shot scoring prompt: task, passage, essay prompt, student essay,
// rubric, instructions (plus the succinctness items when enabled), optional
// scoring notes and the SCORE/RATIONALE response format.
std::string build_prompt(const EssayRecord& essay, const PromptConfig& config);

struct ParsedResponse {
  int score = 0;
  std::string rationale;
};

// SCORE comes from the first line whose trimmed text starts with "SCORE:";
// the rationale is everything after the first "RATIONALE:", trimmed. Markers
// are case-insensitive. Throws ParseError carrying the raw text.
ParsedResponse parse_response(std::string_view raw);

// ceil(words * 1.35)
std::size_t estimate_tokens(std::size_t word_count);

struct RationaleRecord {
  long long essay_id = 0;
  std::string generator_id;
  int parsed_score = 0;
  std::string rationale_text;
  std::size_t word_count = 0;
  std::size_t estimated_tokens = 0;
  bool over_limit = false;
  std::string raw_response;

  friend bool operator==(const RationaleRecord&, const RationaleRecord&) = default;
};

RationaleRecord make_record(long long essay_id, std::string generator_id, std::string raw);

struct RationaleStats {
  LengthStats words;
  std::size_t over_limit = 0;
};

RationaleStats rationale_stats(std::span<const RationaleRecord> records);

inline constexpr std::string_view kRationaleCsvHeader =
    "essay_id,generator_id,score,word_count,over_limit,rationale";

// One row per record; the rationale field is always quoted.
std::string format_rationales_csv(std::span<const RationaleRecord> records);

// ---------------------------------------------------------------------------
// Provider

struct ChatRequest {
  std::string model;
  std::string prompt;
  double temperature = 1.0;
};

// Chat-completion endpoint. complete() returns the assistant text or throws
// ProviderError.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct HttpProviderConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::seconds timeout{300};
};

// OpenAI-style JSON chat completions over HTTP(S).
class HttpChatProvider final : public ChatProvider {
 public:
  explicit HttpChatProvider(HttpProviderConfig config);
  std::string complete(const ChatRequest& request) override;

  // Request body for (model, messages, temperature).
  static std::string request_body(const ChatRequest& request);
  // choices[0].message.content; throws ProviderError on anything else.
  static std::string extract_content(std::string_view response_body);

 private:
  HttpProviderConfig config_;
};

// ---------------------------------------------------------------------------
// Journal

enum class JournalStatus { Pending, Done, Failed };

std::string_view journal_status_name(JournalStatus s);

struct JournalEntry {
  long long essay_id = 0;
  JournalStatus status = JournalStatus::Pending;
  int attempts = 0;
  std::optional<RationaleRecord> record;  // present iff status == Done
  std::string error;
};

// Newline-delimited JSON: {"essay_id", "status", "attempts"} per line, done
// lines also carry the record. The file is an append log; the latest line
// for an essay wins.
class BatchJournal {
 public:
  // Missing file yields an empty journal. Any malformed line is an error.
  static BatchJournal load(const std::filesystem::path& path);

  const JournalEntry* find(long long essay_id) const;
  std::vector<JournalEntry> entries() const;  // one per essay, first-seen order
  std::size_t count(JournalStatus s) const;

  void set(JournalEntry entry);
  static std::string serialize(const JournalEntry& entry);

 private:
  std::vector<long long> order_;
  std::map<long long, JournalEntry> entries_;
};

struct BatchOptions {
  std::filesystem::path journal_path;
  int max_attempts = 5;
  std::chrono::milliseconds base_backoff{1000};
  int concurrency = 4;
  std::uint64_t seed = 0;  // jitter
  // Injected for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct BatchResult {
  std::vector<RationaleRecord> records;  // essay input order, successes only
  std::vector<long long> failed;
  std::size_t provider_calls = 0;
  std::size_t skipped = 0;  // already done in the journal
};

// Backoff before retry number `retry` (0-based): base * 2^retry plus a
// jitter drawn uniformly from [0, base).
std::chrono::milliseconds backoff_delay(std::chrono::milliseconds base, int retry,
                                        std::uint64_t seed);

// Scores every essay not already done in the journal. Transport failures are
// retried up to max_attempts; unparseable responses are journaled as failed
// without retry. Throws DataError (before any call) on a corrupt journal.
BatchResult run_batch(std::span<const EssayRecord> essays, const PromptConfig& config,
                      ChatProvider& provider, const BatchOptions& options);

}  // namespace aes
