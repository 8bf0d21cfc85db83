#include "aes/rationale.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "aes/csv.hpp"
#include "aes/error.hpp"

namespace aes {

const std::string_view kDefaultRubric =
    "4: The response is a clear, complete, and accurate description of the obstacles the "
    "builders of the Empire State Building faced in attempting to allow dirigibles to dock "
    "there. The response includes relevant and specific information from the excerpt.\n"
    "3: The response is a mostly clear, complete, and accurate description of the obstacles "
    "the builders of the Empire State Building faced in attempting to allow dirigibles to dock "
    "there. The response includes relevant but often general information from the excerpt.\n"
    "2: The response is a partial description of the obstacles the builders of the Empire "
    "State Building faced in attempting to allow dirigibles to dock there. The response "
    "includes limited information from the excerpt and may include misinterpretations.\n"
    "1: The response is a minimal description of the obstacles the builders of the Empire "
    "State Building faced in attempting to allow dirigibles to dock there. The response "
    "includes little or no information from the excerpt and may include misinterpretations. "
    "OR The response relates minimally to the task.\n"
    "0: The response is totally incorrect or irrelevant or contains insufficient evidence to "
    "demonstrate comprehension.";

const std::string_view kDirigibleScoringNotes =
    "The obstacles to dirigible docking include:\n"
    "1. Building a mast on top of the building\n"
    "2. Meeting with engineers and dirigible engineers\n"
    "3. Transmitting the stress of the dirigible all the way down the building; the frame had "
    "to be shored up to the tune of $60,000\n"
    "4. Housing the winches and other docking equipment\n"
    "5. Dealing with flammable gases\n"
    "6. Handling the violent air currents at the top of the building\n"
    "7. Confronting laws banning airships from the area\n"
    "8. Getting close enough to the building without puncturing\n"
    "Other explanations will be accepted if supported by relevant evidence from the text.";

namespace {

constexpr std::string_view kTask =
    "TASK\n\n"
    "You are an experienced essay grader. Score the following essay holistically using the "
    "provided rubric.\n\n";

constexpr std::string_view kInstructions =
    "INSTRUCTIONS:\n\n"
    "1. Read the passage, prompt, and student essay carefully\n"
    "2. Evaluate the essay holistically against the rubric\n"
    "3. Assign ONE score from 0 to 4\n"
    "4. Provide a detailed rationale explaining why this score was assigned\n"
    "5. Reference specific elements from the essay in your rationale but do not repeat the "
    "rubric\n";

constexpr std::string_view kSuccinctness =
    "6. Keep the rationale focused and avoid unnecessary verbosity\n"
    "7. Use direct, clear language without excessive elaboration\n"
    "8. Focus on the key strengths and weaknesses that determined the score\n"
    "9. Each rationale should Not be more than 512 tokens\n";

constexpr std::string_view kResponseFormat =
    "Please respond in the following format:\n\n"
    "SCORE: [0-4]\n\n"
    "RATIONALE: [Detailed explanation of why this score was assigned, with specific references "
    "to the essay content and how it aligns with the rubric criteria]\n";

constexpr std::string_view kSpace = " \t\r\n\f\v";

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(kSpace);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(kSpace) - b + 1);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && lower(s.substr(0, prefix.size())) == lower(prefix);
}

}  // namespace

double default_temperature(std::string_view generator_id) {
  return generator_id.find("4.1") != std::string_view::npos ? 0.2 : 1.0;
}

double PromptConfig::effective_temperature() const {
  return temperature.value_or(default_temperature(generator_id));
}

std::string build_prompt(const EssayRecord& essay, const PromptConfig& config) {
  if (trim(essay.text).empty()) {
    throw DataError("build_prompt: essay " + std::to_string(essay.essay_id) + " has empty text");
  }
  if (trim(config.passage).empty() || trim(config.writing_prompt).empty() ||
      trim(config.rubric_text).empty()) {
    throw DataError("build_prompt: passage, writing prompt and rubric must be non-empty");
  }
  std::string out;
  out.reserve(config.passage.size() + essay.text.size() + 4096);
  out += kTask;
  out += "READING PASSAGE:\n\n";
  out += trim(config.passage);
  out += "\n\nESSAY PROMPT:\n\n";
  out += trim(config.writing_prompt);
  out += "\n\nSTUDENT ESSAY:\n\n";
  out += trim(essay.text);
  out += "\n\nSCORING RUBRIC (Holistic - Single Score from 0 to 4):\n\n";
  out += trim(config.rubric_text);
  out += "\n\n";
  out += kInstructions;
  if (config.succinctness_addendum) out += kSuccinctness;
  out += '\n';
  if (config.scoring_notes && !trim(*config.scoring_notes).empty()) {
    out += "SCORING NOTES:\n\n";
    out += trim(*config.scoring_notes);
    out += "\n\n";
  }
  out += kResponseFormat;
  return out;
}

ParsedResponse parse_response(std::string_view raw) {
  constexpr std::string_view kScore = "SCORE:";
  constexpr std::string_view kRationale = "RATIONALE:";

  std::optional<std::string_view> score_text;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    const auto nl = raw.find('\n', pos);
    const auto line = raw.substr(pos, nl == std::string_view::npos ? raw.size() - pos : nl - pos);
    const auto t = trim(line);
    if (starts_with_ci(t, kScore)) {
      score_text = trim(t.substr(kScore.size()));
      break;
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (!score_text) throw ParseError("response has no SCORE: line", std::string(raw));

  // The score line may also carry the rationale marker ("SCORE: 3 RATIONALE: ...").
  auto digits = *score_text;
  if (const auto cut = lower(digits).find("rationale:"); cut != std::string::npos) {
    digits = trim(digits.substr(0, cut));
  }
  long long score = 0;
  try {
    score = csv::parse_int(digits);
  } catch (const DataError&) {
    throw ParseError("SCORE is not an integer: '" + std::string(digits) + "'", std::string(raw));
  }
  if (score < kMinScore || score > kMaxScore) {
    throw ParseError("SCORE " + std::to_string(score) + " outside 0-4", std::string(raw));
  }

  const auto marker = lower(raw).find(lower(kRationale));
  if (marker == std::string::npos) {
    throw ParseError("response has no RATIONALE: marker", std::string(raw));
  }
  return {static_cast<int>(score), std::string(trim(raw.substr(marker + kRationale.size())))};
}

std::size_t estimate_tokens(std::size_t word_count) {
  // Integer form of ceil(words * 1.35).
  return (word_count * 135 + 99) / 100;
}

RationaleRecord make_record(long long essay_id, std::string generator_id, std::string raw) {
  auto parsed = parse_response(raw);
  RationaleRecord r;
  r.essay_id = essay_id;
  r.generator_id = std::move(generator_id);
  r.parsed_score = parsed.score;
  r.rationale_text = std::move(parsed.rationale);
  r.word_count = count_words(r.rationale_text);
  r.estimated_tokens = estimate_tokens(r.word_count);
  r.over_limit = r.estimated_tokens > kTokenLimit;
  r.raw_response = std::move(raw);
  return r;
}

RationaleStats rationale_stats(std::span<const RationaleRecord> records) {
  std::vector<std::size_t> words;
  RationaleStats s;
  for (const auto& r : records) {
    words.push_back(r.word_count);
    if (r.over_limit) ++s.over_limit;
  }
  s.words = summarize_lengths(words);
  return s;
}

std::string format_rationales_csv(std::span<const RationaleRecord> records) {
  std::string out(kRationaleCsvHeader);
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.essay_id);
    out += ',';
    out += csv::quote(r.generator_id);
    out += ',';
    out += std::to_string(r.parsed_score);
    out += ',';
    out += std::to_string(r.word_count);
    out += ',';
    out += r.over_limit ? "true" : "false";
    out += ',';
    out += csv::quote_always(r.rationale_text);
    out += '\n';
  }
  return out;
}

}  // namespace aes
