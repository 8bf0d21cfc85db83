#include "aes/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "aes/csv.hpp"
#include "aes/error.hpp"
#include "aes/seed.hpp"

namespace aes {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kReplacement = "\xEF\xBF\xBD";

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

int parse_score(std::string_view field, std::size_t line_no, std::string_view column) {
  long long v = 0;
  try {
    v = csv::parse_int(field);
  } catch (const DataError&) {
    throw DataError("line " + std::to_string(line_no) + ": " + std::string(column) +
                    " is not an integer: '" + std::string(field) + "'");
  }
  if (v < kMinScore || v > kMaxScore) {
    throw DataError("line " + std::to_string(line_no) + ": " + std::string(column) + " = " +
                    std::to_string(v) + " outside 0-4");
  }
  return static_cast<int>(v);
}

}  // namespace

std::string sanitize_utf8(std::string_view bytes) {
  std::string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  const auto n = bytes.size();
  auto cont = [&](std::size_t k) {
    return k < n && (static_cast<unsigned char>(bytes[k]) & 0xC0) == 0x80;
  };
  while (i < n) {
    const auto c = static_cast<unsigned char>(bytes[i]);
    std::size_t len = 0;
    if (c < 0x80) {
      len = 1;
    } else if (c >= 0xC2 && c <= 0xDF) {
      len = cont(i + 1) ? 2 : 0;
    } else if (c >= 0xE0 && c <= 0xEF) {
      if (cont(i + 1) && cont(i + 2)) {
        const auto c1 = static_cast<unsigned char>(bytes[i + 1]);
        const bool overlong = c == 0xE0 && c1 < 0xA0;
        const bool surrogate = c == 0xED && c1 >= 0xA0;
        len = (overlong || surrogate) ? 0 : 3;
      }
    } else if (c >= 0xF0 && c <= 0xF4) {
      if (cont(i + 1) && cont(i + 2) && cont(i + 3)) {
        const auto c1 = static_cast<unsigned char>(bytes[i + 1]);
        const bool overlong = c == 0xF0 && c1 < 0x90;
        const bool too_big = c == 0xF4 && c1 >= 0x90;
        len = (overlong || too_big) ? 0 : 4;
      }
    }
    if (len == 0) {
      out.append(kReplacement);
      ++i;
    } else {
      out.append(bytes.substr(i, len));
      i += len;
    }
  }
  return out;
}

std::size_t count_words(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return words;
}

std::vector<EssayRecord> load_corpus(const fs::path& path, int prompt_filter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  // Some exports carry a UTF-8 byte order mark.
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = split_tabs(line);
  const std::size_t columns = header.size();

  auto column = [&](std::string_view name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError(path.string() + ": header lacks column '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_id = column("essay_id");
  const auto c_set = column("essay_set");
  const auto c_text = column("essay");
  const auto c_r1 = column("rater1_domain1");
  const auto c_r2 = column("rater2_domain1");
  column("domain1_score");

  std::vector<EssayRecord> records;
  std::set<long long> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    const std::string where = path.string() + ": line " + std::to_string(line_no);
    if (fields.size() != columns) {
      throw DataError(where + ": expected " + std::to_string(columns) + " columns, found " +
                      std::to_string(fields.size()));
    }
    long long essay_set = 0;
    long long essay_id = 0;
    try {
      essay_set = csv::parse_int(fields[c_set]);
      essay_id = csv::parse_int(fields[c_id]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (essay_set != prompt_filter) continue;

    EssayRecord rec;
    rec.essay_id = essay_id;
    rec.prompt_id = static_cast<int>(essay_set);
    rec.rater1_score = parse_score(fields[c_r1], line_no, "rater1_domain1");
    rec.rater2_score = parse_score(fields[c_r2], line_no, "rater2_domain1");
    rec.resolution_score = resolve_score(rec.rater1_score, rec.rater2_score);
    rec.text = sanitize_utf8(fields[c_text]);
    if (count_words(rec.text) == 0) throw DataError(where + ": empty essay text");
    if (!seen.insert(essay_id).second) {
      throw DataError(where + ": duplicate essay_id " + std::to_string(essay_id));
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) {
    throw DataError(path.string() + ": no essays with essay_set == " +
                    std::to_string(prompt_filter));
  }
  return records;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Validation:
      return "val";
    case Split::Test:
      return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Validation;
  if (name == "test") return Split::Test;
  throw DataError("unknown split '" + std::string(name) + "'");
}

std::vector<long long> SplitAssignment::ids(Split s) const {
  std::vector<long long> out;
  for (const auto& [id, which] : assignment) {
    if (which == s) out.push_back(id);
  }
  return out;
}

std::size_t SplitAssignment::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(
      assignment.begin(), assignment.end(), [s](const auto& kv) { return kv.second == s; }));
}

Split SplitAssignment::at(long long essay_id) const {
  const auto it = assignment.find(essay_id);
  if (it == assignment.end()) {
    throw DataError("essay " + std::to_string(essay_id) + " is not in the split manifest");
  }
  return it->second;
}

SplitAssignment split(const std::vector<EssayRecord>& corpus, std::uint64_t seed,
                      const SplitRatios& ratios) {
  if (corpus.size() < 3) throw DataError("split needs at least 3 essays");
  const double sum = ratios.train + ratios.validation + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.validation < 0 ||
      ratios.test < 0) {
    throw DataError("split ratios must be nonnegative and sum to 1");
  }

  std::vector<long long> ids;
  ids.reserve(corpus.size());
  for (const auto& e : corpus) ids.push_back(e.essay_id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw DataError("split: duplicate essay_id in corpus");
  }

  std::mt19937_64 rng(seed);
  shuffle(ids, rng);

  const auto n = static_cast<double>(ids.size());
  // The epsilon absorbs products like 0.1 * 1800 = 180.00000000000003 as well
  // as 0.29 * 100 = 28.999999999999996.
  const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.validation + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(n * ratios.test + 1e-9));
  const std::size_t n_train = ids.size() - n_val - n_test;

  SplitAssignment out;
  out.seed = seed;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Split s = i < n_train ? Split::Train
                    : i < n_train + n_val ? Split::Validation
                                          : Split::Test;
    out.assignment.emplace(ids[i], s);
  }
  return out;
}

std::string format_split_manifest(const SplitAssignment& split) {
  std::string out = "essay_id,split\n";
  for (const auto& [id, s] : split.assignment) {
    out += std::to_string(id);
    out += ',';
    out += split_name(s);
    out += '\n';
  }
  return out;
}

SplitAssignment read_split_manifest(const fs::path& path) {
  const auto records = csv::read_records(path);
  if (records.empty() || records.front() != std::vector<std::string>{"essay_id", "split"}) {
    throw DataError(path.string() + ": expected header 'essay_id,split'");
  }
  SplitAssignment out;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string where = path.string() + ": line " + std::to_string(i + 1);
    if (r.size() != 2) throw DataError(where + ": expected 2 fields");
    try {
      if (!out.assignment.emplace(csv::parse_int(r[0]), parse_split(r[1])).second) {
        throw DataError("duplicate essay_id " + r[0]);
      }
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return out;
}

std::size_t ScoreHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::array<double, kNumScores> ScoreHistogram::percents() const {
  std::array<double, kNumScores> out{};
  const auto n = total();
  if (n == 0) return out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out[i] = 100.0 * static_cast<double>(counts[i]) / static_cast<double>(n);
  }
  return out;
}

ScoreHistogram score_distribution(const std::vector<EssayRecord>& corpus) {
  if (corpus.empty()) throw DataError("score_distribution: empty corpus");
  ScoreHistogram h;
  for (const auto& e : corpus) {
    if (e.resolution_score < kMinScore || e.resolution_score > kMaxScore) {
      throw DataError("score_distribution: score out of range for essay " +
                      std::to_string(e.essay_id));
    }
    ++h.counts[static_cast<std::size_t>(e.resolution_score)];
  }
  return h;
}

LengthStats summarize_lengths(const std::vector<std::size_t>& lengths) {
  if (lengths.empty()) throw DataError("length statistics need at least one item");
  LengthStats s;
  s.min = *std::min_element(lengths.begin(), lengths.end());
  s.max = *std::max_element(lengths.begin(), lengths.end());
  const auto sum = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  s.mean = static_cast<double>(sum) / static_cast<double>(lengths.size());
  return s;
}

LengthStats length_stats(const std::vector<EssayRecord>& corpus) {
  std::vector<std::size_t> lengths;
  lengths.reserve(corpus.size());
  for (const auto& e : corpus) lengths.push_back(count_words(e.text));
  return summarize_lengths(lengths);
}

}  // namespace aes
