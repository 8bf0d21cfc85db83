#include "aes/rationale.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include "json.hpp"

#include "aes/csv.hpp"
#include "aes/error.hpp"
#include "aes/seed.hpp"

namespace aes {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view journal_status_name(JournalStatus s) {
  switch (s) {
    case JournalStatus::Pending:
      return "pending";
    case JournalStatus::Done:
      return "done";
    case JournalStatus::Failed:
      return "failed";
  }
  return "?";
}

namespace {

JournalStatus parse_status(const std::string& s) {
  if (s == "pending") return JournalStatus::Pending;
  if (s == "done") return JournalStatus::Done;
  if (s == "failed") return JournalStatus::Failed;
  throw DataError("unknown status '" + s + "'");
}

json record_to_json(const RationaleRecord& r) {
  return json{{"essay_id", r.essay_id},
              {"generator_id", r.generator_id},
              {"parsed_score", r.parsed_score},
              {"rationale_text", r.rationale_text},
              {"word_count", r.word_count},
              {"estimated_tokens", r.estimated_tokens},
              {"over_limit", r.over_limit},
              {"raw_response", r.raw_response}};
}

RationaleRecord record_from_json(const json& j) {
  RationaleRecord r;
  r.essay_id = j.at("essay_id").get<long long>();
  r.generator_id = j.at("generator_id").get<std::string>();
  r.parsed_score = j.at("parsed_score").get<int>();
  r.rationale_text = j.at("rationale_text").get<std::string>();
  r.word_count = j.at("word_count").get<std::size_t>();
  r.estimated_tokens = j.at("estimated_tokens").get<std::size_t>();
  r.over_limit = j.at("over_limit").get<bool>();
  r.raw_response = j.at("raw_response").get<std::string>();
  if (r.parsed_score < kMinScore || r.parsed_score > kMaxScore) {
    throw DataError("record score outside 0-4");
  }
  if (r.word_count != count_words(r.rationale_text) ||
      r.estimated_tokens != estimate_tokens(r.word_count) ||
      r.over_limit != (r.estimated_tokens > kTokenLimit)) {
    throw DataError("record length accounting is inconsistent");
  }
  return r;
}

}  // namespace

std::string BatchJournal::serialize(const JournalEntry& entry) {
  json j{{"essay_id", entry.essay_id},
         {"status", std::string(journal_status_name(entry.status))},
         {"attempts", entry.attempts}};
  if (entry.record) j["record"] = record_to_json(*entry.record);
  if (!entry.error.empty()) j["error"] = entry.error;
  // Invalid UTF-8 from a provider is replaced rather than rejected.
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

BatchJournal BatchJournal::load(const fs::path& path) {
  BatchJournal journal;
  if (path.empty() || !fs::exists(path)) return journal;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open journal " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      JournalEntry e;
      e.essay_id = j.at("essay_id").get<long long>();
      e.status = parse_status(j.at("status").get<std::string>());
      e.attempts = j.at("attempts").get<int>();
      if (e.attempts < 0) throw DataError("negative attempt count");
      if (j.contains("record")) e.record = record_from_json(j.at("record"));
      if (j.contains("error")) e.error = j.at("error").get<std::string>();
      if (e.status == JournalStatus::Done) {
        if (!e.record) throw DataError("done entry without a record");
        if (e.record->essay_id != e.essay_id) throw DataError("record essay_id mismatch");
      } else if (e.record) {
        throw DataError("record attached to a non-done entry");
      }
      journal.set(std::move(e));
    } catch (const std::exception& ex) {
      throw DataError("journal " + path.string() + " is corrupt at line " +
                      std::to_string(line_no) + ": " + ex.what());
    }
  }
  return journal;
}

const JournalEntry* BatchJournal::find(long long essay_id) const {
  const auto it = entries_.find(essay_id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<JournalEntry> BatchJournal::entries() const {
  std::vector<JournalEntry> out;
  out.reserve(order_.size());
  for (auto id : order_) out.push_back(entries_.at(id));
  return out;
}

std::size_t BatchJournal::count(JournalStatus s) const {
  return static_cast<std::size_t>(std::count_if(
      entries_.begin(), entries_.end(), [s](const auto& kv) { return kv.second.status == s; }));
}

void BatchJournal::set(JournalEntry entry) {
  const auto id = entry.essay_id;
  if (entries_.insert_or_assign(id, std::move(entry)).second) order_.push_back(id);
}

std::chrono::milliseconds backoff_delay(std::chrono::milliseconds base, int retry,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto jitter = static_cast<long long>(uniform_unit(rng) * static_cast<double>(base.count()));
  return std::chrono::milliseconds(base.count() * (1LL << std::min(retry, 30)) + jitter);
}

namespace {

// Appends journal lines; one writer, flushed per line.
class JournalWriter {
 public:
  explicit JournalWriter(const fs::path& path) {
    if (path.empty()) return;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw DataError("cannot open journal for writing: " + path.string());
  }

  void append(const JournalEntry& e) {
    std::lock_guard lock(mu_);
    if (!out_.is_open()) return;
    out_ << BatchJournal::serialize(e) << '\n';
    out_.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

}  // namespace

BatchResult run_batch(std::span<const EssayRecord> essays, const PromptConfig& config,
                      ChatProvider& provider, const BatchOptions& options) {
  if (options.max_attempts < 1) throw DataError("max_attempts must be >= 1");
  const auto journal = BatchJournal::load(options.journal_path);
  for (const auto& e : journal.entries()) {
    if (e.record && e.record->generator_id != config.generator_id) {
      throw DataError("journal " + options.journal_path.string() + " was written by generator '" +
                      e.record->generator_id + "', not '" + config.generator_id + "'");
    }
  }

  // Compact the append log so each essay appears once before new lines land.
  if (!options.journal_path.empty() && fs::exists(options.journal_path)) {
    std::string compacted;
    for (const auto& e : journal.entries()) compacted += BatchJournal::serialize(e) + '\n';
    csv::write_file(options.journal_path, compacted);
  }

  const std::size_t n = essays.size();
  std::vector<std::optional<RationaleRecord>> results(n);
  std::vector<char> failed(n, 0);
  std::vector<std::size_t> todo;
  BatchResult out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto* e = journal.find(essays[i].essay_id);
    if (e && e->status == JournalStatus::Done) {
      results[i] = e->record;
      ++out.skipped;
    } else {
      todo.push_back(i);
    }
  }

  JournalWriter writer(options.journal_path);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> calls{0};
  const double temperature = config.effective_temperature();
  auto sleep = options.sleep ? options.sleep
                             : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

  auto worker = [&] {
    while (true) {
      const auto slot = next.fetch_add(1);
      if (slot >= todo.size()) return;
      const auto i = todo[slot];
      const auto& essay = essays[i];
      const auto* prior = journal.find(essay.essay_id);
      JournalEntry entry;
      entry.essay_id = essay.essay_id;
      entry.attempts = prior ? prior->attempts : 0;

      ChatRequest request{config.generator_id, "", temperature};
      try {
        request.prompt = build_prompt(essay, config);
      } catch (const DataError& ex) {
        entry.status = JournalStatus::Failed;
        entry.error = ex.what();
        writer.append(entry);
        failed[i] = 1;
        continue;
      }

      for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
        if (attempt > 0) {
          sleep(backoff_delay(options.base_backoff, attempt - 1,
                              derive_seed(options.seed, "jitter/" + std::to_string(essay.essay_id) +
                                                            "/" + std::to_string(attempt))));
        }
        ++entry.attempts;
        ++calls;
        std::string raw;
        try {
          raw = provider.complete(request);
        } catch (const std::exception& ex) {
          entry.error = ex.what();
          continue;
        }
        try {
          results[i] = make_record(essay.essay_id, config.generator_id, std::move(raw));
          entry.error.clear();
        } catch (const ParseError& ex) {
          entry.error = ex.what();
        }
        break;
      }
      if (results[i]) {
        entry.status = JournalStatus::Done;
        entry.record = results[i];
      } else {
        entry.status = JournalStatus::Failed;
        failed[i] = 1;
      }
      writer.append(entry);
    }
  };

  const auto workers = static_cast<std::size_t>(std::max(1, options.concurrency));
  if (workers == 1 || todo.size() <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, todo.size()); ++w) pool.emplace_back(worker);
  }

  out.provider_calls = calls.load();
  for (std::size_t i = 0; i < n; ++i) {
    if (results[i]) {
      out.records.push_back(std::move(*results[i]));
    } else if (failed[i]) {
      out.failed.push_back(essays[i].essay_id);
    }
  }
  return out;
}

}  // namespace aes
