#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "aes/csv.hpp"
#include "aes/error.hpp"
#include "aes/rationale.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "support.hpp"

using namespace aes;

namespace {

PromptConfig config(std::string generator = "gpt-4.1") {
  PromptConfig c;
  c.generator_id = std::move(generator);
  c.passage = "Passage about the mooring mast.";
  c.writing_prompt = "Describe the obstacles.";
  return c;
}

std::vector<EssayRecord> essays(std::size_t n) {
  std::vector<EssayRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].essay_id = static_cast<long long>(i + 1);
    out[i].prompt_id = 6;
    out[i].text = "essay number " + std::to_string(i + 1);
    out[i].resolution_score = static_cast<int>(i % 5);
  }
  return out;
}

long long essay_id_of(const std::string& prompt) {
  const auto at = prompt.find("essay number ");
  return std::stoll(prompt.substr(at + 13));
}

// Scores essay id modulo 5; failure behaviour is configurable.
class FakeProvider : public ChatProvider {
 public:
  std::atomic<int> calls{0};
  int succeed_first = -1;       // after this many successes every call throws
  bool garbage = false;         // unparseable replies
  int transient_failures = 0;   // per essay, before succeeding
  bool jitter = false;          // random delays to scramble completion order
  std::mutex mu;
  std::map<long long, int> seen;
  std::vector<ChatRequest> requests;

  std::string complete(const ChatRequest& request) override {
    const int n = calls++;
    const auto id = essay_id_of(request.prompt);
    {
      std::lock_guard lock(mu);
      requests.push_back(request);
      if (seen[id]++ < transient_failures) throw ProviderError("HTTP 429");
    }
    if (jitter) std::this_thread::sleep_for(std::chrono::microseconds((id * 7919) % 500));
    if (succeed_first >= 0 && n >= succeed_first) throw ProviderError("connection reset");
    if (garbage) return "I think this essay is decent.";
    return "SCORE: " + std::to_string(id % 5) + "\nRATIONALE: Essay " + std::to_string(id) +
           " names the mast.";
  }
};

BatchOptions options(const std::filesystem::path& journal) {
  BatchOptions o;
  o.journal_path = journal;
  o.sleep = [](std::chrono::milliseconds) {};
  return o;
}

}  // namespace

TEST_CASE("prompt sections appear in order") {
  EssayRecord e;
  e.essay_id = 1;
  e.text = "  STUDENTTEXT  ";
  auto c = config();
  c.passage = "PASSAGETEXT";
  c.writing_prompt = "PROMPTTEXT";
  c.rubric_text = "RUBRICTEXT";
  const auto p = build_prompt(e, c);
  auto once = [&](std::string_view s) {
    const auto first = p.find(s);
    return first != std::string::npos && p.find(s, first + 1) == std::string::npos;
  };
  CHECK(once("PASSAGETEXT"));
  CHECK(once("PROMPTTEXT"));
  CHECK(once("STUDENTTEXT"));
  CHECK(once("RUBRICTEXT"));
  CHECK(p.find("STUDENTTEXT\n") != std::string::npos);
  const std::vector<std::string_view> order{
      "TASK", "READING PASSAGE:", "ESSAY PROMPT:", "STUDENT ESSAY:",
      "SCORING RUBRIC (Holistic - Single Score from 0 to 4):", "INSTRUCTIONS:",
      "Please respond in the following format:", "SCORE: [0-4]", "RATIONALE:"};
  std::size_t at = 0;
  for (auto s : order) {
    const auto found = p.find(s, at);
    CHECK_MESSAGE(found != std::string::npos, s);
    at = found;
  }
  CHECK(p.find("SCORING NOTES:") == std::string::npos);
  CHECK(p.find("512 tokens") == std::string::npos);
}

TEST_CASE("prompt optional sections follow the config flags") {
  EssayRecord e;
  e.text = "text";
  auto c = config();
  c.succinctness_addendum = true;
  auto p = build_prompt(e, c);
  CHECK(p.find("9. Each rationale should Not be more than 512 tokens") != std::string::npos);
  CHECK(p.find("$60,000") == std::string::npos);
  c.succinctness_addendum = false;
  c.scoring_notes = std::string(kDirigibleScoringNotes);
  p = build_prompt(e, c);
  CHECK(p.find("SCORING NOTES:") != std::string::npos);
  CHECK(p.find("$60,000") != std::string::npos);
  CHECK(p.find("SCORING NOTES:") < p.find("Please respond"));
  CHECK(p.find("512 tokens") == std::string::npos);
  CHECK(p.find(kDefaultRubric.substr(0, 40)) != std::string::npos);
}

TEST_CASE("prompt rejects empty fields") {
  EssayRecord e;
  e.text = " \n ";
  CHECK_THROWS_AS(build_prompt(e, config()), DataError);
  e.text = "ok";
  auto c = config();
  c.passage = "";
  CHECK_THROWS_AS(build_prompt(e, c), DataError);
}

TEST_CASE("temperature defaults by generator") {
  CHECK(default_temperature("gpt-4.1") == 0.2);
  CHECK(default_temperature("gpt-4.1-mini") == 0.2);
  CHECK(default_temperature("gpt-5") == 1.0);
  auto c = config("gpt-5");
  CHECK(c.effective_temperature() == 1.0);
  c.temperature = 0.7;
  CHECK(c.effective_temperature() == 0.7);
}

TEST_CASE("parse_response examples") {
  const auto a = parse_response("SCORE: 3\nRATIONALE: The essay identifies two obstacles.");
  CHECK(a.score == 3);
  CHECK(a.rationale == "The essay identifies two obstacles.");
  const auto b = parse_response("SCORE: 0\nRATIONALE: x");
  CHECK(b.score == 0);
  CHECK(b.rationale == "x");
  CHECK_THROWS_AS(parse_response("SCORE: 7\nRATIONALE: x"), ParseError);
}

TEST_CASE("parse_response tolerates case and layout drift") {
  const auto a = parse_response("  score:  4 \n\n  Rationale:\n  Line one.\n Line two.  \n");
  CHECK(a.score == 4);
  CHECK(a.rationale == "Line one.\n Line two.");
  const auto b = parse_response("Here you go.\nSCORE: 2 RATIONALE: inline");
  CHECK(b.score == 2);
  CHECK(b.rationale == "inline");
}

TEST_CASE("parse_response failures carry the raw text") {
  const std::string raw = "no score here";
  try {
    parse_response(raw);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.raw() == raw);
  }
  CHECK_THROWS_AS(parse_response("SCORE: two\nRATIONALE: x"), ParseError);
  CHECK_THROWS_AS(parse_response("SCORE: -1\nRATIONALE: x"), ParseError);
  CHECK_THROWS_AS(parse_response("SCORE: 3\nno marker"), ParseError);
}

TEST_CASE("record length accounting") {
  CHECK(estimate_tokens(0) == 0);
  CHECK(estimate_tokens(1) == 2);
  CHECK(estimate_tokens(20) == 27);
  CHECK(estimate_tokens(379) == 512);
  CHECK(estimate_tokens(380) == 513);
  const auto r = make_record(9, "gpt-5", "SCORE: 1\nRATIONALE: one two three four five");
  CHECK(r.word_count == 5);
  CHECK(r.estimated_tokens == 7);
  CHECK_FALSE(r.over_limit);
  CHECK(r.parsed_score == 1);
  std::string long_text;
  for (int i = 0; i < 380; ++i) long_text += "w ";
  CHECK(make_record(1, "g", "SCORE: 1\nRATIONALE: " + long_text).over_limit);
  const std::vector<RationaleRecord> one{r};
  const auto s = rationale_stats(one);
  CHECK(s.words.min == 5);
  CHECK(s.words.max == 5);
  CHECK(s.words.mean == 5.0);
  CHECK(s.over_limit == 0);
}

TEST_CASE("rationales csv quotes the rationale") {
  auto r = make_record(3, "gpt-4.1", "SCORE: 2\nRATIONALE: says \"mast\", then\nlaws");
  const std::vector<RationaleRecord> rs{r};
  const auto text = format_rationales_csv(rs);
  CHECK(text ==
        "essay_id,generator_id,score,word_count,over_limit,rationale\n"
        "3,gpt-4.1,2,4,false,\"says \"\"mast\"\", then\nlaws\"\n");
  testing::TempDir dir;
  csv::write_file(dir / "r.csv", text);
  const auto rec = csv::read_records(dir / "r.csv");
  CHECK(rec[1][5] == r.rationale_text);
}

TEST_CASE("run_batch scores every essay and fills the journal") {
  testing::TempDir dir;
  FakeProvider p;
  const auto es = essays(1800);
  auto o = options(dir / "j.ndjson");
  o.concurrency = 8;
  const auto r = run_batch(es, config(), p, o);
  CHECK(r.records.size() == 1800);
  CHECK(r.failed.empty());
  CHECK(r.provider_calls == 1800);
  const auto j = BatchJournal::load(dir / "j.ndjson");
  CHECK(j.count(JournalStatus::Done) == 1800);
  // Temperature follows the generator.
  CHECK(p.requests.front().temperature == 0.2);
  CHECK(p.requests.front().model == "gpt-4.1");

  // A complete journal means no calls on rerun.
  FakeProvider again;
  const auto r2 = run_batch(es, config(), again, o);
  CHECK(again.calls == 0);
  CHECK(r2.skipped == 1800);
  CHECK(r2.records == r.records);
}

TEST_CASE("run_batch resumes after an interruption") {
  testing::TempDir dir;
  const auto es = essays(1800);
  auto o = options(dir / "j.ndjson");
  o.max_attempts = 1;
  o.concurrency = 1;
  FakeProvider first;
  first.succeed_first = 1000;
  const auto r1 = run_batch(es, config(), first, o);
  CHECK(r1.records.size() == 1000);
  CHECK(r1.failed.size() == 800);

  FakeProvider second;
  o.concurrency = 4;
  const auto r2 = run_batch(es, config(), second, o);
  CHECK(second.calls == 800);
  CHECK(r2.skipped == 1000);
  CHECK(r2.records.size() == 1800);
  const auto j = BatchJournal::load(dir / "j.ndjson");
  CHECK(j.count(JournalStatus::Done) == 1800);
  // Attempts accumulate across runs for the failed essays.
  CHECK(j.find(1800)->attempts == 2);
  CHECK(j.find(1)->attempts == 1);
  // Compaction leaves one line per essay before the new appends.
  std::ifstream in(dir / "j.ndjson");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 1800 + 800);
}

TEST_CASE("run_batch with an always failing provider") {
  testing::TempDir dir;
  FakeProvider p;
  p.succeed_first = 0;
  std::vector<std::chrono::milliseconds> sleeps;
  std::mutex mu;
  auto o = options(dir / "j.ndjson");
  o.max_attempts = 3;
  o.base_backoff = std::chrono::milliseconds(100);
  o.sleep = [&](std::chrono::milliseconds d) {
    std::lock_guard lock(mu);
    sleeps.push_back(d);
  };
  const auto r = run_batch(essays(5), config(), p, o);
  CHECK(r.records.empty());
  CHECK(r.failed.size() == 5);
  CHECK(p.calls == 15);
  CHECK(sleeps.size() == 10);
  for (auto d : sleeps) {
    CHECK(d.count() >= 100);
    CHECK(d.count() < 400);
  }
  const auto j = BatchJournal::load(dir / "j.ndjson");
  CHECK(j.count(JournalStatus::Failed) == 5);
  CHECK(j.find(3)->error.find("connection reset") != std::string::npos);
}

TEST_CASE("transient errors are retried, parse errors are not") {
  testing::TempDir dir;
  SUBCASE("transient") {
    FakeProvider p;
    p.transient_failures = 2;
    const auto r = run_batch(essays(4), config(), p, options(dir / "a.ndjson"));
    CHECK(r.records.size() == 4);
    CHECK(p.calls == 12);
    CHECK(BatchJournal::load(dir / "a.ndjson").find(2)->attempts == 3);
  }
  SUBCASE("parse") {
    FakeProvider p;
    p.garbage = true;
    const auto r = run_batch(essays(4), config(), p, options(dir / "b.ndjson"));
    CHECK(r.records.empty());
    CHECK(r.failed == std::vector<long long>{1, 2, 3, 4});
    CHECK(p.calls == 4);
    CHECK(BatchJournal::load(dir / "b.ndjson").find(1)->error.find("SCORE") != std::string::npos);
  }
}

TEST_CASE("backoff doubles with bounded jitter") {
  using std::chrono::milliseconds;
  for (int k = 0; k < 5; ++k) {
    const auto d = backoff_delay(milliseconds(1000), k, 77);
    CHECK(d.count() >= 1000LL << k);
    CHECK(d.count() < (1000LL << k) + 1000);
    CHECK(d == backoff_delay(milliseconds(1000), k, 77));
  }
}

TEST_CASE("records come back in input order under concurrency") {
  FakeProvider p;
  p.jitter = true;
  auto es = essays(200);
  std::reverse(es.begin(), es.end());
  BatchOptions o = options({});
  o.concurrency = 16;
  const auto r = run_batch(es, config(), p, o);
  REQUIRE(r.records.size() == 200);
  for (std::size_t i = 0; i < es.size(); ++i) CHECK(r.records[i].essay_id == es[i].essay_id);
}

TEST_CASE("a corrupt journal stops the batch before any call") {
  testing::TempDir dir;
  csv::write_file(dir / "j.ndjson", "{\"essay_id\":1,\"status\":\"failed\",\"attempts\":1}\n{oops\n");
  FakeProvider p;
  CHECK_THROWS_WITH_AS(run_batch(essays(3), config(), p, options(dir / "j.ndjson")),
                       doctest::Contains("line 2"), DataError);
  CHECK(p.calls == 0);
  csv::write_file(dir / "k.ndjson", "{\"essay_id\":1,\"status\":\"done\",\"attempts\":1}\n");
  CHECK_THROWS_AS(BatchJournal::load(dir / "k.ndjson"), DataError);
  csv::write_file(dir / "l.ndjson", "{\"essay_id\":1,\"status\":\"maybe\",\"attempts\":1}\n");
  CHECK_THROWS_AS(BatchJournal::load(dir / "l.ndjson"), DataError);
}

TEST_CASE("a journal from another generator is rejected") {
  testing::TempDir dir;
  FakeProvider p;
  run_batch(essays(2), config("gpt-4.1"), p, options(dir / "j.ndjson"));
  FakeProvider q;
  CHECK_THROWS_WITH_AS(run_batch(essays(2), config("gpt-5"), q, options(dir / "j.ndjson")),
                       doctest::Contains("gpt-4.1"), DataError);
  CHECK(q.calls == 0);
}

TEST_CASE("journal keeps the last line per essay") {
  JournalEntry a;
  a.essay_id = 4;
  a.status = JournalStatus::Failed;
  a.attempts = 1;
  a.error = "boom";
  JournalEntry b;
  b.essay_id = 4;
  b.status = JournalStatus::Done;
  b.attempts = 2;
  b.record = make_record(4, "g", "SCORE: 4\nRATIONALE: fine");
  testing::TempDir dir;
  csv::write_file(dir / "j.ndjson",
                  BatchJournal::serialize(a) + "\n\n" + BatchJournal::serialize(b) + "\n");
  const auto j = BatchJournal::load(dir / "j.ndjson");
  CHECK(j.entries().size() == 1);
  CHECK(j.find(4)->status == JournalStatus::Done);
  CHECK(*j.find(4)->record == *b.record);
  CHECK(BatchJournal::load(dir / "missing.ndjson").entries().empty());
}

TEST_CASE("http provider talks to a chat completion endpoint") {
  httplib::Server server;
  std::string seen_auth;
  nlohmann::json seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = nlohmann::json::parse(req.body);
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"SCORE: 2\nRATIONALE: ok"}}]})",
                    "application/json");
  });
  server.Post("/bad", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("overloaded", "text/plain");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("AES_TEST_KEY", "sk-test", 1);
  HttpProviderConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.api_key_env = "AES_TEST_KEY";
  HttpChatProvider provider(cfg);
  const auto reply = provider.complete({"gpt-5", "hello", 1.0});
  CHECK(reply == "SCORE: 2\nRATIONALE: ok");
  CHECK(seen_auth == "Bearer sk-test");
  CHECK(seen_body["model"] == "gpt-5");
  CHECK(seen_body["temperature"] == 1.0);
  CHECK(seen_body["messages"][0]["content"] == "hello");

  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/bad";
  CHECK_THROWS_WITH_AS(HttpChatProvider(cfg).complete({"m", "p", 1.0}),
                       doctest::Contains("HTTP 500"), ProviderError);
  cfg.api_key_env = "AES_TEST_KEY_UNSET";
  ::unsetenv("AES_TEST_KEY_UNSET");
  CHECK_THROWS_WITH_AS(HttpChatProvider(cfg).complete({"m", "p", 1.0}),
                       doctest::Contains("AES_TEST_KEY_UNSET"), ProviderError);

  server.stop();
  t.join();

  cfg.api_key_env.clear();
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  CHECK_THROWS_AS(HttpChatProvider(cfg).complete({"m", "p", 1.0}), ProviderError);
}

TEST_CASE("http response extraction") {
  CHECK(HttpChatProvider::extract_content(
            R"({"choices":[{"message":{"content":"hi"}}]})") == "hi");
  CHECK_THROWS_AS(HttpChatProvider::extract_content("not json"), ProviderError);
  CHECK_THROWS_AS(HttpChatProvider::extract_content(R"({"choices":[]})"), ProviderError);
  CHECK_THROWS_AS(HttpChatProvider::extract_content(R"({"choices":[{"message":{"content":null}}]})"),
                  ProviderError);
}
