#include "aes/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>

#include "aes/csv.hpp"
#include "aes/error.hpp"
#include "aes/seed.hpp"
#include "json.hpp"

namespace aes {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string list_ids(const std::vector<long long>& ids) {
  std::string out;
  const std::size_t shown = std::min<std::size_t>(ids.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) {
    if (i) out += ", ";
    out += std::to_string(ids[i]);
  }
  if (ids.size() > shown) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

std::map<long long, int> truth_for(const std::vector<EssayRecord>& corpus,
                                   const std::vector<long long>& ids) {
  std::map<long long, int> all;
  for (const auto& e : corpus) all.emplace(e.essay_id, e.resolution_score);
  std::map<long long, int> out;
  for (auto id : ids) {
    const auto it = all.find(id);
    if (it == all.end()) throw DataError("essay " + std::to_string(id) + " is not in the corpus");
    out.emplace(id, it->second);
  }
  return out;
}

void require_coverage(const PredictionSet& m, const std::vector<long long>& ids,
                      std::string_view split_label) {
  std::vector<long long> missing;
  for (auto id : ids) {
    if (!m.predictions.contains(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    throw DataError("member " + member_key(m) + " lacks " + std::string(split_label) +
                    " predictions for essay_id " + list_ids(missing));
  }
}

json table_sidecar(const ReportTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"model_id", r.model_id},
                    {"spearman_basis",
                     r.spearman_basis == SpearmanBasis::Continuous ? "continuous" : "integer"},
                    {"note", r.note}});
  }
  return json{{"caption_tag", t.caption_tag}, {"title", t.title}, {"rows", rows}};
}

void write_table(const fs::path& out_dir, const ReportTable& t) {
  csv::write_file(out_dir / "tables" / (t.caption_tag + ".csv"), format_table_csv(t));
  csv::write_file(out_dir / "tables" / (t.caption_tag + ".json"), table_sidecar(t).dump(2) + "\n");
}

void print_table(std::ostream& log, const ReportTable& t) {
  log << "\n" << t.title << " [" << t.caption_tag << "]\n" << format_table_csv(t);
}

std::string format_output_csv(const EnsembleOutput& o) {
  std::string out = "essay_id,blend,final\n";
  for (std::size_t i = 0; i < o.essay_ids.size(); ++i) {
    out += std::to_string(o.essay_ids[i]);
    out += ',';
    out += csv::exact(o.blend[i]);
    out += ',';
    out += std::to_string(o.final_scores[i]);
    out += '\n';
  }
  return out;
}

json audit_json(const EnsembleOutput& o, const std::vector<PredictionSet>& members,
                const EnsembleSpec& spec, std::uint64_t cv_seed) {
  json j{{"strategy", o.audit.strategy}, {"member_order", o.audit.member_order}};
  if (!o.audit.weights.empty()) j["weights"] = o.audit.weights;
  if (o.audit.alpha) j["alpha"] = *o.audit.alpha;
  if (o.audit.intercept) j["intercept"] = *o.audit.intercept;
  if (!o.audit.cv_errors.empty()) {
    json cv = json::array();
    for (const auto& [a, e] : o.audit.cv_errors) cv.push_back({{"alpha", a}, {"mean_error", e}});
    j["cv_errors"] = cv;
    j["cv_seed"] = cv_seed;
    j["k_folds"] = spec.k_folds;
  }
  if (o.audit.strategy == strategy_slug(Strategy::ConfidenceWeighted)) {
    j["confidence_threshold"] = spec.confidence_threshold;
    j["fallback_essays"] = o.audit.fallback_essays;
  }
  if (o.audit.strategy == strategy_slug(Strategy::Elite) ||
      o.audit.strategy == strategy_slug(Strategy::Tiered)) {
    j["elite_threshold"] = spec.elite_threshold;
  }
  if (o.audit.strategy == strategy_slug(Strategy::Tiered)) {
    j["tier_low"] = spec.tier_low;
    j["tier_high"] = spec.tier_high;
    j["tier_delta"] = spec.tier_delta;
    j["adjusted_essays"] = o.audit.adjusted_essays;
  }
  json stats = json::array();
  for (const auto& m : members) {
    stats.push_back({{"member", member_key(m)},
                     {"val_qwk", m.val_qwk},
                     {"val_spearman", m.val_spearman},
                     {"val_pearson", m.val_pearson}});
  }
  j["member_validation_stats"] = stats;
  return j;
}

EvalReport evaluate_output(const std::string& name, const std::string& tag,
                           const std::map<long long, int>& test_truth,
                           const std::vector<long long>& ids, const std::vector<double>& blend,
                           const std::vector<int>& finals) {
  std::vector<int> t;
  t.reserve(ids.size());
  for (auto id : ids) t.push_back(test_truth.at(id));
  return evaluate(name, tag, t, finals, std::span<const double>(blend));
}

EvalReport not_run_row(const std::string& name, const std::string& tag, const std::string& why) {
  EvalReport r;
  r.model_id = name;
  r.source = tag;
  r.note = "not run: " + why;
  return r;
}

}  // namespace

void apply_config_file(const fs::path& path, RunConfig& config) {
  json j;
  try {
    j = json::parse(csv::read_file(path));
  } catch (const json::exception& e) {
    throw DataError("config " + path.string() + ": " + e.what());
  }
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  try {
    auto& s = config.ensemble;
    if (j.contains("elite_threshold")) s.elite_threshold = j["elite_threshold"].get<double>();
    if (j.contains("confidence_threshold")) {
      s.confidence_threshold = j["confidence_threshold"].get<double>();
    }
    if (j.contains("tier_low")) s.tier_low = j["tier_low"].get<double>();
    if (j.contains("tier_high")) s.tier_high = j["tier_high"].get<double>();
    if (j.contains("tier_delta")) s.tier_delta = j["tier_delta"].get<double>();
    if (j.contains("alpha_grid")) s.alpha_grid = j["alpha_grid"].get<std::vector<double>>();
    if (j.contains("k_folds")) s.k_folds = j["k_folds"].get<int>();
    if (j.contains("correlation")) {
      const auto c = j["correlation"].get<std::string>();
      if (c == "spearman") {
        s.correlation = CorrelationKind::Spearman;
      } else if (c == "pearson") {
        s.correlation = CorrelationKind::Pearson;
      } else {
        throw DataError("correlation must be \"spearman\" or \"pearson\"");
      }
    }
    if (j.contains("elite_anchors")) {
      s.elite_anchors.clear();
      for (const auto& a : j["elite_anchors"]) {
        s.elite_anchors.push_back({a.at("model_id").get<std::string>(),
                                   parse_source(a.value("source", std::string("essay"))),
                                   a.at("weight").get<double>()});
      }
    }
    if (j.contains("split")) {
      const auto& sp = j["split"];
      if (sp.contains("ratios")) {
        const auto r = sp["ratios"].get<std::vector<double>>();
        if (r.size() != 3) throw DataError("split.ratios needs three values");
        config.ratios = {r[0], r[1], r[2]};
      }
      if (sp.contains("seed")) config.seed = sp["seed"].get<std::uint64_t>();
    }
    if (j.contains("prompt")) {
      const auto& p = j["prompt"];
      auto& pc = config.prompt_config;
      if (p.contains("generator_id")) pc.generator_id = p["generator_id"].get<std::string>();
      if (p.contains("temperature")) pc.temperature = p["temperature"].get<double>();
      if (p.contains("passage_file")) {
        pc.passage = csv::read_file(resolve(base, p["passage_file"].get<std::string>()));
      }
      if (p.contains("writing_prompt_file")) {
        pc.writing_prompt = csv::read_file(resolve(base, p["writing_prompt_file"].get<std::string>()));
      }
      if (p.contains("writing_prompt")) pc.writing_prompt = p["writing_prompt"].get<std::string>();
      if (p.contains("rubric_file")) {
        pc.rubric_text = csv::read_file(resolve(base, p["rubric_file"].get<std::string>()));
      }
      if (p.contains("scoring_notes")) {
        const auto& n = p["scoring_notes"];
        if (n.is_boolean()) {
          pc.scoring_notes = n.get<bool>() ? std::optional<std::string>(kDirigibleScoringNotes)
                                           : std::nullopt;
        } else {
          pc.scoring_notes = n.get<std::string>();
        }
      }
      if (p.contains("succinctness_addendum")) {
        pc.succinctness_addendum = p["succinctness_addendum"].get<bool>();
      }
    }
    if (j.contains("provider")) {
      const auto& p = j["provider"];
      if (p.contains("endpoint")) config.provider.endpoint = p["endpoint"].get<std::string>();
      if (p.contains("api_key_env")) config.provider.api_key_env = p["api_key_env"].get<std::string>();
      if (p.contains("timeout_seconds")) {
        config.provider.timeout = std::chrono::seconds(p["timeout_seconds"].get<int>());
      }
      if (p.contains("concurrency")) config.concurrency = p["concurrency"].get<int>();
      if (p.contains("max_attempts")) config.max_attempts = p["max_attempts"].get<int>();
    }
  } catch (const json::exception& e) {
    throw DataError("config " + path.string() + ": " + e.what());
  }
  config.ensemble.validate();
}

PredictionSet load_member_file(const fs::path& path, std::string model_id, Source source) {
  PredictionSet m;
  m.model_id = std::move(model_id);
  m.source = source;
  const auto records = csv::read_records(path);
  if (records.empty() || records.front() != std::vector<std::string>{"essay_id", "prediction"}) {
    throw DataError(path.string() + ": expected header 'essay_id,prediction'");
  }
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string where = path.string() + ": line " + std::to_string(i + 1);
    if (r.size() != 2) throw DataError(where + ": expected 2 fields");
    long long id = 0;
    double p = 0.0;
    try {
      id = csv::parse_int(r[0]);
      p = csv::parse_double(r[1]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!std::isfinite(p)) throw DataError(where + ": non-finite prediction");
    p = std::clamp(p, static_cast<double>(kMinScore), static_cast<double>(kMaxScore));
    if (!m.predictions.emplace(id, p).second) {
      throw DataError(where + ": duplicate essay_id " + std::to_string(id));
    }
  }
  return m;
}

std::vector<PredictionSet> load_members(const fs::path& manifest) {
  const auto records = csv::read_records(manifest);
  if (records.empty() ||
      records.front() != std::vector<std::string>{"model_id", "source_tag", "path"}) {
    throw DataError(manifest.string() + ": expected header 'model_id,source_tag,path'");
  }
  const fs::path base = manifest.has_parent_path() ? manifest.parent_path() : fs::path(".");
  std::vector<PredictionSet> out;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string where = manifest.string() + ": line " + std::to_string(i + 1);
    if (r.size() != 3) throw DataError(where + ": expected 3 fields");
    Source source{};
    try {
      source = parse_source(r[1]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    auto m = load_member_file(resolve(base, r[2]), r[0], source);
    if (!seen.insert(member_key(m)).second) {
      throw DataError(where + ": duplicate member " + member_key(m));
    }
    out.push_back(std::move(m));
  }
  if (out.empty()) throw DataError(manifest.string() + ": no members listed");
  return out;
}

const std::vector<MemberFilter>& member_filters() {
  static const std::vector<MemberFilter> filters{
      {"ens-essay", "Ensembles over essay-based members", {Source::Essay}},
      {"ens-essay+B",
       "Ensembles over essay-based and rationale-B members",
       {Source::Essay, Source::RationaleB}},
      {"ens-essay+A",
       "Ensembles over essay-based and rationale-A members",
       {Source::Essay, Source::RationaleA}},
      {"ens-all",
       "Ensembles over all members",
       {Source::Essay, Source::RationaleA, Source::RationaleB}},
  };
  return filters;
}

std::string format_table_csv(const ReportTable& table) {
  std::string out(kEvalCsvHeader);
  out += '\n';
  for (const auto& r : table.rows) {
    out += format_eval_row(r);
    out += '\n';
  }
  return out;
}

EvaluationData load_evaluation_data(const RunConfig& config) {
  if (config.corpus.empty()) throw DataError("no corpus given (--corpus)");
  EvaluationData d;
  d.corpus = load_corpus(config.corpus, config.prompt);
  if (!config.split_manifest.empty()) {
    d.split = read_split_manifest(config.split_manifest);
  } else {
    d.split = split(d.corpus, config.seed, config.ratios);
  }
  std::set<long long> corpus_ids;
  for (const auto& e : d.corpus) corpus_ids.insert(e.essay_id);
  std::vector<long long> unknown;
  for (const auto& [id, s] : d.split.assignment) {
    if (!corpus_ids.contains(id)) unknown.push_back(id);
  }
  if (!unknown.empty() || d.split.assignment.size() != corpus_ids.size()) {
    throw DataError("split manifest does not match the corpus" +
                    (unknown.empty() ? std::string() : ": unknown essay_id " + list_ids(unknown)));
  }
  return d;
}

IngestSummary cmd_ingest(const RunConfig& config, std::ostream& log) {
  const auto corpus = load_corpus(config.corpus, config.prompt);
  const auto assignment = split(corpus, config.seed, config.ratios);
  IngestSummary s;
  s.essays = corpus.size();
  s.histogram = score_distribution(corpus);
  s.lengths = length_stats(corpus);
  s.train = assignment.count(Split::Train);
  s.validation = assignment.count(Split::Validation);
  s.test = assignment.count(Split::Test);

  csv::write_file(config.out_dir / "split.csv", format_split_manifest(assignment));

  json hist = json::array();
  const auto pct = s.histogram.percents();
  for (std::size_t i = 0; i < s.histogram.counts.size(); ++i) {
    hist.push_back({{"score", i}, {"count", s.histogram.counts[i]}, {"percent", csv::fixed(pct[i], 1)}});
  }
  const json summary{
      {"prompt", config.prompt},
      {"essays", s.essays},
      {"score_distribution", hist},
      {"length_words", {{"min", s.lengths.min}, {"max", s.lengths.max}, {"mean", csv::fixed(s.lengths.mean, 1)}}},
      {"split", {{"seed", config.seed}, {"train", s.train}, {"val", s.validation}, {"test", s.test}}}};
  csv::write_file(config.out_dir / "corpus_summary.json", summary.dump(2) + "\n");

  log << "Loaded " << s.essays << " essays for prompt " << config.prompt << "\n\n";
  log << "Score  Frequency  Percent\n";
  for (std::size_t i = 0; i < s.histogram.counts.size(); ++i) {
    log << i << "      " << s.histogram.counts[i] << "        " << csv::fixed(pct[i], 1) << "\n";
  }
  log << "\nEssay length (words): min " << s.lengths.min << ", max " << s.lengths.max
      << ", mean " << csv::fixed(s.lengths.mean, 1) << "\n";
  log << "Split (seed " << config.seed << "): train " << s.train << ", val " << s.validation
      << ", test " << s.test << " -> " << (config.out_dir / "split.csv").string() << "\n";
  return s;
}

RationaleRunSummary cmd_rationales(const RunConfig& config, ChatProvider& provider,
                                   std::ostream& log) {
  const auto corpus = load_corpus(config.corpus, config.prompt);
  const auto& pc = config.prompt_config;
  if (pc.generator_id.empty()) throw DataError("no generator_id configured");

  BatchOptions opts;
  opts.journal_path = config.journal.empty()
                          ? config.out_dir / ("journal_" + pc.generator_id + ".ndjson")
                          : config.journal;
  opts.concurrency = config.concurrency;
  opts.max_attempts = config.max_attempts;
  opts.seed = derive_seed(config.seed, "rationales/" + pc.generator_id);

  RationaleRunSummary s;
  s.batch = run_batch(corpus, pc, provider, opts);
  csv::write_file(config.out_dir / ("rationales_" + pc.generator_id + ".csv"),
                  format_rationales_csv(s.batch.records));

  log << "Generator " << pc.generator_id << " (temperature "
      << csv::fixed(pc.effective_temperature(), 1) << "): " << s.batch.records.size()
      << " scored, " << s.batch.failed.size() << " failed, " << s.batch.skipped
      << " resumed from journal, " << s.batch.provider_calls << " provider calls\n";
  if (!s.batch.records.empty()) {
    s.stats = rationale_stats(s.batch.records);
    log << "Rationale length (words): min " << s.stats->words.min << ", max "
        << s.stats->words.max << ", mean " << csv::fixed(s.stats->words.mean, 1) << "; "
        << s.stats->over_limit << " over " << kTokenLimit << " estimated tokens\n";

    std::map<long long, int> truth;
    for (const auto& e : corpus) truth.emplace(e.essay_id, e.resolution_score);
    std::vector<int> t;
    std::vector<int> p;
    for (const auto& r : s.batch.records) {
      t.push_back(truth.at(r.essay_id));
      p.push_back(r.parsed_score);
    }
    try {
      s.direct_qwk = qwk(t, p);
      log << "Direct LLM scoring QWK: " << csv::fixed(*s.direct_qwk, 4) << "\n";
    } catch (const UndefinedMetricError& e) {
      log << "Direct LLM scoring QWK: undefined (" << e.what() << ")\n";
    }
  }
  return s;
}

std::vector<ReportTable> cmd_evaluate(const RunConfig& config, std::ostream& log) {
  const auto data = load_evaluation_data(config);
  const auto members = load_members(config.members);
  const auto test_ids = data.split.ids(Split::Test);
  const auto truth = truth_for(data.corpus, test_ids);

  std::vector<ReportTable> tables;
  for (auto source : {Source::Essay, Source::RationaleA, Source::RationaleB}) {
    ReportTable table;
    table.caption_tag = std::string(source_name(source));
    table.title = "Members trained on " + table.caption_tag + " input";
    for (const auto& m : members) {
      if (m.source != source) continue;
      require_coverage(m, test_ids, "test");
      std::vector<int> t;
      std::vector<int> finals;
      std::vector<double> cont;
      for (auto id : test_ids) {
        t.push_back(truth.at(id));
        cont.push_back(m.at(id));
        finals.push_back(finalize(cont.back()));
      }
      table.rows.push_back(evaluate(m.model_id, table.caption_tag, t, finals,
                                    std::span<const double>(cont)));
    }
    if (table.rows.empty()) continue;
    sort_by_qwk(table.rows);
    write_table(config.out_dir, table);
    print_table(log, table);
    for (const auto& r : table.rows) {
      if (!r.note.empty()) log << "  flagged: " << r.model_id << ": " << r.note << "\n";
    }
    tables.push_back(std::move(table));
  }
  return tables;
}

std::vector<ReportTable> cmd_ensemble(const RunConfig& config, std::ostream& log) {
  config.ensemble.validate();
  const auto data = load_evaluation_data(config);
  auto members = load_members(config.members);
  const auto val_ids = data.split.ids(Split::Validation);
  const auto test_ids = data.split.ids(Split::Test);

  for (auto& m : members) {
    require_coverage(m, val_ids, "validation");
    require_coverage(m, test_ids, "test");
  }
  // Weights and meta-learners see validation truth only.
  const auto val_truth = truth_for(data.corpus, val_ids);
  for (auto& m : members) compute_validation_stats(m, val_truth, val_ids);

  std::vector<ReportTable> tables;
  for (const auto& filter : member_filters()) {
    const auto selected = filter_members(members, filter.sources);
    if (selected.empty()) {
      throw DataError("member filter " + filter.tag + " selects no members");
    }
    log << "\n" << filter.tag << ": " << selected.size() << " members\n";
    const fs::path dir = config.out_dir / "ensemble" / filter.tag;
    fs::create_directories(dir);

    std::vector<std::pair<Strategy, EnsembleOutput>> outputs;
    std::vector<std::pair<Strategy, std::string>> failures;
    for (auto strategy : kAllStrategies) {
      EnsembleSpec spec = config.ensemble;
      spec.strategy = strategy;
      spec.member_filter = filter.sources;
      const auto cv_seed = derive_seed(config.seed, "stacking-cv/" + filter.tag);
      const auto slug = std::string(strategy_slug(strategy));
      try {
        auto out = run_strategy(selected, spec, val_truth, test_ids, cv_seed);
        csv::write_file(dir / (slug + ".csv"), format_output_csv(out));
        csv::write_file(dir / (slug + ".json"), audit_json(out, selected, spec, cv_seed).dump(2) + "\n");
        fs::remove(dir / (slug + ".error"));
        outputs.emplace_back(strategy, std::move(out));
      } catch (const Error& e) {
        csv::write_file(dir / (slug + ".error"), std::string(e.what()) + "\n");
        fs::remove(dir / (slug + ".csv"));
        fs::remove(dir / (slug + ".json"));
        failures.emplace_back(strategy, e.what());
        log << "  " << strategy_name(strategy) << " not run: " << e.what() << "\n";
      }
    }

    // Test truth is read only here, after every strategy has produced output.
    const auto test_truth = truth_for(data.corpus, test_ids);
    ReportTable table;
    table.caption_tag = filter.tag;
    table.title = filter.title;
    for (const auto& [strategy, out] : outputs) {
      table.rows.push_back(evaluate_output(std::string(strategy_name(strategy)), filter.tag,
                                           test_truth, out.essay_ids, out.blend, out.final_scores));
    }
    for (const auto& [strategy, why] : failures) {
      table.rows.push_back(not_run_row(std::string(strategy_name(strategy)), filter.tag, why));
    }
    sort_by_qwk(table.rows);
    write_table(config.out_dir, table);
    print_table(log, table);
    tables.push_back(std::move(table));
  }
  return tables;
}

std::string recompute_ensemble_table(const RunConfig& config, const EvaluationData& data,
                                     const MemberFilter& filter) {
  const auto test_ids = data.split.ids(Split::Test);
  const auto test_truth = truth_for(data.corpus, test_ids);
  const fs::path dir = config.out_dir / "ensemble" / filter.tag;
  ReportTable table;
  table.caption_tag = filter.tag;
  for (auto strategy : kAllStrategies) {
    const auto slug = std::string(strategy_slug(strategy));
    const auto name = std::string(strategy_name(strategy));
    if (fs::exists(dir / (slug + ".csv"))) {
      const auto records = csv::read_records(dir / (slug + ".csv"));
      std::vector<long long> ids;
      std::vector<double> blend;
      std::vector<int> finals;
      for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].size() != 3) throw DataError((dir / (slug + ".csv")).string() + ": bad row");
        ids.push_back(csv::parse_int(records[i][0]));
        blend.push_back(csv::parse_double(records[i][1]));
        finals.push_back(static_cast<int>(csv::parse_int(records[i][2])));
      }
      if (ids != test_ids) {
        throw DataError((dir / (slug + ".csv")).string() + " does not cover the test split");
      }
      table.rows.push_back(evaluate_output(name, filter.tag, test_truth, ids, blend, finals));
    } else if (fs::exists(dir / (slug + ".error"))) {
      std::string why = csv::read_file(dir / (slug + ".error"));
      while (!why.empty() && why.back() == '\n') why.pop_back();
      table.rows.push_back(not_run_row(name, filter.tag, why));
    } else {
      throw DataError("no output for " + name + " in " + dir.string());
    }
  }
  sort_by_qwk(table.rows);
  return format_table_csv(table);
}

}  // namespace aes
