#include <ostream>

#include "aes/csv.hpp"
#include "aes/error.hpp"
#include "aes/harness.hpp"
#include "json.hpp"

namespace aes {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_title(std::string_view tag) {
  for (const auto& f : member_filters()) {
    if (f.tag == tag) return f.title;
  }
  return "Members trained on " + std::string(tag) + " input";
}

struct LoadedTable {
  std::string tag;
  std::string title;
  std::vector<std::vector<std::string>> rows;  // without header
  std::map<std::string, std::string> notes;    // model_id -> note
  std::map<std::string, std::string> basis;    // model_id -> spearman basis
};

std::optional<LoadedTable> load_table(const fs::path& out_dir, const std::string& tag) {
  const auto csv_path = out_dir / "tables" / (tag + ".csv");
  if (!fs::exists(csv_path)) return std::nullopt;
  LoadedTable t;
  t.tag = tag;
  t.title = default_title(tag);
  auto records = csv::read_records(csv_path);
  if (records.empty() || csv::split_line(kEvalCsvHeader) != records.front()) {
    throw DataError(csv_path.string() + ": unexpected header");
  }
  records.erase(records.begin());
  for (const auto& r : records) {
    if (r.size() != 9) throw DataError(csv_path.string() + ": expected 9 fields per row");
  }
  t.rows = std::move(records);
  const auto sidecar = out_dir / "tables" / (tag + ".json");
  if (fs::exists(sidecar)) {
    const auto j = json::parse(csv::read_file(sidecar));
    t.title = j.value("title", t.title);
    for (const auto& row : j.value("rows", json::array())) {
      const auto id = row.value("model_id", std::string());
      if (const auto note = row.value("note", std::string()); !note.empty()) t.notes[id] = note;
      t.basis[id] = row.value("spearman_basis", std::string());
    }
  }
  return t;
}

json number_or_null(const std::string& s) {
  if (s == "undefined") return nullptr;
  return csv::parse_double(s);
}

std::string md_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

}  // namespace

ReportSummary cmd_report(const RunConfig& config, std::ostream& log) {
  ReportSummary summary;
  std::string md = "# Scoring report\n\n";
  md += "QWK is quadratic-weighted kappa on the test split; F1 is per score level, one vs rest. "
        "Spearman uses continuous predictions where available.\n";
  json tables = json::array();

  for (const char* tag_c : kReportTags) {
    const std::string tag = tag_c;
    const auto table = load_table(config.out_dir, tag);
    md += "\n## " + (table ? table->title : default_title(tag)) + " (`" + tag + "`)\n\n";
    if (!table) {
      ++summary.tables_missing;
      md += "_not run_\n";
      tables.push_back({{"caption_tag", tag}, {"title", default_title(tag)}, {"status", "not run"}});
      continue;
    }
    ++summary.tables_present;
    md += "| # | Model | QWK | Spearman | F1 score 0 | F1 score 1 | F1 score 2 | F1 score 3 | F1 score 4 |\n";
    md += "|---|---|---|---|---|---|---|---|---|\n";
    json rows = json::array();
    std::string footnotes;
    for (std::size_t i = 0; i < table->rows.size(); ++i) {
      const auto& r = table->rows[i];
      md += "| " + std::to_string(i + 1) + " | " + md_escape(r[0]);
      const auto note = table->notes.find(r[0]);
      if (note != table->notes.end()) {
        md += " *";
        footnotes += "\\* " + md_escape(r[0]) + ": " + md_escape(note->second) + "\n";
      }
      for (std::size_t c = 2; c < r.size(); ++c) md += " | " + r[c];
      md += " |\n";
      json f1 = json::array();
      for (std::size_t c = 4; c < 9; ++c) f1.push_back(number_or_null(r[c]));
      json row{{"model_id", r[0]},
               {"qwk", number_or_null(r[2])},
               {"spearman", number_or_null(r[3])},
               {"f1", f1}};
      if (note != table->notes.end()) row["note"] = note->second;
      if (const auto b = table->basis.find(r[0]); b != table->basis.end() && !b->second.empty()) {
        row["spearman_basis"] = b->second;
      }
      rows.push_back(std::move(row));
    }
    if (!footnotes.empty()) md += "\n" + footnotes;
    tables.push_back(
        {{"caption_tag", tag}, {"title", table->title}, {"status", "ok"}, {"rows", rows}});
  }

  csv::write_file(config.out_dir / "report.md", md);
  csv::write_file(config.out_dir / "report.json", json{{"tables", tables}}.dump(2) + "\n");
  log << "Wrote " << (config.out_dir / "report.md").string() << " (" << summary.tables_present
      << " tables, " << summary.tables_missing << " not run)\n";

  if (!config.corpus.empty()) {
    const auto data = load_evaluation_data(config);
    for (const auto& filter : member_filters()) {
      const auto stored_path = config.out_dir / "tables" / (filter.tag + ".csv");
      if (!fs::exists(stored_path)) continue;
      const auto recomputed = recompute_ensemble_table(config, data, filter);
      if (recomputed == csv::read_file(stored_path)) {
        ++summary.tables_verified;
      } else {
        summary.mismatches.push_back(filter.tag);
        log << "Audit mismatch: " << filter.tag << " does not recompute from per-essay outputs\n";
      }
    }
    log << "Verified " << summary.tables_verified << " ensemble tables against per-essay outputs\n";
  }
  return summary;
}

}  // namespace aes
