// Command-line driver: ingest, rationales, evaluate, ensemble, report.

#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "aes/error.hpp"
#include "aes/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitProvider = 3;

struct UsageError : aes::Error {
  using aes::Error::Error;
};

void require(bool ok, const char* what) {
  if (!ok) throw UsageError(what);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Essay scoring pipeline: corpus ingestion, LLM rationales, member evaluation, "
               "ensembles and reports"};
  app.require_subcommand(1);

  aes::RunConfig config;
  std::string config_file;
  std::string generator;
  std::string journal;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--corpus", config.corpus, "ASAP-format tab-separated corpus");
    cmd->add_option("--prompt", config.prompt, "essay_set to keep")->capture_default_str();
    cmd->add_option("--seed", config.seed, "root seed")->capture_default_str();
    cmd->add_option("--manifest", config.split_manifest, "split manifest (essay_id,split)");
    cmd->add_option("--members", config.members, "member manifest (model_id,source_tag,path)");
    cmd->add_option("--out", config.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--config", config_file, "JSON overrides");
  };

  auto* ingest = app.add_subcommand("ingest", "load the corpus, write the split manifest");
  auto* rationales = app.add_subcommand("rationales", "score essays with an LLM and keep rationales");
  auto* evaluate = app.add_subcommand("evaluate", "per-member metrics on the test split");
  auto* ensemble = app.add_subcommand("ensemble", "all ensemble strategies over all member filters");
  auto* report = app.add_subcommand("report", "collect tables into report.md and report.json");
  for (auto* cmd : {ingest, rationales, evaluate, ensemble, report}) add_common(cmd);
  rationales->add_option("--generator", generator, "chat model id (e.g. gpt-4.1, gpt-5)");
  rationales->add_option("--journal", journal, "resume journal (newline-delimited JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!config_file.empty()) {
      // Flags given on the command line win over the file.
      const auto* cmd = app.get_subcommands().front();
      const auto cli_seed = config.seed;
      aes::apply_config_file(config_file, config);
      if (cmd->count("--seed") > 0) config.seed = cli_seed;
    }
    if (!generator.empty()) config.prompt_config.generator_id = generator;
    if (!journal.empty()) config.journal = journal;

    if (ingest->parsed()) {
      require(!config.corpus.empty(), "ingest needs --corpus");
      aes::cmd_ingest(config, std::cout);
    } else if (rationales->parsed()) {
      require(!config.corpus.empty(), "rationales needs --corpus");
      require(!config.prompt_config.generator_id.empty(), "rationales needs --generator");
      require(!config.prompt_config.passage.empty() && !config.prompt_config.writing_prompt.empty(),
              "rationales needs prompt.passage_file and prompt.writing_prompt_file in --config");
      aes::HttpChatProvider provider(config.provider);
      const auto summary = aes::cmd_rationales(config, provider, std::cout);
      if (!summary.batch.failed.empty()) {
        std::cerr << summary.batch.failed.size() << " essays failed; rerun to retry them\n";
        return kExitProvider;
      }
    } else if (evaluate->parsed()) {
      require(!config.corpus.empty() && !config.members.empty(),
              "evaluate needs --corpus and --members");
      aes::cmd_evaluate(config, std::cout);
    } else if (ensemble->parsed()) {
      require(!config.corpus.empty() && !config.members.empty(),
              "ensemble needs --corpus and --members");
      aes::cmd_ensemble(config, std::cout);
    } else if (report->parsed()) {
      const auto summary = aes::cmd_report(config, std::cout);
      if (!summary.mismatches.empty()) return kExitData;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const aes::ProviderError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return kExitProvider;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
