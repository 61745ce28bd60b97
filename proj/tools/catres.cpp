// catres: categorical restructuring analysis between two neuron layers.
//
//   catres ingest   --profiles p.jsonl --weights w.bin --embeddings e.bin
//   catres synth    --out dir [--seed N] [--phasing S] ...
//   catres analyze  --profiles p.jsonl --weights w.bin --embeddings e.bin --out dir
//   catres export   (analyze) + --bundle dir
//   catres serve    --bundle dir [--port 8080]
//
// Every verb accepts --config file with key=value lines naming its long
// options; flags given on the command line win over the file.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "catres/bundle.hpp"
#include "catres/dataset.hpp"
#include "catres/error.hpp"
#include "catres/pipeline.hpp"
#include "catres/report.hpp"
#include "catres/server.hpp"
#include "catres/synth.hpp"
#include "json.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

struct Inputs {
  std::string profiles, weights, embeddings, vocab;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--profiles", profiles, "activation profiles (JSONL)")->required();
    cmd->add_option("--weights", weights, "inter-layer weights (CRW1 binary)")->required();
    cmd->add_option("--embeddings", embeddings, "token embeddings (CRE1 binary)")->required();
    cmd->add_option("--vocab", vocab, "vocabulary JSONL (default: <embeddings>.vocab.jsonl)");
  }

  catres::ModelDataset load() const {
    auto profile_map = catres::load_profiles(profiles);
    auto w = catres::load_weights(weights);
    auto emb = vocab.empty() ? catres::load_embeddings(embeddings) : catres::load_embeddings(embeddings, vocab);
    return catres::assemble_dataset(std::move(profile_map), std::move(w), std::move(emb),
                                    "profiles=" + profiles + " weights=" + weights + " embeddings=" + embeddings);
  }
};

struct AnalyzeArgs {
  Inputs inputs;
  std::string out;
  std::size_t k = 100, m = 10, c = 5, min_cluster = 6;
  std::string method = "deterministic";
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string partitions, paper_compare;
  std::string llm_endpoint, llm_model = "gpt-4o", llm_cache, prompt;
  int llm_timeout_ms = 30000, llm_retries = 2;
  unsigned llm_concurrency = 4;

  void add_to(CLI::App* cmd) {
    inputs.add_to(cmd);
    cmd->add_option("--out", out, "report directory")->required();
    cmd->add_option("--k", k, "core tokens per neuron")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--precursors", m, "precursor cap per target")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--clusters", c, "clusters per neuron")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--min-cluster", min_cluster, "minimum compared set size")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--method", method, "clustering method")->capture_default_str()->check(CLI::IsMember({"deterministic", "llm"}));
    cmd->add_option("--seed", seed, "clustering seed")->capture_default_str();
    cmd->add_option("--workers", workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--partitions", partitions, "externally supplied cluster partitions (JSONL)");
    cmd->add_option("--paper-compare", paper_compare, "key=value file of expected table values");
    cmd->add_option("--llm-endpoint", llm_endpoint, "labeler URL (method llm)");
    cmd->add_option("--llm-model", llm_model, "labeler model name")->capture_default_str();
    cmd->add_option("--llm-timeout-ms", llm_timeout_ms, "labeler request timeout")->capture_default_str();
    cmd->add_option("--llm-retries", llm_retries, "labeler retries")->capture_default_str();
    cmd->add_option("--llm-cache", llm_cache, "labeler response cache (JSONL)");
    cmd->add_option("--llm-concurrency", llm_concurrency, "concurrent labeler requests")->capture_default_str();
    cmd->add_option("--prompt", prompt, "prompt template (default: bundled)");
  }

  catres::RunConfig config() const {
    catres::RunConfig cfg;
    cfg.k = k;
    cfg.m = m;
    cfg.c = c;
    cfg.min_cluster = min_cluster;
    cfg.method = catres::parse_cluster_method(method);
    cfg.seed = seed;
    cfg.workers = workers;
    cfg.profiles = inputs.profiles;
    cfg.weights = inputs.weights;
    cfg.embeddings = inputs.embeddings;
    if (!partitions.empty()) cfg.partitions_path = partitions;
    if (cfg.method == catres::ClusterMethod::llm || !llm_endpoint.empty()) {
      catres::LabelerConfig lc;
      lc.endpoint = llm_endpoint;
      lc.model = llm_model;
      lc.timeout = std::chrono::milliseconds(llm_timeout_ms);
      lc.max_retries = llm_retries;
      lc.cache_path = llm_cache;
      lc.concurrency = llm_concurrency;
      lc.prompt_path = prompt;
      cfg.labeler = lc;
    }
    return cfg;
  }

  catres::AnalysisReport run(const catres::ModelDataset& dataset) const {
    auto report = catres::analyze(dataset, config());
    if (!paper_compare.empty()) {
      report.paper_compare = catres::compare_with_paper(report, catres::load_paper_compare(paper_compare));
    }
    for (const auto& path : catres::export_report(report, out)) spdlog::debug("wrote {}", path.string());
    for (int t = 1; t <= 5; ++t) std::cout << catres::render_table(report, t) << '\n';
    if (!report.paper_compare.empty()) std::cout << catres::render_paper_compare(report.paper_compare);
    return report;
  }
};

// key=value lines -> "--key=value" arguments for the options `cmd` knows.
std::vector<std::string> config_arguments(const std::string& path, const CLI::App* cmd) {
  std::ifstream in(path);
  if (!in) throw catres::IoError("cannot open config file " + path);
  std::vector<std::string> args;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw catres::ParseError(path, line_no, "expected key=value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    const CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (!opt) {
      spdlog::debug("config {}:{}: '{}' does not apply to '{}'", path, line_no, key, cmd->get_name());
      continue;
    }
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value.empty()) args.push_back("--" + key);
      continue;
    }
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"catres: measure categorical restructuring between two neuron layers"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path, log_level = "info";
  app.add_option("--config", config_path, "key=value file of option defaults");
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  Inputs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "validate the three input artifacts and print their provenance");
  ingest_args.add_to(ingest);

  catres::SynthConfig synth_cfg = catres::unphased_config(0);
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic two-layer dataset with planted effects");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_cfg.seed)->capture_default_str();
  synth->add_option("--vocab-size", synth_cfg.vocab_size)->capture_default_str();
  synth->add_option("--layer0", synth_cfg.layer0_size)->capture_default_str();
  synth->add_option("--layer1", synth_cfg.layer1_size)->capture_default_str();
  synth->add_option("--dim", synth_cfg.embedding_dim)->capture_default_str();
  synth->add_option("--fanin", synth_cfg.precursor_fanin)->capture_default_str();
  synth->add_option("--phasing", synth_cfg.phasing_strength)->capture_default_str();
  synth->add_option("--attention", synth_cfg.attention_contrast)->capture_default_str();
  synth->add_option("--priming", synth_cfg.priming_sharpness)->capture_default_str();
  synth->add_option("--noise", synth_cfg.noise_scale)->capture_default_str();
  synth->add_option("--group-size", synth_cfg.group_size)->capture_default_str();
  synth->add_option("--groups-per-neuron", synth_cfg.groups_per_neuron)->capture_default_str();
  synth->add_option("--phased-tokens", synth_cfg.phased_tokens)->capture_default_str();
  synth->add_option("--phasing-noise", synth_cfg.phasing_noise)->capture_default_str();
  synth->add_flag("--remix", synth_cfg.remix_targets, "plant target categories as remixes of precursor sub-groups");
  synth->add_option("--activation-noise", synth_cfg.activation_noise)->capture_default_str();
  synth->add_option("--weight-scale", synth_cfg.weight_scale)->capture_default_str();
  synth->add_option("--layer1-profile", synth_cfg.layer1_profile_size)->capture_default_str();

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "compute confluence, dispersion and distancing tables");
  analyze_args.add_to(analyze);

  AnalyzeArgs export_args;
  std::string bundle_dir;
  auto* exporter = app.add_subcommand("export", "analyze, then write a viewer bundle");
  export_args.add_to(exporter);
  exporter->add_option("--bundle", bundle_dir, "bundle directory (default: <out>/bundle)");

  catres::ServerConfig server_cfg;
  std::string serve_bundle, ui_dir, cors;
  auto* serve = app.add_subcommand("serve", "serve a viewer bundle over HTTP");
  serve->add_option("--bundle", serve_bundle, "bundle directory")->required();
  serve->add_option("--host", server_cfg.host)->capture_default_str();
  serve->add_option("--port", server_cfg.port)->capture_default_str();
  serve->add_option("--cors", cors, "Access-Control-Allow-Origin value");
  serve->add_option("--ui", ui_dir, "static UI asset directory");

  // --config values go in front of the verb's own arguments so explicit
  // flags, parsed later, take precedence.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    std::string cfg_file;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) {
        cfg_file = args[i + 1];
      } else if (args[i].rfind("--config=", 0) == 0) {
        cfg_file = args[i].substr(9);
      }
    }
    if (!cfg_file.empty()) {
      for (std::size_t i = 0; i < args.size(); ++i) {
        CLI::App* cmd = app.get_subcommand_no_throw(args[i]);
        if (!cmd) continue;
        const auto injected = config_arguments(cfg_file, cmd);
        args.insert(args.begin() + static_cast<std::ptrdiff_t>(i) + 1, injected.begin(), injected.end());
        break;
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  } catch (const catres::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const catres::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("catres"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*ingest) {
      const auto dataset = ingest_args.load();
      nlohmann::ordered_json out;
      out["provenance"] = dataset.provenance();
      out["content_hash"] = dataset.content_hash();
      out["profiles"] = dataset.profiles().size();
      out["layers"] = {{{"layer", dataset.weights().source_layer}, {"size", dataset.weights().source_size}},
                       {{"layer", dataset.weights().target_layer}, {"size", dataset.weights().target_size}}};
      out["vocab"] = dataset.embeddings().size();
      out["dimension"] = dataset.embeddings().dimension();
      std::cout << out.dump(2) << '\n';
    } else if (*synth) {
      const auto generated = catres::generate(synth_cfg);
      catres::write_synth(synth_out, generated);
      spdlog::info("wrote synthetic dataset {} to {}", generated.dataset.content_hash().substr(0, 12), synth_out);
    } else if (*analyze) {
      analyze_args.run(analyze_args.inputs.load());
    } else if (*exporter) {
      const auto dataset = export_args.inputs.load();
      const auto report = export_args.run(dataset);
      const std::filesystem::path dir = bundle_dir.empty() ? std::filesystem::path(export_args.out) / "bundle" : std::filesystem::path(bundle_dir);
      const auto info = catres::export_viewer_bundle(dataset, report, dir);
      spdlog::info("bundle: {} documents, content hash {}", info.documents, info.content_hash);
    } else if (*serve) {
      server_cfg.bundle_dir = serve_bundle;
      if (!cors.empty()) server_cfg.cors_origin = cors;
      if (!ui_dir.empty()) server_cfg.ui_dir = ui_dir;
      catres::serve(server_cfg);
    }
  } catch (const catres::ValidationError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const catres::NotFoundError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const catres::IoError& e) {
    spdlog::error("{}", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
