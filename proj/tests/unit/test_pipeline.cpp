#include <algorithm>
#include <cmath>
#include <sstream>

#include "catres/error.hpp"
#include "catres/pipeline.hpp"
#include "catres/report.hpp"
#include "catres/synth.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "oracle.hpp"

using namespace catres;
using nlohmann::json;

namespace {

SynthConfig small(SynthConfig cfg) {
  cfg.vocab_size = 800;
  cfg.layer0_size = 24;
  cfg.layer1_size = 16;
  cfg.embedding_dim = 24;
  return cfg;
}

// One precursor and one target sharing the same profile tokens.
ModelDataset mirrored_dataset(std::size_t n_tokens) {
  ProfileMap profiles;
  ActivationProfile p0{{0, 0}, {}}, p1{{1, 0}, {}};
  for (std::size_t t = 0; t < n_tokens; ++t) {
    p0.entries.push_back({static_cast<TokenId>(t), "t", 1.0 + 0.37 * static_cast<double>((t * 7) % n_tokens)});
    p1.entries.push_back({static_cast<TokenId>(t), "t", 2.0 + 0.11 * static_cast<double>((t * 5) % n_tokens)});
  }
  std::sort(p0.entries.begin(), p0.entries.end(), activation_order);
  std::sort(p1.entries.begin(), p1.entries.end(), activation_order);
  profiles[{0, 0}] = p0;
  profiles[{1, 0}] = p1;
  return assemble_dataset(std::move(profiles), fixtures::weights(1, 1, {0.5f}), fixtures::random_table(n_tokens, 5, 4));
}

}  // namespace

TEST_CASE("run config validation") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.k = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = RunConfig{};
  cfg.workers = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = RunConfig{};
  cfg.method = ClusterMethod::llm;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("split chi-square") {
  const auto r = split_chi_square(60, 100);
  CHECK(r.statistic == 4.0);
  CHECK(r.p_value == doctest::Approx(0.04550026389635857));
  CHECK(split_chi_square(0, 0).skipped);
}

TEST_CASE("summary counts equal record stream lengths") {
  const auto ds = generate(small(phased_config(1, kHighPhasing))).dataset;
  RunConfig cfg;
  const auto report = analyze(ds, cfg);
  CHECK(report.confluence.summary.n_effective == report.confluence.records.size());
  CHECK(report.dispersion_precursor.summary.n == report.dispersion_precursor.records.size());
  CHECK(report.dispersion_target.summary.n == report.dispersion_target.records.size());
  CHECK(report.distancing.table4.n_d == report.distancing.records.size());
  CHECK(report.distancing.table5.n_d == report.distancing.records.size());
  CHECK(report.dispersion_precursor.summary.n + report.dispersion_precursor.summary.skipped_cardinality ==
        report.pairs.pairs.size());
  CHECK(report.confluence.summary.n_effective > 0);
  CHECK(report.distancing.table4.n_d > 0);

  for (const auto* s : {&report.confluence.summary.pct_below_half, &report.dispersion_precursor.summary.pct_positive,
                        &report.distancing.table4.pct_negative, &report.distancing.table5.pct_binomial_significant}) {
    CHECK(*s >= 0.0);
    CHECK(*s <= 100.0);
  }
  for (const auto& r : report.confluence.records) {
    CHECK(r.size_x >= cfg.min_cluster);
    CHECK(r.size_y >= cfg.min_cluster);
    CHECK(r.precursor_x != r.precursor_y);
    CHECK(r.pair_count >= 1);
  }
  for (const auto& r : report.distancing.records) {
    CHECK(r.n_common <= std::min(r.size_x, r.size_y));
    CHECK(r.d_prime == doctest::Approx(static_cast<double>(r.n_common) - static_cast<double>(r.size_x) / 10.0));
  }
}

TEST_CASE("no qualifying taken-cluster pair gives an empty, flagged table") {
  const auto ds = generate(small(unphased_config(2))).dataset;
  RunConfig cfg;
  cfg.min_cluster = 1000;
  const auto run = run_confluence(ds, cfg);
  CHECK(run.summary.n_effective == 0);
  CHECK(run.summary.skipped);
  CHECK(run.summary.chi2.skipped);
  const auto report = analyze(ds, cfg);
  CHECK(report.distancing.table4.skipped);
  CHECK(report.dispersion_target.summary.skipped);
  CHECK(render_table(report, 1).find("skipped") != std::string::npos);
  CHECK(render_table(report, 4).find("skipped") != std::string::npos);
  const json summary = json::parse(summary_json(report));
  CHECK(summary.at("table1").at("skipped") == true);
  CHECK(summary.at("table4").at("skipped") == true);
}

TEST_CASE("taken equal to the whole core: dispersion matches the brute-force oracle") {
  const auto ds = mirrored_dataset(12);
  RunConfig cfg;
  cfg.min_cluster = 2;
  for (auto side : {ActivationSide::precursor, ActivationSide::target}) {
    const auto run = run_dispersion(ds, cfg, side);
    REQUIRE(run.records.size() == 1);
    const auto& prof = ds.find(side == ActivationSide::precursor ? NeuronRef{0, 0} : NeuronRef{1, 0})->entries;
    oracle::Ids ids;
    std::map<int, double> act;
    for (const auto& e : prof) {
      ids.push_back(e.id);
      act[e.id] = e.activation;
    }
    CHECK(run.records[0].taken_size == 12);
    CHECK(oracle::close(run.records[0].d, oracle::dispersion(ids, ids, act)));
  }
}

TEST_CASE("identical source and target partitions: n = |x| and d' > 0 everywhere") {
  const auto ds = mirrored_dataset(20);
  RunConfig cfg;
  cfg.c = 1;
  const auto run = run_distancing(ds, cfg);
  REQUIRE(run.records.size() == 1);
  const auto& r = run.records[0];
  CHECK(r.n_common == r.size_x);
  CHECK(r.d_prime == doctest::Approx(0.9 * static_cast<double>(r.size_x)));
  CHECK(run.table5.pct_negative == 0.0);
  CHECK(run.table5.mean_n == doctest::Approx(20.0));
}

TEST_CASE("supplied partitions override deterministic clustering") {
  fixtures::TempDir dir;
  const auto ds = mirrored_dataset(20);
  fixtures::spit(dir / "parts.jsonl",
                 R"({"layer":1,"neuron":0,"method":"llm","clusters":[{"label":"evens","ids":[0,2,4,6,8,10,12,14,16,18]},)"
                 R"({"label":"odds","ids":[1,3,5,7,9,11,13,15,17,19]}]})"
                 "\n");
  RunConfig cfg;
  cfg.c = 1;
  cfg.partitions_path = dir / "parts.jsonl";
  const auto cores = compute_cores(ds, cfg.k);
  const auto parts = compute_partitions(ds, cores, cfg);
  CHECK(parts.at({1, 0}).clusters.size() == 2);
  CHECK(parts.at({1, 0}).clusters[0].label == "evens");
  CHECK(parts.at({0, 0}).clusters.size() == 1);
  const auto run = run_distancing(ds, enumerate_pairs(ds, cores, cfg.m), parts, cfg);
  REQUIRE(run.records.size() == 2);
  CHECK(run.records[0].n_common == 10);
  CHECK(run.records[0].size_y == 10);
}

TEST_CASE("same inputs give identical reports; worker count does not matter") {
  const auto ds = generate(small(remix_config(5))).dataset;
  RunConfig one;
  RunConfig many;
  many.workers = 4;
  const auto a = analyze(ds, one);
  const auto b = analyze(ds, one);
  const auto c = analyze(ds, many);
  CHECK(summary_json(a) == summary_json(b));
  CHECK(summary_json(a) == summary_json(c));
  fixtures::TempDir da, dc;
  const auto files = export_report(a, da.path());
  export_report(c, dc.path());
  for (const auto& f : files) {
    INFO(f.filename().string());
    CHECK(fixtures::slurp(f) == fixtures::slurp(dc / f.filename().string()));
  }
}

TEST_CASE("export writes five tables, the config echo and the record streams") {
  fixtures::TempDir dir;
  const auto ds = generate(small(phased_config(0, kHighPhasing))).dataset;
  auto report = analyze(ds, RunConfig{});
  report.paper_compare = compare_with_paper(report, {{"table1.mean_m", 0.453}, {"table9.bogus", 1.0}});
  export_report(report, dir.path());
  for (const char* name : {"summary.json", "table1.txt", "table2.txt", "table3.txt", "table4.txt", "table5.txt", "config.txt",
                           "confluence.csv", "dispersion_precursor.csv", "dispersion_target.csv", "distancing.csv",
                           "partitions.jsonl", "paper_compare.txt"}) {
    INFO(name);
    CHECK(std::filesystem::exists(dir / name));
  }
  std::size_t rows = 0;
  std::istringstream csv(fixtures::slurp(dir / "confluence.csv"));
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == report.confluence.records.size() + 1);
  const json summary = json::parse(fixtures::slurp(dir / "summary.json"));
  CHECK(summary.at("table1").at("n_effective") == report.confluence.summary.n_effective);
  CHECK(summary.at("provenance").get<std::string>().find(ds.content_hash()) != std::string::npos);
  const auto compare = fixtures::slurp(dir / "paper_compare.txt");
  CHECK(compare.find("table1.mean_m") != std::string::npos);
  CHECK(compare.find("table9.bogus") != std::string::npos);
  CHECK(fixtures::slurp(dir / "config.txt").find("k = 100") != std::string::npos);
  CHECK_THROWS_AS(export_report(report, "/proc/catres-no-such-dir/x"), IoError);
}

TEST_CASE("summary values and paper-compare files") {
  const auto report = analyze(generate(small(phased_config(0, 4.0))).dataset, RunConfig{});
  const auto values = summary_values(report);
  for (const char* key : {"table1.n", "table1.mean_m", "table1.pct_below_half", "table1.chi2_p", "table2.mean_d",
                          "table3.pct_positive", "table4.n_d", "table4.pct_kw_significant", "table5.mean_d_prime",
                          "table5.chi2_p_binomial"}) {
    INFO(key);
    CHECK(values.count(key) == 1);
  }
  CHECK(values.at("table1.mean_m") == report.confluence.summary.mean_m);

  fixtures::TempDir dir;
  fixtures::spit(dir / "expected.txt", "# expected\ntable1.mean_m = 0.453\n\ntable4.pct_negative=99.829  # comment\n");
  const auto expected = load_paper_compare(dir / "expected.txt");
  CHECK(expected.size() == 2);
  CHECK(expected.at("table4.pct_negative") == 99.829);
  const auto deltas = compare_with_paper(report, expected);
  REQUIRE(deltas.size() == 2);
  for (const auto& d : deltas) CHECK(d.computed.has_value());
  fixtures::spit(dir / "bad.txt", "table1.mean_m: 0.4\n");
  CHECK_THROWS_AS(load_paper_compare(dir / "bad.txt"), ParseError);
  fixtures::spit(dir / "nan.txt", "table1.mean_m = abc\n");
  CHECK_THROWS_AS(load_paper_compare(dir / "nan.txt"), ParseError);
}

TEST_CASE("rendered tables carry their headline rows") {
  const auto report = analyze(generate(small(phased_config(0, kHighPhasing))).dataset, RunConfig{});
  CHECK(render_table(report, 1).find("Table 1") != std::string::npos);
  CHECK(render_table(report, 5).find("Table 5") != std::string::npos);
  CHECK_THROWS(render_table(report, 6));
}
