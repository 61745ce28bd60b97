#include <algorithm>
#include <sstream>

#include "catres/error.hpp"
#include "catres/extraction.hpp"
#include "catres/synth.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace catres;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SynthConfig small(SynthConfig cfg) {
  cfg.vocab_size = 400;
  cfg.layer0_size = 12;
  cfg.layer1_size = 10;
  cfg.embedding_dim = 16;
  return cfg;
}

}  // namespace

TEST_CASE("forward aggregation examples") {
  CHECK(forward_aggregate(std::vector<double>{0, 0}, std::vector<double>{5, 7}, 0) == 0.0);
  CHECK(forward_aggregate(std::vector<double>{0.5, -0.25}, std::vector<double>{2, 4}, 1) == 1.0);
  CHECK(forward_aggregate(std::vector<double>{1}, std::vector<double>{3.25}, 0) == 3.25);
  CHECK_THROWS_AS(forward_aggregate(std::vector<double>{1, 2}, std::vector<double>{1}, 0), DomainError);
}

TEST_CASE("config validation") {
  SynthConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.groups_per_neuron = 0;
  CHECK_THROWS_AS(generate(cfg), ValidationError);
  cfg = SynthConfig{};
  cfg.layer0_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = SynthConfig{};
  cfg.phasing_strength = -1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = SynthConfig{};
  cfg.precursor_fanin = 65;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("same config and seed give byte-identical files") {
  fixtures::TempDir a, b;
  const auto cfg = small(phased_config(3, 4.0));
  write_synth(a.path(), generate(cfg));
  write_synth(b.path(), generate(cfg));
  for (const char* name : {"profiles.jsonl", "weights.bin", "embeddings.bin", "embeddings.bin.vocab.jsonl", "ground_truth.jsonl"}) {
    INFO(name);
    REQUIRE(std::filesystem::exists(a / name));
    CHECK(fixtures::slurp(a / name) == fixtures::slurp(b / name));
  }
  fixtures::TempDir c;
  write_synth(c.path(), generate(small(phased_config(4, 4.0))));
  CHECK(fixtures::slurp(a / "profiles.jsonl") != fixtures::slurp(c / "profiles.jsonl"));
}

TEST_CASE("emitted files load through the ingest formats") {
  fixtures::TempDir dir;
  const auto out = generate(small(remix_config(1)));
  write_synth(dir.path(), out);
  const auto back = assemble_dataset(load_profiles(dir / "profiles.jsonl"), load_weights(dir / "weights.bin"),
                                     load_embeddings(dir / "embeddings.bin"));
  CHECK(back.content_hash() == out.dataset.content_hash());
}

TEST_CASE("layer-1 activations reconstruct exactly from layer 0") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto ds = generate(phased_config(seed, kHighPhasing)).dataset;
    const auto x = layer0_matrix(ds);
    const auto& w = ds.weights();
    std::size_t checked = 0;
    for (const auto& [ref, profile] : ds.profiles()) {
      if (ref.layer != 1) continue;
      const auto i = static_cast<std::size_t>(ref.index);
      const auto row_f = w.row(i);
      const std::vector<double> row(row_f.begin(), row_f.end());
      for (const auto& e : profile.entries) {
        std::vector<double> column(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) column[j] = x[j][static_cast<std::size_t>(e.id)];
        CHECK(forward_aggregate(row, column, w.bias[i]) == e.activation);
        ++checked;
      }
    }
    CHECK(checked == 64 * 120);
  }
}

TEST_CASE("ground truth: intended taken sets lie inside planted groups") {
  const auto out = generate(phased_config(2, kHighPhasing));
  const auto& truth = out.truth;
  REQUIRE(truth.designated.size() == 64);
  CHECK(truth.intended.size() == 64 * SynthConfig{}.precursor_fanin);
  for (const auto& it : truth.intended) {
    const auto& groups = truth.planted.at(static_cast<std::size_t>(it.precursor.index));
    const bool inside = std::any_of(groups.begin(), groups.end(), [&](const PlantedGroup& g) {
      return std::includes(g.tokens.begin(), g.tokens.end(), it.tokens.begin(), it.tokens.end());
    });
    CHECK(inside);
  }
  std::ostringstream gt;
  write_ground_truth(gt, truth);
  CHECK(gt.str().find("\"record\":\"intended_taken\"") != std::string::npos);
  // no phasing: nothing intended
  CHECK(generate(unphased_config(2)).truth.intended.empty());
}

TEST_CASE("null construction: weight rows are exchangeable across sources") {
  double designated_sum = 0.0, other_sum = 0.0;
  std::size_t designated_n = 0, other_n = 0, designated_top = 0, targets = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const auto out = generate(cfg);
    CHECK(cfg.phasing_strength == 0.0);
    CHECK(cfg.attention_contrast == 0.0);
    const auto& w = out.dataset.weights();
    for (std::size_t i = 0; i < w.target_size; ++i) {
      const auto& des = out.truth.designated[i];
      std::size_t best = 0;
      for (std::size_t j = 0; j < w.source_size; ++j) {
        const bool d = std::find(des.begin(), des.end(), j) != des.end();
        (d ? designated_sum : other_sum) += w.at(i, j);
        ++(d ? designated_n : other_n);
        if (w.at(i, j) > w.at(i, best)) best = j;
      }
      designated_top += std::find(des.begin(), des.end(), best) != des.end();
      ++targets;
    }
  }
  // 2,560 designated draws of N(0,1): the mean sits within 0.1 of zero
  CHECK(std::abs(designated_sum / static_cast<double>(designated_n)) < 0.1);
  CHECK(std::abs(other_sum / static_cast<double>(other_n)) < 0.05);
  // the strongest source is designated at the base rate 4/64 (40 of 640 expected)
  CHECK(designated_top < 70);
}

TEST_CASE("attention concentrates weight on designated precursors") {
  const auto out = generate(unphased_config(0));
  const auto& w = out.dataset.weights();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < w.target_size; ++i) {
    const auto pre = top_precursors(w, {1, static_cast<int>(i)}, 4);
    for (const auto& p : pre.precursors) {
      const auto& des = out.truth.designated[i];
      hits += std::find(des.begin(), des.end(), static_cast<std::size_t>(p.neuron.index)) != des.end();
    }
  }
  CHECK(hits >= 64 * 4 * 9 / 10);
}

TEST_CASE("high phasing: intended taken sets are realized in at least 95% of pairs") {
  std::size_t contained = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto out = generate(phased_config(seed, kHighPhasing));
    const auto cores = compute_cores(out.dataset, 100);
    for (const auto& it : out.truth.intended) {
      const auto part = taken_partition(cores.at(it.precursor), cores.at(it.target));
      contained += std::includes(part.taken.begin(), part.taken.end(), it.tokens.begin(), it.tokens.end());
      ++total;
    }
  }
  MESSAGE("containment " << contained << "/" << total);
  CHECK(static_cast<double>(contained) >= 0.95 * static_cast<double>(total));
}

TEST_CASE("median realized taken size does not decrease along the phasing grid") {
  std::vector<double> medians;
  for (double s : {0.0, kHighPhasing / 2, kHighPhasing}) {
    std::vector<double> sizes;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto pe = enumerate_pairs(generate(phased_config(seed, s)).dataset, 100, 10);
      for (const auto& p : pe.pairs) sizes.push_back(static_cast<double>(p.partition.taken.size()));
    }
    medians.push_back(median(sizes));
  }
  MESSAGE("median |taken| over the grid: " << medians[0] << ", " << medians[1] << ", " << medians[2]);
  CHECK(medians[0] <= medians[1]);
  CHECK(medians[1] <= medians[2]);
}
