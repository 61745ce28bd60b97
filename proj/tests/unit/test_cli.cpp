#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"

using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(CATRES_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (const auto n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string inputs(const fixtures::TempDir& d) {
  const auto p = [&](const char* n) { return (d / n).string(); };
  return "--profiles " + p("profiles.jsonl") + " --weights " + p("weights.bin") + " --embeddings " + p("embeddings.bin");
}

const char* kSmall = "--vocab-size 600 --layer0 12 --layer1 8 --dim 16 --phasing 8 --attention 4";

}  // namespace

TEST_CASE("synth, ingest, analyze and export end to end") {
  fixtures::TempDir data, out;
  REQUIRE(run("--log-level off synth --out " + data.path().string() + " --seed 3 " + kSmall).code == 0);

  const auto ingest = run("--log-level off ingest " + inputs(data));
  REQUIRE(ingest.code == 0);
  const json info = json::parse(ingest.out);
  CHECK(info.at("profiles") == 20);
  CHECK(info.at("vocab") == 600);
  CHECK(info.at("content_hash").get<std::string>().size() == 64);

  REQUIRE(run("--log-level off export " + inputs(data) + " --out " + out.path().string() + " --workers 2").code == 0);
  for (const char* name : {"summary.json", "table1.txt", "table5.txt", "config.txt", "distancing.csv"}) {
    INFO(name);
    CHECK(std::filesystem::exists(out / name));
  }
  CHECK(std::filesystem::exists(out / "bundle" / "index.json"));
  CHECK(std::filesystem::exists(out / "bundle" / "neurons" / "1" / "7.json"));
  const json summary = json::parse(fixtures::slurp(out / "summary.json"));
  CHECK(summary.at("provenance").get<std::string>().find(info.at("content_hash").get<std::string>()) != std::string::npos);
}

TEST_CASE("config file supplies defaults; flags override") {
  fixtures::TempDir data, a, b;
  REQUIRE(run("--log-level off synth --out " + data.path().string() + " " + kSmall).code == 0);
  fixtures::spit(a / "run.cfg", "# shared\nk = 40\nclusters=3\nbogus-key = 1\n");

  REQUIRE(run("--log-level off --config " + (a / "run.cfg").string() + " analyze " + inputs(data) + " --out " +
              a.path().string())
              .code == 0);
  const auto cfg_a = fixtures::slurp(a / "config.txt");
  CHECK(cfg_a.find("k = 40") != std::string::npos);
  CHECK(cfg_a.find("clusters = 3") != std::string::npos);

  REQUIRE(run("--log-level off --config " + (a / "run.cfg").string() + " analyze " + inputs(data) + " --out " +
              b.path().string() + " --k 60")
              .code == 0);
  const auto cfg_b = fixtures::slurp(b / "config.txt");
  CHECK(cfg_b.find("k = 60") != std::string::npos);
  CHECK(cfg_b.find("clusters = 3") != std::string::npos);

  fixtures::spit(a / "broken.cfg", "k 40\n");
  CHECK(run("--config " + (a / "broken.cfg").string() + " analyze " + inputs(data) + " --out " + b.path().string()).code ==
        2);
  CHECK(run("--config /nonexistent/run.cfg analyze " + inputs(data) + " --out " + b.path().string()).code == 3);
}

TEST_CASE("exit codes") {
  fixtures::TempDir data, out;
  REQUIRE(run("--log-level off synth --out " + data.path().string() + " " + kSmall).code == 0);
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("analyze --out " + out.path().string()).code == 2);
  CHECK(run("analyze " + inputs(data) + " --out " + out.path().string() + " --k 0").code == 2);
  CHECK(run("analyze " + inputs(data) + " --out " + out.path().string() + " --method kmeans").code == 2);
  CHECK(run("analyze " + inputs(data) + " --out " + out.path().string() + " --method llm").code == 2);
  CHECK(run("synth --out " + out.path().string() + " --groups-per-neuron 0").code == 2);
  CHECK(run("ingest --profiles /nonexistent.jsonl --weights " + (data / "weights.bin").string() + " --embeddings " +
            (data / "embeddings.bin").string())
            .code == 3);
  CHECK(run("serve --bundle /nonexistent/bundle --port 0").code == 3);

  fixtures::spit(data / "profiles.jsonl", "{\"layer\":0,\n");
  CHECK(run("ingest " + inputs(data)).code == 2);

  CHECK(run("--help").code == 0);
}
