#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "run_config.hpp"

using namespace mgract::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mgr-act");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("toml subset") {
  const json j = parse_toml_subset(R"(
# comment
top = 1
[train]
loss = "ce"       # trailing comment
lr = 0.01
fast = true
[tokenize.extra]
list = [1, 2.5, "x#y"]
big = 1_000
)");
  CHECK(j.at("top") == 1);
  CHECK(j.at("train").at("loss") == "ce");
  CHECK(j.at("train").at("lr") == 0.01);
  CHECK(j.at("train").at("fast") == true);
  CHECK(j.at("tokenize").at("extra").at("list") == json::array({1, 2.5, "x#y"}));
  CHECK(j.at("tokenize").at("extra").at("big") == 1000);
  CHECK_THROWS_AS(parse_toml_subset("[train\nx=1"), UsageError);
  CHECK_THROWS_AS(parse_toml_subset("novalue"), UsageError);
  CHECK_THROWS_AS(parse_toml_subset("x = 1.2.3"), UsageError);
}

TEST_CASE("config files overlay defaults") {
  RunConfig cfg;
  apply_json(cfg, parse_toml_subset("[tokenize]\nalpha = 0.5\nselect_k = \"2..8\"\n[train]\nloss = \"ce\"\nd_tok = 16\n"));
  CHECK(cfg.hse.alpha == 0.5);
  REQUIRE(cfg.mgr.k_range);
  CHECK(cfg.mgr.k_range->hi == 8);
  CHECK(cfg.train.d_tok == 16);
  CHECK(cfg.train.d_mix == mgract::TrainConfig{}.d_mix);
  RunConfig round;
  apply_json(round, to_json(cfg));
  CHECK(to_json(round) == to_json(cfg));
  CHECK_THROWS_AS(apply_json(cfg, json::parse(R"({"tokenize":{"alpha":"x"}})")), UsageError);
}

TEST_CASE("k ranges") {
  CHECK(parse_k_range("2..10").lo == 2);
  CHECK(parse_k_range("2..10").hi == 10);
  CHECK(parse_k_range("6").lo == 6);
  CHECK(format_k_range({3, 7}) == "3..7");
  CHECK_THROWS_AS(parse_k_range("5..2"), UsageError);
  CHECK_THROWS_AS(parse_k_range("a"), UsageError);
}

TEST_CASE("usage errors exit 2 with help text") {
  const Result bad = cli({"tokenize", "--bogus"});
  CHECK(bad.code == 2);
  CHECK((bad.err + bad.out).find("Usage") != std::string::npos);
  CHECK(cli({}).code == 2);
  CHECK(cli({"train", "--tokens-dir", "x", "--out", "m.json", "--loss", "hinge"}).code == 2);
  CHECK(cli({"mine", "--labels", "x", "--min-support", "2"}).code == 2);
  CHECK(cli({"--version"}).code == 0);
}

TEST_CASE("data errors exit 1") {
  const Result r = cli({"tokenize", "--input", "/nonexistent/pose.json"});
  CHECK(r.code == 1);
  CHECK(r.err.find("does not exist") != std::string::npos);
}

TEST_CASE("end to end on a tiny synthetic set") {
  const fs::path root = fs::temp_directory_path() / "mgract_cli_test";
  fs::remove_all(root);
  const std::string data = (root / "data").string(), tokens = (root / "tokens").string();
  const std::string model = (root / "model.json").string();

  REQUIRE(cli({"synth", "--per-class", "3", "--duration", "1", "--out", data}).code == 0);
  CHECK(fs::exists(root / "data" / "provenance.json"));

  REQUIRE(cli({"tokenize", "--input", data, "--out", tokens, "--threads", "2"}).code == 0);
  const json tok = json::parse(slurp(root / "tokens" / "correct" / "correct_0000.json"));
  CHECK(tok.at("k") == 6);
  CHECK(tok.at("streams").contains("joint"));
  CHECK(tok.at("streams").contains("bone"));
  CHECK(tok.at("provenance").at("command") == "tokenize");

  const Result single = cli({"tokenize", "--input", (root / "data" / "freq-slow" / "freq-slow_0001.json").string()});
  REQUIRE(single.code == 0);
  CHECK(json::parse(single.out).at("label") == "freq-slow");

  REQUIRE(cli({"train", "--tokens-dir", tokens, "--out", model, "--epochs", "3", "--split", "0.7", "--history",
               (root / "history.csv").string()})
              .code == 0);
  CHECK(slurp(root / "history.csv").rfind("epoch,", 0) == 0);
  const json ck = json::parse(slurp(model));
  CHECK(ck.at("provenance").at("tokens").at("command") == "tokenize");

  const Result ev = cli({"eval", "--model", model, "--tokens-dir", tokens});
  REQUIRE(ev.code == 0);
  const json metrics = json::parse(ev.out);
  CHECK(metrics.contains("top1"));
  CHECK(metrics.contains("top5"));
  CHECK(metrics.contains("mean"));
  CHECK(metrics.at("count") == ck.at("test_ids").size());

  const std::string clip = (root / "data" / "correct" / "correct_0002.json").string();
  const Result rep = cli({"report", "--input", clip, "--model", model, "--cm-per-unit", "100"});
  REQUIRE(rep.code == 0);
  const json report = json::parse(rep.out);
  CHECK(report.contains("effectiveness"));
  CHECK(report.at("prediction").contains("primary"));
  const Result text = cli({"report", "--input", clip, "--format", "text"});
  CHECK(text.code == 0);
  CHECK(text.out.find("bpm") != std::string::npos);

  std::ofstream(root / "labels.txt") << "A,B\nA,B\nA,B\nB\n";
  const Result mine = cli({"mine", "--labels", (root / "labels.txt").string(), "--min-support", "0.25"});
  REQUIRE(mine.code == 0);
  CHECK(json::parse(mine.out).at("rules").size() >= 1);

  const Result ins = cli({"inspect", "--tokens", (root / "tokens" / "correct" / "correct_0000.json").string(), "--csv",
                          (root / "table.csv").string()});
  CHECK(ins.code == 0);
  CHECK(ins.out.find("left_wrist") != std::string::npos);
  CHECK(cli({"inspect"}).code == 2);
  fs::remove_all(root);
}
