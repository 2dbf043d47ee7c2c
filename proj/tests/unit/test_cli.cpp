#include <doctest.h>

#include <fstream>
#include <sstream>

#include "comer/cli.hpp"
#include "comer/errors.hpp"
#include "support.hpp"

using namespace comer;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<nlohmann::json> json_lines(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

// A corpus, a small config and one trained checkpoint shared by the cases.
struct Workspace {
  std::filesystem::path dir = test::temp_dir("cli");
  std::string corpus = (dir / "corpus.json").string();
  std::string config = (dir / "config.json").string();
  std::string ckpt = (dir / "model.ckpt").string();

  Workspace() {
    REQUIRE(run({"gen-synthetic", "--domains", "1", "--slots", "2", "--values", "3", "--dialogues", "5", "--seed",
                 "3", "--out", corpus})
                .code == 0);
    std::ofstream(config) << nlohmann::json{{"d_m", 8},           {"d_e", 16},        {"dropout", 0.2},
                                            {"epochs", 2},        {"batch_size", 4},  {"lr", 0.01},
                                            {"max_domains", 2},   {"max_slots", 3},   {"max_value_tokens", 2},
                                            {"save_epochs", true}, {"corpus", corpus}}
                                 .dump();
  }

  Result train(const std::string& out, const std::string& seed = "1") {
    return run({"train", "--config", config, "--checkpoint", out, "--seed", seed, "--json"});
  }
};

Workspace& ws() {
  static Workspace w;
  static bool trained = false;
  if (!trained) {
    REQUIRE(w.train(w.ckpt).code == 0);
    trained = true;
  }
  return w;
}

}  // namespace

TEST_CASE("train writes a checkpoint, per-epoch checkpoints and metrics") {
  auto& w = ws();
  CHECK(std::filesystem::exists(w.ckpt));
  CHECK(std::filesystem::exists(w.ckpt + ".epoch0"));
  CHECK(std::filesystem::exists(w.ckpt + ".epoch1"));
  auto m = nlohmann::json::parse(slurp(w.ckpt + ".metrics.json"));
  CHECK(m["epochs"].size() == 2);
  CHECK(m["config"]["d_m"] == 8);
  CHECK(m["epochs"][0].contains("first_batch_loss"));
}

TEST_CASE("epoch-0 results repeat for a seed") {
  auto& w = ws();
  const std::string other = (w.dir / "again.ckpt").string();
  REQUIRE(w.train(other).code == 0);
  auto a = nlohmann::json::parse(slurp(w.ckpt + ".metrics.json"));
  auto b = nlohmann::json::parse(slurp(other + ".metrics.json"));
  CHECK(a["epochs"][0]["loss"] == b["epochs"][0]["loss"]);
  CHECK(a["epochs"][0]["first_batch_loss"] == b["epochs"][0]["first_batch_loss"]);
  CHECK(slurp(w.ckpt + ".epoch0") == slurp(other + ".epoch0"));
}

TEST_CASE("eval prints identical metrics on repeated runs") {
  auto& w = ws();
  Result a = run({"eval", "--checkpoint", w.ckpt, "--corpus", w.corpus});
  Result b = run({"eval", "--checkpoint", w.ckpt, "--corpus", w.corpus});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  auto j = nlohmann::json::parse(a.out);
  CHECK(j["jg"] <= j["jds"]);
  CHECK(j["jds"] <= j["jd"]);
  Result gold = run({"eval", "--checkpoint", w.ckpt, "--corpus", w.corpus, "--state-feed", "gold"});
  CHECK(gold.code == 0);

  Result oracle = run({"eval", "--oracle", "--corpus", w.corpus});
  REQUIRE(oracle.code == 0);
  CHECK(nlohmann::json::parse(oracle.out)["jg"] == 1.0);
}

TEST_CASE("predict emits one line per turn and attention per step") {
  auto& w = ws();
  const std::string att = (w.dir / "att.jsonl").string();
  Result r = run({"predict", "--checkpoint", w.ckpt, "--dialogue", w.corpus, "--attention", att});
  REQUIRE(r.code == 0);
  auto rows = json_lines(r.out);
  auto corpus = load_corpus(w.corpus, CorpusFormat::kCanonical);
  std::size_t turns = 0;
  for (const auto& d : corpus) turns += d.turns.size();
  CHECK(rows.size() == turns);
  CHECK(rows[0]["dialogue"] == corpus[0].id);
  CHECK(rows[0]["turn"] == 0);
  CHECK(rows[0]["state"].is_object());
  CHECK(rows[0]["decode_calls"].get<int>() >= 1);

  auto records = json_lines(slurp(att));
  CHECK(records.size() >= rows.size());
  std::size_t level1 = 0;
  for (const auto& rec : records) level1 += rec["level"] == 1 && rec["step"] == 0;
  CHECK(level1 == turns);
  CHECK(records[0].contains("weights_belief"));
}

TEST_CASE("bench prints one row per inflation level") {
  auto& w = ws();
  Result r = run({"bench", "--checkpoint", w.ckpt, "--corpus", w.corpus, "--inflation", "2,10", "--repeats", "1",
                  "--json"});
  REQUIRE(r.code == 0);
  auto j = nlohmann::json::parse(r.out);
  REQUIRE(j["levels"].size() == 2);
  CHECK(j["levels"][0]["ratio"] == 1.0);
  CHECK(j["levels"][1]["registered_slots"] == 10);
  Result bad = run({"bench", "--checkpoint", w.ckpt, "--corpus", w.corpus, "--inflation", "1"});
  CHECK(bad.code == 2);
}

TEST_CASE("stats and itm") {
  auto& w = ws();
  Result s = run({"stats", "--corpus", w.corpus});
  REQUIRE(s.code == 0);
  auto j = nlohmann::json::parse(s.out);
  CHECK(j["dialogues"] == 5);
  CHECK(j["n"] == 2);
  CHECK(j["accumulation_violations"] == 0);

  Result k = run({"itm", "--d1", "7.45,11.24,3,99", "--d2", "13.68,13.18,35,4510", "--itc", "O(mn)"});
  REQUIRE(k.code == 0);
  CHECK(nlohmann::json::parse(k.out)["K"].get<double>() == doctest::Approx(1144.3).epsilon(1e-3));
  CHECK(run({"itm", "--d1", "7.45,11.24,3", "--d2", "1,1,1,1"}).code == 2);
}

TEST_CASE("exit codes") {
  auto& w = ws();
  Result missing = run({"train", "--config", w.config, "--corpus", (w.dir / "nope.json").string(), "--checkpoint",
                        (w.dir / "x.ckpt").string()});
  CHECK(missing.code == 3);
  CHECK(missing.err.find("nope.json") != std::string::npos);

  std::ofstream(w.dir / "bad_config.json") << R"({"d_m": 8, "learning_rate": 1})";
  Result unknown = run({"train", "--config", (w.dir / "bad_config.json").string()});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("learning_rate") != std::string::npos);

  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"eval", "--corpus", w.corpus, "--state-feed", "psychic", "--checkpoint", w.ckpt}).code == 2);

  std::string bytes = slurp(w.ckpt);
  bytes[bytes.size() - 5] ^= 0x10;
  const auto tampered = (w.dir / "tampered.ckpt").string();
  std::ofstream(tampered, std::ios::binary) << bytes;
  Result t = run({"eval", "--checkpoint", tampered, "--corpus", w.corpus});
  CHECK(t.code == 5);
  CHECK(run({"eval", "--checkpoint", (w.dir / "none.ckpt").string(), "--corpus", w.corpus}).code == 3);
}

TEST_CASE("config files") {
  auto dir = test::temp_dir("clicfg");
  std::ofstream(dir / "c.json") << R"({"corpus": "a.json", "lr": 0.1, "value_outputs": "slot", "embedding_seed": 4})";
  cli::RunConfig c = cli::RunConfig::load((dir / "c.json").string());
  CHECK(c.corpus == "a.json");
  CHECK(c.train.lr == 0.1);
  CHECK(c.train.model.value_outputs == ValueOutputs::kSlot);
  CHECK(c.embedding_seed == 4);
  std::ofstream(dir / "broken.json") << "{";
  CHECK_THROWS_AS(cli::RunConfig::load((dir / "broken.json").string()), ConfigError);
}
