// Shared helpers for the C++ test binaries.
#pragma once

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "comer/cli.hpp"
#include "comer/data.hpp"
#include "comer/hiergen.hpp"
#include "comer/training.hpp"

namespace comer::test {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("comer_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Lexicon small_lexicon(const Vocabulary& v, std::size_t dim, std::uint64_t seed = 5) {
  EmbeddingSource src;
  src.dim = dim;
  src.pseudo_seed = seed;
  return Lexicon(build_static_table(v.words, v.domains, v.slots, src), seed);
}

inline Vocabulary tiny_vocabulary() {
  return {{"i", "need", "a", "cheap", "hotel", "in", "the", "north", "train", "to", "cambridge", "ok", "what", "area",
           "20:45", "wednesday", "yes", "price", "range", "arrive", "by", "day", "parking"},
          {"hotel", "train"},
          {"area", "price range", "arrive by", "day", "parking"}};
}

/// Randomly initialised model with small sizes.
inline ComerModel small_model(std::size_t d_m, std::size_t d_e, std::uint64_t seed = 1, double dropout = 0.0) {
  ModelConfig cfg;
  cfg.decoder.model_dim = d_m;
  cfg.decoder.embed_dim = d_e;
  cfg.decoder.dropout = dropout;
  cfg.max_domains = 3;
  cfg.max_slots = 3;
  cfg.max_value_tokens = 3;
  ComerModel m = ComerModel::zeros(cfg);
  init_params(m.params(), seed);
  return m;
}

inline std::vector<std::string> words(const std::string& text) { return tokenize(text); }

inline BeliefState state(std::initializer_list<std::tuple<std::string, std::string, std::string>> items) {
  BeliefState b;
  for (const auto& [d, s, v] : items) b.set(d, s, tokenize(v));
  return b;
}

/// Snapshot of every parameter value.
inline std::vector<std::vector<double>> snapshot(const ParamList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.push_back(p.tensor.to_vector());
  return out;
}

/// Hand-scored prediction/gold pairs with their expected joint accuracies.
struct MetricFixture {
  std::vector<BeliefState> preds, golds;
  double jd = 0, jds = 0, jg = 0;
};

inline MetricFixture load_metric_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  auto j = nlohmann::json::parse(in);
  MetricFixture f;
  for (const auto& t : j.at("turns")) {
    f.preds.push_back(belief_from_json(t.at("pred")));
    f.golds.push_back(belief_from_json(t.at("gold")));
  }
  f.jd = j.at("expected").at("jd");
  f.jds = j.at("expected").at("jds");
  f.jg = j.at("expected").at("jg");
  return f;
}

}  // namespace comer::test
