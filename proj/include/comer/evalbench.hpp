#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "comer/belief.hpp"
#include "comer/data.hpp"
#include "comer/hiergen.hpp"

namespace comer {

struct TurnScore {
  bool domains = false;       // same domain set
  bool domain_slots = false;  // same (domain, slot) set
  bool goal = false;          // same (domain, slot, value) set
};

TurnScore score_turn(const BeliefState& pred, const BeliefState& gold);

struct MetricsReport {
  double jg = 0.0;
  double jd = 0.0;
  double jds = 0.0;
  std::size_t turns = 0;

  nlohmann::ordered_json to_json() const;
};

/// Throws std::invalid_argument on a length mismatch. An empty input gives
/// all-zero fractions over zero turns.
MetricsReport metrics(std::span<const BeliefState> preds, std::span<const BeliefState> golds);

/// Tracks every dialogue and scores each turn against its gold state.
MetricsReport evaluate(const ComerModel& model, const Lexicon& lexicon, std::span<const Dialogue> dialogues,
                       StateFeed feed);

enum class ItcClass { kConstant, kLinear, kProduct };  // O(1), O(n), O(mn)
ItcClass parse_itc(std::string_view name);
const char* to_string(ItcClass c);

/// K = h(t) h(s) h(n) h(m); h(x) = x_2 / x_1 for the factors the class
/// scales with, 1 otherwise. Throws std::invalid_argument on a
/// non-positive field of d1.
double itm(const OntologyStats& d1, const OntologyStats& d2, ItcClass itc);

/// Just the four quantities ITM reads.
OntologyStats ontology_stats(double t, double s, std::size_t n, std::size_t m);

struct BenchLevel {
  std::size_t registered_slots = 0;
  std::size_t table_size = 0;
  std::vector<double> run_means;  // mean per-turn seconds of each repeat
  double mean = 0.0;              // seconds per turn
  double stddev = 0.0;
  double ratio = 1.0;             // mean / mean of the first level
  std::size_t decode_calls = 0;   // over one pass of all turns
  std::vector<double> turn_seconds;  // per-turn latencies of the last repeat
};

struct BenchReport {
  std::vector<BenchLevel> levels;
  std::size_t repeats = 0;
  std::size_t turns = 0;

  bool decode_calls_constant() const;
  nlohmann::ordered_json to_json() const;
  std::string to_table() const;
  std::string to_csv() const;
};

/// Batch-size-1 predicted-feed inference over `dialogues` for each
/// inflation level: the lexicon gets that many registered slot units while
/// dialogue content stays fixed. A warm-up pass per level is excluded.
BenchReport benchmark_inference(const ComerModel& model, const Lexicon& lexicon,
                                std::span<const Dialogue> dialogues, std::span<const std::size_t> inflation,
                                std::size_t repeats = 5);

}  // namespace comer
