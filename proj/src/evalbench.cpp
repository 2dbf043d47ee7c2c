#include "comer/evalbench.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include <Eigen/Core>

#include "comer/errors.hpp"

namespace comer {

namespace {

std::set<std::string> domain_set(const StateMap& m) {
  std::set<std::string> out;
  for (const auto& [d, _] : m) out.insert(d);
  return out;
}

std::set<std::pair<std::string, std::string>> pair_set(const StateMap& m) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& [d, slots] : m)
    for (const auto& [s, _] : slots) out.emplace(d, s);
  return out;
}

}  // namespace

TurnScore score_turn(const BeliefState& pred, const BeliefState& gold) {
  const StateMap p = to_map(pred), g = to_map(gold);
  TurnScore s;
  s.domains = domain_set(p) == domain_set(g);
  s.domain_slots = s.domains && pair_set(p) == pair_set(g);
  s.goal = s.domain_slots && p == g;
  return s;
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["jd"] = jd;
  j["jds"] = jds;
  j["jg"] = jg;
  j["turns"] = turns;
  return j;
}

MetricsReport metrics(std::span<const BeliefState> preds, std::span<const BeliefState> golds) {
  if (preds.size() != golds.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(preds.size()) + " predictions for " +
                                std::to_string(golds.size()) + " gold turns");
  }
  MetricsReport r;
  r.turns = preds.size();
  if (r.turns == 0) return r;
  std::size_t d = 0, ds = 0, g = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    TurnScore s = score_turn(preds[i], golds[i]);
    d += s.domains;
    ds += s.domain_slots;
    g += s.goal;
  }
  const double n = static_cast<double>(r.turns);
  r.jd = static_cast<double>(d) / n;
  r.jds = static_cast<double>(ds) / n;
  r.jg = static_cast<double>(g) / n;
  if (!(r.jg <= r.jds && r.jds <= r.jd)) throw std::logic_error("metrics: jg <= jds <= jd violated");
  return r;
}

MetricsReport evaluate(const ComerModel& model, const Lexicon& lexicon, std::span<const Dialogue> dialogues,
                       StateFeed feed) {
  std::vector<BeliefState> preds, golds;
  for (const auto& d : dialogues) {
    auto out = track_dialogue(d, model, lexicon, feed);
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      preds.push_back(std::move(out[t].state));
      golds.push_back(d.turns[t].state);
    }
  }
  return metrics(preds, golds);
}

ItcClass parse_itc(std::string_view name) {
  if (name == "O(1)" || name == "1" || name == "constant") return ItcClass::kConstant;
  if (name == "O(n)" || name == "n" || name == "linear") return ItcClass::kLinear;
  if (name == "O(mn)" || name == "mn" || name == "product") return ItcClass::kProduct;
  throw ConfigError("unknown inference time complexity \"" + std::string(name) + "\" (O(1), O(n), O(mn))");
}

const char* to_string(ItcClass c) {
  switch (c) {
    case ItcClass::kConstant: return "O(1)";
    case ItcClass::kLinear: return "O(n)";
    case ItcClass::kProduct: return "O(mn)";
  }
  return "?";
}

double itm(const OntologyStats& d1, const OntologyStats& d2, ItcClass itc) {
  auto ratio = [](double a, double b, const char* name) {
    if (!(a > 0.0)) throw std::invalid_argument(std::string("itm: ") + name + " of the first dataset must be positive");
    return b / a;
  };
  double k = ratio(d1.avg_turns, d2.avg_turns, "t") * ratio(d1.avg_tokens, d2.avg_tokens, "s");
  if (itc != ItcClass::kConstant) {
    k *= ratio(static_cast<double>(d1.slots), static_cast<double>(d2.slots), "n");
  }
  if (itc == ItcClass::kProduct) {
    k *= ratio(static_cast<double>(d1.values), static_cast<double>(d2.values), "m");
  }
  return k;
}

OntologyStats ontology_stats(double t, double s, std::size_t n, std::size_t m) {
  OntologyStats st;
  st.avg_turns = t;
  st.avg_tokens = s;
  st.slots = st.slots_combined = n;
  st.values = m;
  return st;
}

bool BenchReport::decode_calls_constant() const {
  for (const auto& l : levels)
    if (l.decode_calls != levels.front().decode_calls) return false;
  return true;
}

nlohmann::ordered_json BenchReport::to_json() const {
  nlohmann::ordered_json j;
  j["repeats"] = repeats;
  j["turns"] = turns;
  j["decode_calls_constant"] = decode_calls_constant();
  auto arr = nlohmann::ordered_json::array();
  for (const auto& l : levels) {
    nlohmann::ordered_json e;
    e["registered_slots"] = l.registered_slots;
    e["table_size"] = l.table_size;
    e["mean_seconds_per_turn"] = l.mean;
    e["stddev_seconds_per_turn"] = l.stddev;
    e["ratio"] = l.ratio;
    e["decode_calls"] = l.decode_calls;
    e["run_means"] = l.run_means;
    arr.push_back(std::move(e));
  }
  j["levels"] = std::move(arr);
  return j;
}

std::string BenchReport::to_table() const {
  std::ostringstream os;
  os << std::left << std::setw(8) << "slots" << std::setw(8) << "table" << std::right << std::setw(14)
     << "mean_ms/turn" << std::setw(12) << "stddev_ms" << std::setw(9) << "ratio" << std::setw(14)
     << "decode_calls" << '\n';
  os << std::fixed;
  for (const auto& l : levels) {
    os << std::left << std::setw(8) << l.registered_slots << std::setw(8) << l.table_size << std::right
       << std::setw(14) << std::setprecision(4) << l.mean * 1e3 << std::setw(12) << l.stddev * 1e3
       << std::setw(9) << std::setprecision(3) << l.ratio << std::setw(14) << l.decode_calls << '\n';
  }
  return os.str();
}

std::string BenchReport::to_csv() const {
  std::ostringstream os;
  os << "registered_slots,turn,seconds\n";
  os << std::setprecision(9);
  for (const auto& l : levels)
    for (std::size_t t = 0; t < l.turn_seconds.size(); ++t)
      os << l.registered_slots << ',' << t << ',' << l.turn_seconds[t] << '\n';
  return os.str();
}

BenchReport benchmark_inference(const ComerModel& model, const Lexicon& lexicon,
                                std::span<const Dialogue> dialogues, std::span<const std::size_t> inflation,
                                std::size_t repeats) {
  std::size_t turns = 0;
  for (const auto& d : dialogues) turns += d.turns.size();
  if (turns == 0) throw DataError("benchmark: no dialogue turns");
  if (inflation.empty()) throw std::invalid_argument("benchmark: no inflation levels");
  if (repeats == 0) throw std::invalid_argument("benchmark: repeats must be positive");
  Eigen::setNbThreads(1);

  using Clock = std::chrono::steady_clock;
  BenchReport rep;
  rep.repeats = repeats;
  rep.turns = turns;
  for (std::size_t n : inflation) {
    const Lexicon inflated = lexicon.with_registered_slots(n);
    BenchLevel level;
    level.registered_slots = n;
    level.table_size = inflated.size();

    auto pass = [&](std::vector<double>* seconds) {
      std::size_t calls = 0;
      for (const auto& d : dialogues) {
        BeliefState previous;
        for (const auto& turn : d.turns) {
          auto t0 = Clock::now();
          TurnPrediction p = predict_turn({turn.user, turn.system, previous}, model, inflated);
          auto t1 = Clock::now();
          if (seconds) seconds->push_back(std::chrono::duration<double>(t1 - t0).count());
          calls += p.decode_calls;
          previous = std::move(p.state);
        }
      }
      return calls;
    };

    level.decode_calls = pass(nullptr);  // warm-up
    for (std::size_t r = 0; r < repeats; ++r) {
      std::vector<double> seconds;
      pass(&seconds);
      double total = 0.0;
      for (double s : seconds) total += s;
      level.run_means.push_back(total / static_cast<double>(seconds.size()));
      level.turn_seconds = std::move(seconds);
    }
    double mean = 0.0;
    for (double m : level.run_means) mean += m;
    mean /= static_cast<double>(repeats);
    double var = 0.0;
    for (double m : level.run_means) var += (m - mean) * (m - mean);
    level.mean = mean;
    level.stddev = repeats > 1 ? std::sqrt(var / static_cast<double>(repeats - 1)) : 0.0;
    rep.levels.push_back(std::move(level));
  }
  for (auto& l : rep.levels) l.ratio = l.mean / rep.levels.front().mean;
  return rep;
}

}  // namespace comer
