#include "comer/data.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "comer/errors.hpp"

namespace comer {

using nlohmann::json;

namespace {

std::string normalize(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw DataError(where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw DataError(where + ": missing \"" + key + "\"");
  return *it;
}

std::string string_field(const json& j, const char* key, const std::string& where, bool optional = false) {
  if (optional && (!j.is_object() || !j.contains(key) || j.at(key).is_null())) return {};
  const json& v = require(j, key, where);
  if (!v.is_string()) throw DataError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

std::string dialogue_id(const json& d, std::size_t i) {
  for (const char* key : {"id", "dialogue_idx", "dialogue_id"}) {
    if (!d.contains(key)) continue;
    const json& v = d.at(key);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
  }
  return "dialogue-" + std::to_string(i);
}

// Inform-act (slot, value) pairs of a TRADE/WoZ style turn.
std::vector<std::pair<std::string, std::string>> inform_slots(const json& turn, const std::string& where) {
  std::vector<std::pair<std::string, std::string>> out;
  const json& bs = require(turn, "belief_state", where);
  if (!bs.is_array()) throw DataError(where + ".belief_state: expected an array");
  for (std::size_t i = 0; i < bs.size(); ++i) {
    const std::string w = where + ".belief_state[" + std::to_string(i) + "]";
    const json& entry = bs[i];
    if (!entry.is_object()) throw DataError(w + ": expected an object");
    if (entry.contains("act") && entry["act"].is_string() && entry["act"] != "inform") continue;
    const json& slots = require(entry, "slots", w);
    if (!slots.is_array()) throw DataError(w + ".slots: expected an array");
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const json& pair = slots[k];
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string()) {
        throw DataError(w + ".slots[" + std::to_string(k) + "]: expected [slot, value] strings");
      }
      out.emplace_back(normalize(pair[0].get<std::string>()), normalize(pair[1].get<std::string>()));
    }
  }
  return out;
}

bool empty_value(const std::string& v) { return v.empty() || v == "none"; }

std::vector<Dialogue> parse_trade(const json& doc, bool woz, const std::string& source) {
  if (!doc.is_array()) throw DataError(source + ": expected a list of dialogues");
  std::vector<Dialogue> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = source + "[" + std::to_string(i) + "]";
    const json& d = doc[i];
    if (!d.is_object()) throw DataError(where + ": expected an object");
    Dialogue dia;
    dia.id = dialogue_id(d, i);
    const json& turns = require(d, "dialogue", where);
    if (!turns.is_array()) throw DataError(where + ".dialogue: expected an array");
    for (std::size_t t = 0; t < turns.size(); ++t) {
      const std::string tw = where + ".dialogue[" + std::to_string(t) + "]";
      const json& turn = turns[t];
      Turn out_turn;
      out_turn.system = tokenize(string_field(turn, "system_transcript", tw, true));
      out_turn.user = tokenize(string_field(turn, "transcript", tw));
      for (const auto& [slot, value] : inform_slots(turn, tw)) {
        if (empty_value(value)) continue;
        std::string domain, name;
        if (woz) {
          if (slot == "name" || slot == "request") continue;
          domain = "restaurant";
          name = slot;
        } else {
          auto dash = slot.find('-');
          if (dash == std::string::npos || dash == 0 || dash + 1 == slot.size()) {
            throw DataError(tw + ": slot \"" + slot + "\" is not of the form domain-slot");
          }
          domain = slot.substr(0, dash);
          name = slot.substr(dash + 1);
        }
        auto value_tokens = tokenize(value);
        if (value_tokens.empty()) continue;
        out_turn.state.set(domain, name, std::move(value_tokens));
      }
      dia.turns.push_back(std::move(out_turn));
    }
    out.push_back(std::move(dia));
  }
  return out;
}

std::vector<Dialogue> parse_canonical(const json& doc, const std::string& source) {
  const json& dialogues = require(doc, "dialogues", source);
  if (!dialogues.is_array()) throw DataError(source + ".dialogues: expected an array");
  std::vector<Dialogue> out;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    const std::string where = source + ".dialogues[" + std::to_string(i) + "]";
    const json& d = dialogues[i];
    Dialogue dia;
    dia.id = dialogue_id(d, i);
    const json& turns = require(d, "turns", where);
    if (!turns.is_array()) throw DataError(where + ".turns: expected an array");
    for (std::size_t t = 0; t < turns.size(); ++t) {
      const std::string tw = where + ".turns[" + std::to_string(t) + "]";
      Turn turn;
      turn.system = tokenize(string_field(turns[t], "system", tw, true));
      turn.user = tokenize(string_field(turns[t], "user", tw));
      turn.state = belief_from_json(require(turns[t], "state", tw), tw + ".state");
      dia.turns.push_back(std::move(turn));
    }
    out.push_back(std::move(dia));
  }
  return out;
}

}  // namespace

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "woz") return CorpusFormat::kWoz;
  if (name == "multiwoz") return CorpusFormat::kMultiWoz;
  if (name == "canonical" || name == "json") return CorpusFormat::kCanonical;
  throw ConfigError("unknown corpus format \"" + std::string(name) + "\" (woz, multiwoz, canonical)");
}

std::vector<Dialogue> parse_corpus(const json& doc, CorpusFormat format, const std::string& source) {
  switch (format) {
    case CorpusFormat::kWoz: return parse_trade(doc, true, source);
    case CorpusFormat::kMultiWoz: return parse_trade(doc, false, source);
    case CorpusFormat::kCanonical: return parse_canonical(doc, source);
  }
  throw DataError("unsupported corpus format");
}

std::vector<Dialogue> load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_corpus(doc, format, path.filename().string());
}

nlohmann::ordered_json corpus_to_json(std::span<const Dialogue> dialogues) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& d : dialogues) {
    nlohmann::ordered_json turns = nlohmann::ordered_json::array();
    for (const auto& t : d.turns) {
      nlohmann::ordered_json jt;
      jt["system"] = join_tokens(t.system);
      jt["user"] = join_tokens(t.user);
      jt["state"] = belief_to_json(t.state);
      turns.push_back(std::move(jt));
    }
    nlohmann::ordered_json jd;
    jd["id"] = d.id;
    jd["turns"] = std::move(turns);
    arr.push_back(std::move(jd));
  }
  nlohmann::ordered_json doc;
  doc["dialogues"] = std::move(arr);
  return doc;
}

void save_canonical_corpus(std::span<const Dialogue> dialogues, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << corpus_to_json(dialogues).dump(1) << '\n';
}

OntologyStats corpus_stats(std::span<const Dialogue> dialogues) {
  if (dialogues.empty()) throw DataError("corpus_stats: empty corpus");
  OntologyStats st;
  std::set<std::string> slot_names;
  std::set<std::pair<std::string, std::string>> combined;
  std::set<std::tuple<std::string, std::string, std::string>> values;
  std::size_t tokens = 0;
  for (const auto& d : dialogues) {
    st.turns += d.turns.size();
    for (const auto& t : d.turns) {
      tokens += t.user.size();
      for (const auto& tr : t.state.triplets()) {
        slot_names.insert(tr.slot);
        combined.emplace(tr.domain, tr.slot);
        values.emplace(tr.domain, tr.slot, join_tokens(tr.value));
      }
    }
  }
  if (st.turns == 0) throw DataError("corpus_stats: corpus has no turns");
  st.dialogues = dialogues.size();
  st.avg_turns = static_cast<double>(st.turns) / static_cast<double>(st.dialogues);
  st.avg_tokens = static_cast<double>(tokens) / static_cast<double>(st.turns);
  st.slots_nested = slot_names.size();
  st.slots_combined = combined.size();
  st.slots = st.slots_combined;
  st.values = values.size();
  return st;
}

FrequencyTables compute_frequencies(std::span<const Dialogue> dialogues) {
  std::vector<BeliefState> labels;
  for (const auto& d : dialogues)
    for (const auto& t : d.turns) labels.push_back(t.state);
  return compute_frequencies(std::span<const BeliefState>(labels));
}

AccumulationReport check_accumulation(std::span<const Dialogue> dialogues) {
  AccumulationReport rep;
  for (const auto& d : dialogues) {
    for (std::size_t t = 1; t < d.turns.size(); ++t) {
      for (const auto& tr : d.turns[t - 1].state.triplets()) {
        if (d.turns[t].state.find(tr.domain, tr.slot)) continue;
        ++rep.violations;
        rep.messages.push_back(d.id + " turn " + std::to_string(t) + " drops " + tr.domain + "/" + tr.slot);
      }
    }
  }
  return rep;
}

namespace {

constexpr std::string_view kDomainPool[] = {"restaurant", "hotel", "train", "taxi",
                                            "attraction", "hospital", "police", "bus"};
constexpr std::string_view kSlotPool[] = {
    "area",      "price range", "food",        "stars",     "parking",   "book day",
    "leave at",  "arrive by",   "destination", "departure", "book people", "book stay",
    "type",      "internet",    "book time",   "department", "postcode", "phone"};
constexpr std::string_view kSyllables[] = {"ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "pe", "su"};

std::string pick_name(std::span<const std::string_view> pool, std::size_t i, const char* fallback) {
  if (i < pool.size()) return std::string(pool[i]);
  return std::string(fallback) + " " + std::to_string(i);
}

std::string value_word(std::size_t id) {
  std::string w;
  std::size_t n = id;
  for (int k = 0; k < 3 || n > 0; ++k) {
    w += kSyllables[n % 10];
    n /= 10;
  }
  return w;
}

}  // namespace

std::vector<Dialogue> gen_synthetic(const SyntheticSpec& spec, std::size_t n_dialogues, std::uint64_t seed) {
  if (spec.domains == 0 || spec.slots_per_domain == 0 || spec.values_per_slot == 0) {
    throw std::invalid_argument("gen_synthetic: ontology sizes must be positive");
  }
  std::vector<std::string> domains(spec.domains);
  std::vector<std::vector<std::string>> slots(spec.domains);
  std::vector<std::vector<std::vector<std::string>>> values(spec.domains);
  for (std::size_t d = 0; d < spec.domains; ++d) {
    domains[d] = pick_name(kDomainPool, d, "domain");
    for (std::size_t s = 0; s < spec.slots_per_domain; ++s) {
      const std::size_t gs = d * spec.slots_per_domain + s;
      slots[d].push_back(pick_name(kSlotPool, gs, "slot"));
      std::vector<std::string> vals;
      for (std::size_t v = 0; v < spec.values_per_slot; ++v) vals.push_back(value_word(gs * spec.values_per_slot + v));
      values[d].push_back(std::move(vals));
    }
  }

  Rng rng(seed);
  auto uniform = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  std::bernoulli_distribution second_domain(0.3);

  std::vector<Dialogue> out;
  out.reserve(n_dialogues);
  for (std::size_t i = 0; i < n_dialogues; ++i) {
    Dialogue dia;
    dia.id = "syn-" + std::to_string(i);
    std::vector<std::size_t> active{uniform(spec.domains)};
    if (spec.domains > 1 && second_domain(rng)) {
      std::size_t other = uniform(spec.domains - 1);
      active.push_back(other >= active[0] ? other + 1 : other);
    }
    std::vector<std::pair<std::size_t, std::size_t>> open;
    for (auto d : active)
      for (std::size_t s = 0; s < spec.slots_per_domain; ++s) open.emplace_back(d, s);
    std::shuffle(open.begin(), open.end(), rng);

    const std::size_t n_turns = 1 + uniform(3);
    BeliefState state;
    std::vector<std::string> confirm;
    for (std::size_t t = 0; t < n_turns && !open.empty(); ++t) {
      const std::size_t k = std::min<std::size_t>(open.size(), 1 + uniform(2));
      std::vector<std::pair<std::size_t, std::size_t>> now(open.begin(), open.begin() + static_cast<long>(k));
      open.erase(open.begin(), open.begin() + static_cast<long>(k));
      std::stable_sort(now.begin(), now.end(), [](auto& a, auto& b) { return a.first < b.first; });

      std::ostringstream user;
      std::vector<std::string> mentioned;
      std::size_t last_domain = spec.domains;
      for (const auto& [d, s] : now) {
        const std::string& v = values[d][s][uniform(spec.values_per_slot)];
        if (d != last_domain) {
          if (last_domain != spec.domains) user << " . also ";
          user << "i need a " << domains[d] << " with ";
          last_domain = d;
        } else {
          user << " and ";
        }
        user << v << " " << slots[d][s];
        state.set(domains[d], slots[d][s], {v});
        mentioned.push_back(v + " " + slots[d][s]);
      }
      Turn turn;
      if (!confirm.empty()) {
        std::string sys = "ok ,";
        for (std::size_t m = 0; m < confirm.size(); ++m) sys += (m ? " and " : " ") + confirm[m];
        turn.system = tokenize(sys + " noted . anything else ?");
      }
      turn.user = tokenize(user.str());
      turn.state = state;
      dia.turns.push_back(std::move(turn));
      confirm = std::move(mentioned);
    }
    out.push_back(std::move(dia));
  }
  return out;
}

Vocabulary collect_vocabulary(std::span<const Dialogue> dialogues) {
  std::set<std::string> words, domains, slots;
  for (const auto& d : dialogues) {
    for (const auto& t : d.turns) {
      words.insert(t.system.begin(), t.system.end());
      words.insert(t.user.begin(), t.user.end());
      for (const auto& tr : t.state.triplets()) {
        domains.insert(tr.domain);
        slots.insert(tr.slot);
        words.insert(tr.value.begin(), tr.value.end());
        for (auto& w : tokenize(tr.domain)) words.insert(w);
        for (auto& w : tokenize(tr.slot)) words.insert(w);
      }
    }
  }
  for (auto c : tokens::control()) words.erase(std::string(c));
  return {{words.begin(), words.end()}, {domains.begin(), domains.end()}, {slots.begin(), slots.end()}};
}

void merge_into(Vocabulary& into, const Vocabulary& from) {
  auto merge = [](std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> s(a.begin(), a.end());
    s.insert(b.begin(), b.end());
    a.assign(s.begin(), s.end());
  };
  merge(into.words, from.words);
  merge(into.domains, from.domains);
  merge(into.slots, from.slots);
}

}  // namespace comer
