#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "comer/belief.hpp"

namespace comer {

struct Turn {
  std::vector<std::string> system;  // previous system transcript tokens
  std::vector<std::string> user;    // user utterance tokens
  BeliefState state;                // accumulated gold state after this turn
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
};

enum class CorpusFormat { kWoz, kMultiWoz, kCanonical };
CorpusFormat parse_corpus_format(std::string_view name);

/// Reads a corpus file; nothing is returned on any error (DataError).
std::vector<Dialogue> load_corpus(const std::filesystem::path& path, CorpusFormat format);
std::vector<Dialogue> parse_corpus(const nlohmann::json& doc, CorpusFormat format,
                                   const std::string& source = "corpus");

/// Canonical mirror: {"dialogues":[{"id","turns":[{"system","user","state"}]}]}.
nlohmann::ordered_json corpus_to_json(std::span<const Dialogue> dialogues);
void save_canonical_corpus(std::span<const Dialogue> dialogues, const std::filesystem::path& path);

struct OntologyStats {
  double avg_turns = 0.0;        // t
  double avg_tokens = 0.0;       // s, user tokens per turn
  std::size_t slots = 0;         // n, counted as combined domain-slot labels
  std::size_t values = 0;        // m, distinct (domain, slot, value)
  std::size_t slots_nested = 0;  // distinct slot names
  std::size_t slots_combined = 0;
  std::size_t dialogues = 0;
  std::size_t turns = 0;
};

/// Throws DataError on an empty corpus.
OntologyStats corpus_stats(std::span<const Dialogue> dialogues);

/// Per-turn counts over the gold labels of every turn.
FrequencyTables compute_frequencies(std::span<const Dialogue> dialogues);

struct AccumulationReport {
  std::size_t violations = 0;
  std::vector<std::string> messages;
};
/// Reports turns that drop a (domain, slot) present in the previous turn.
AccumulationReport check_accumulation(std::span<const Dialogue> dialogues);

struct SyntheticSpec {
  std::size_t domains = 2;
  std::size_t slots_per_domain = 3;
  std::size_t values_per_slot = 6;
};

/// Templated dialogues whose gold states accumulate the pairs mentioned so
/// far. Slot names are distinct across domains and every value is a single
/// word that appears verbatim in the utterance introducing it.
std::vector<Dialogue> gen_synthetic(const SyntheticSpec& spec, std::size_t n_dialogues,
                                    std::uint64_t seed);

struct Vocabulary {
  std::vector<std::string> words;
  std::vector<std::string> domains;
  std::vector<std::string> slots;
};

/// Words of utterances and values, plus domain and slot names, sorted and
/// unique.
Vocabulary collect_vocabulary(std::span<const Dialogue> dialogues);
void merge_into(Vocabulary& into, const Vocabulary& from);

}  // namespace comer
