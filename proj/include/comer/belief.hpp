// Belief states as nested (domain, (slot, value)) structures, their canonical
// frequency-based order, and the flat token paradigm
//   domain - slot , value ; slot , value ; domain - ...
// whose delimiters are reserved control tokens.
#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "comer/embeddings.hpp"

namespace comer {

struct SlotValue {
  std::string slot;
  std::vector<std::string> value;
  bool operator==(const SlotValue&) const = default;
};

struct DomainState {
  std::string domain;
  std::vector<SlotValue> slots;
  bool operator==(const DomainState&) const = default;
};

struct Triplet {
  std::string domain;
  std::string slot;
  std::vector<std::string> value;
  bool operator==(const Triplet&) const = default;
};

std::string join_tokens(std::span<const std::string> tokens);

/// Order-preserving nested state. Equality is order-sensitive; use
/// same_content() for set semantics.
struct BeliefState {
  std::vector<DomainState> domains;

  bool empty() const { return domains.empty(); }
  /// Sets (domain, slot) to value, appending the domain/slot when new.
  void set(const std::string& domain, const std::string& slot, std::vector<std::string> value);
  const std::vector<std::string>* find(const std::string& domain, const std::string& slot) const;
  std::vector<Triplet> triplets() const;
  static BeliefState from_triplets(std::span<const Triplet> triplets);
  std::size_t slot_count() const;

  bool operator==(const BeliefState&) const = default;
};

/// Nested-map view with lexicographic order; the basis of exact-match metrics.
using StateMap = std::map<std::string, std::map<std::string, std::vector<std::string>>>;
StateMap to_map(const BeliefState& b);
bool same_content(const BeliefState& a, const BeliefState& b);

struct FrequencyTables {
  std::map<std::string, std::size_t> domain;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;

  std::size_t domain_count(const std::string& d) const;
  std::size_t slot_count(const std::string& d, const std::string& s) const;
};

/// Counts every domain and (domain, slot) occurrence over turn labels.
FrequencyTables compute_frequencies(std::span<const BeliefState> turn_labels);

/// Domains by descending frequency then name; slots likewise within a domain.
BeliefState canonical_order(const BeliefState& b, const FrequencyTables& freq);

using FlatState = std::vector<TokenUnit>;

/// Throws DataError when a value token is empty or spells a delimiter.
FlatState flatten(const BeliefState& b);

enum class ParseMode { kStrict, kLenient };

/// Inverse of flatten. Strict mode throws DataError on malformed input;
/// lenient mode drops malformed triplets and never throws. Domains left
/// without any slot are dropped.
BeliefState parse_flat(std::span<const TokenUnit> flat, ParseMode mode = ParseMode::kStrict);

/// Drops triplets with an empty component. A repeated (domain, slot) keeps
/// only its last occurrence, at that occurrence's position.
std::vector<Triplet> postprocess(std::span<const Triplet> triplets);

/// "domain;slot" labels, the flat view used by per-slot trackers.
struct CombinedSlotValue {
  std::string combined_slot;
  std::vector<std::string> value;
  bool operator==(const CombinedSlotValue&) const = default;
};
std::vector<CombinedSlotValue> to_combined(const BeliefState& b);
BeliefState from_combined(std::span<const CombinedSlotValue> pairs);

/// {"domain": {"slot": "value string"}} in state order.
nlohmann::ordered_json belief_to_json(const BeliefState& b);
/// Values are tokenized; throws DataError naming `where` on schema errors.
BeliefState belief_from_json(const nlohmann::json& j, const std::string& where = "state");

}  // namespace comer
