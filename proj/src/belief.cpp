#include "comer/belief.hpp"

#include <algorithm>
#include <optional>
#include <set>

#include "comer/errors.hpp"

namespace comer {

namespace {

bool is_control(const TokenUnit& t, std::string_view surface) {
  return t.kind == TokenKind::kControl && t.surface == surface;
}

bool is_reserved_surface(const std::string& s) {
  return s == tokens::kDomainMark || s == tokens::kSlotMark || s == tokens::kValueEnd ||
         s == tokens::kCls || s == tokens::kSep;
}

}  // namespace

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (t.empty()) continue;
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

// ---- BeliefState -----------------------------------------------------------

void BeliefState::set(const std::string& domain, const std::string& slot,
                      std::vector<std::string> value) {
  auto d = std::find_if(domains.begin(), domains.end(),
                        [&](const DomainState& x) { return x.domain == domain; });
  if (d == domains.end()) {
    domains.push_back({domain, {}});
    d = std::prev(domains.end());
  }
  auto s = std::find_if(d->slots.begin(), d->slots.end(),
                        [&](const SlotValue& x) { return x.slot == slot; });
  if (s == d->slots.end()) {
    d->slots.push_back({slot, std::move(value)});
  } else {
    s->value = std::move(value);
  }
}

const std::vector<std::string>* BeliefState::find(const std::string& domain,
                                                  const std::string& slot) const {
  for (const auto& d : domains) {
    if (d.domain != domain) continue;
    for (const auto& s : d.slots) {
      if (s.slot == slot) return &s.value;
    }
  }
  return nullptr;
}

std::vector<Triplet> BeliefState::triplets() const {
  std::vector<Triplet> out;
  for (const auto& d : domains) {
    for (const auto& s : d.slots) out.push_back({d.domain, s.slot, s.value});
  }
  return out;
}

BeliefState BeliefState::from_triplets(std::span<const Triplet> triplets) {
  BeliefState b;
  for (const auto& t : triplets) b.set(t.domain, t.slot, t.value);
  return b;
}

std::size_t BeliefState::slot_count() const {
  std::size_t n = 0;
  for (const auto& d : domains) n += d.slots.size();
  return n;
}

StateMap to_map(const BeliefState& b) {
  StateMap m;
  for (const auto& d : b.domains) {
    auto& slots = m[d.domain];
    for (const auto& s : d.slots) slots[s.slot] = s.value;
  }
  return m;
}

bool same_content(const BeliefState& a, const BeliefState& b) { return to_map(a) == to_map(b); }

// ---- ordering --------------------------------------------------------------

std::size_t FrequencyTables::domain_count(const std::string& d) const {
  auto it = domain.find(d);
  return it == domain.end() ? 0 : it->second;
}

std::size_t FrequencyTables::slot_count(const std::string& d, const std::string& s) const {
  auto it = slot.find({d, s});
  return it == slot.end() ? 0 : it->second;
}

FrequencyTables compute_frequencies(std::span<const BeliefState> turn_labels) {
  FrequencyTables f;
  for (const auto& b : turn_labels) {
    for (const auto& d : b.domains) {
      ++f.domain[d.domain];
      for (const auto& s : d.slots) ++f.slot[{d.domain, s.slot}];
    }
  }
  return f;
}

BeliefState canonical_order(const BeliefState& b, const FrequencyTables& freq) {
  BeliefState out = b;
  std::stable_sort(out.domains.begin(), out.domains.end(),
                   [&](const DomainState& x, const DomainState& y) {
                     auto fx = freq.domain_count(x.domain), fy = freq.domain_count(y.domain);
                     if (fx != fy) return fx > fy;
                     return x.domain < y.domain;
                   });
  for (auto& d : out.domains) {
    std::stable_sort(d.slots.begin(), d.slots.end(), [&](const SlotValue& x, const SlotValue& y) {
      auto fx = freq.slot_count(d.domain, x.slot), fy = freq.slot_count(d.domain, y.slot);
      if (fx != fy) return fx > fy;
      return x.slot < y.slot;
    });
  }
  return out;
}

// ---- flat paradigm ---------------------------------------------------------

FlatState flatten(const BeliefState& b) {
  FlatState out;
  for (const auto& d : b.domains) {
    out.push_back({d.domain, TokenKind::kDomain});
    out.push_back(tokens::control_unit(tokens::kDomainMark));
    for (const auto& s : d.slots) {
      out.push_back({s.slot, TokenKind::kSlot});
      out.push_back(tokens::control_unit(tokens::kSlotMark));
      for (const auto& v : s.value) {
        if (v.empty() || is_reserved_surface(v)) {
          throw DataError("value of " + d.domain + "/" + s.slot + " contains reserved token '" + v + "'");
        }
        if (v == tokens::kPriority) {
          out.push_back(tokens::control_unit(tokens::kPriority));
        } else {
          out.push_back({v, TokenKind::kWord});
        }
      }
      out.push_back(tokens::control_unit(tokens::kValueEnd));
    }
  }
  return out;
}

BeliefState parse_flat(std::span<const TokenUnit> flat, ParseMode mode) {
  enum class State { kDomain, kDomainMark, kSlot, kSlotMark, kValue, kSkip };
  const bool strict = mode == ParseMode::kStrict;
  auto fail = [&](std::size_t pos, const std::string& what) {
    throw DataError("flat state, token " + std::to_string(pos) + ": " + what);
  };

  BeliefState out;
  State state = State::kDomain;
  std::string domain, slot;
  std::vector<std::string> value;

  for (std::size_t i = 0; i < flat.size(); ++i) {
    const auto& t = flat[i];
    bool reprocess = true;
    while (reprocess) {
      reprocess = false;
      switch (state) {
        case State::kDomain:
          if (t.kind == TokenKind::kDomain) {
            domain = t.surface;
            state = State::kDomainMark;
          } else if (strict) {
            fail(i, "expected a domain, got '" + t.key() + "'");
          }
          break;
        case State::kDomainMark:
          if (is_control(t, tokens::kDomainMark)) {
            state = State::kSlot;
          } else if (strict) {
            fail(i, "domain '" + domain + "' not followed by '-'");
          } else {
            state = State::kDomain;
            reprocess = true;
          }
          break;
        case State::kSlot:
          if (t.kind == TokenKind::kSlot) {
            slot = t.surface;
            state = State::kSlotMark;
          } else if (t.kind == TokenKind::kDomain) {
            state = State::kDomain;
            reprocess = true;
          } else if (strict) {
            fail(i, t.kind == TokenKind::kWord ? "value before slot" : "dangling delimiter '" + t.surface + "'");
          } else {
            state = State::kSkip;
            reprocess = true;
          }
          break;
        case State::kSlotMark:
          if (is_control(t, tokens::kSlotMark)) {
            value.clear();
            state = State::kValue;
          } else if (strict) {
            fail(i, "slot '" + slot + "' not followed by ','");
          } else {
            state = State::kSkip;
            reprocess = true;
          }
          break;
        case State::kValue:
          if (t.kind == TokenKind::kWord && !t.surface.empty()) {
            value.push_back(t.surface);
          } else if (is_control(t, tokens::kPriority)) {
            value.push_back(std::string(tokens::kPriority));
          } else if (is_control(t, tokens::kValueEnd)) {
            if (!value.empty()) {
              out.set(domain, slot, value);
            } else if (strict) {
              fail(i, "empty value for slot '" + slot + "'");
            }
            state = State::kSlot;
          } else if (strict) {
            fail(i, "unterminated value for slot '" + slot + "'");
          } else {
            state = State::kSlot;
            reprocess = true;
          }
          break;
        case State::kSkip:
          // Lenient resynchronisation: drop everything up to the next ';' or
          // the next domain/slot token.
          if (is_control(t, tokens::kValueEnd)) {
            state = State::kSlot;
          } else if (t.kind == TokenKind::kDomain || t.kind == TokenKind::kSlot) {
            state = State::kSlot;
            reprocess = true;
          }
          break;
      }
    }
  }
  if (strict && state != State::kDomain && state != State::kSlot) {
    fail(flat.size(), "unexpected end of flat state");
  }
  std::erase_if(out.domains, [](const DomainState& d) { return d.slots.empty(); });
  return out;
}

std::vector<Triplet> postprocess(std::span<const Triplet> triplets) {
  std::vector<Triplet> kept;
  for (const auto& t : triplets) {
    if (t.domain.empty() || t.slot.empty() || join_tokens(t.value).empty()) continue;
    kept.push_back(t);
  }
  std::vector<Triplet> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (auto it = kept.rbegin(); it != kept.rend(); ++it) {
    if (seen.insert({it->domain, it->slot}).second) out.push_back(*it);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<CombinedSlotValue> to_combined(const BeliefState& b) {
  std::vector<CombinedSlotValue> out;
  for (const auto& d : b.domains) {
    for (const auto& s : d.slots) out.push_back({d.domain + ";" + s.slot, s.value});
  }
  return out;
}

BeliefState from_combined(std::span<const CombinedSlotValue> pairs) {
  BeliefState b;
  for (const auto& p : pairs) {
    auto sep = p.combined_slot.find(';');
    if (sep == std::string::npos) throw DataError("combined slot without ';': " + p.combined_slot);
    b.set(p.combined_slot.substr(0, sep), p.combined_slot.substr(sep + 1), p.value);
  }
  return b;
}

// ---- JSON ------------------------------------------------------------------

nlohmann::ordered_json belief_to_json(const BeliefState& b) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& d : b.domains) {
    nlohmann::ordered_json slots = nlohmann::ordered_json::object();
    for (const auto& s : d.slots) slots[s.slot] = join_tokens(s.value);
    j[d.domain] = std::move(slots);
  }
  return j;
}

BeliefState belief_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw DataError(where + ": expected an object");
  BeliefState b;
  for (const auto& [domain, slots] : j.items()) {
    if (!slots.is_object()) throw DataError(where + "." + domain + ": expected an object");
    for (const auto& [slot, value] : slots.items()) {
      if (!value.is_string()) {
        throw DataError(where + "." + domain + "." + slot + ": expected a string value");
      }
      auto toks = tokenize(value.get<std::string>());
      if (domain.empty() || slot.empty() || toks.empty()) continue;
      b.set(domain, slot, std::move(toks));
    }
  }
  return b;
}

}  // namespace comer
