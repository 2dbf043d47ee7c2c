#include "comer/hiergen.hpp"

#include <algorithm>
#include <set>

#include "comer/errors.hpp"

namespace comer {

ValueOutputs parse_value_outputs(std::string_view name) {
  if (name == "full") return ValueOutputs::kFull;
  if (name == "slot") return ValueOutputs::kSlot;
  throw ConfigError("unknown value output mode \"" + std::string(name) + "\" (full, slot)");
}

const char* to_string(ValueOutputs v) { return v == ValueOutputs::kFull ? "full" : "slot"; }

ComerModel ComerModel::zeros(const ModelConfig& config) {
  ComerModel m;
  m.config = config;
  m.encoder = EncoderParams::zeros(config.decoder.embed_dim, config.decoder.model_dim);
  m.decoder = CmrdParams::zeros(config.decoder.model_dim, config.decoder.embed_dim);
  return m;
}

ParamList ComerModel::params() const {
  ParamList out;
  encoder.collect(out);
  decoder.collect(out);
  return out;
}

ComerModel ComerModel::clone() const {
  ComerModel copy = zeros(config);
  copy.frequencies = frequencies;
  copy.value_words = value_words;
  ParamList from = params(), to = copy.params();
  for (std::size_t i = 0; i < from.size(); ++i) {
    auto src = from[i].tensor.data();
    auto dst = to[i].tensor.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return copy;
}

void collect_value_words(ComerModel& model, std::span<const Dialogue> dialogues) {
  std::map<std::pair<std::string, std::string>, std::set<std::string>> words;
  for (const auto& d : dialogues)
    for (const auto& t : d.turns)
      for (const auto& tr : t.state.triplets()) words[{tr.domain, tr.slot}].insert(tr.value.begin(), tr.value.end());
  model.value_words.clear();
  for (auto& [k, v] : words) model.value_words[k] = {v.begin(), v.end()};
}

OutputSet value_output_set(const ComerModel& model, const Lexicon& lexicon, const std::string& domain,
                           const std::string& slot) {
  if (model.config.value_outputs == ValueOutputs::kFull) return lexicon.all();
  auto it = model.value_words.find({domain, slot});
  if (it == model.value_words.end()) return lexicon.all();
  std::vector<std::size_t> ids{lexicon.sep(), lexicon.index(tokens::control_unit(tokens::kPriority))};
  for (const auto& w : it->second) {
    TokenUnit u = w == tokens::kPriority ? tokens::control_unit(w) : TokenUnit{w, TokenKind::kWord};
    if (auto idx = lexicon.table().find(u.key())) ids.push_back(*idx);
  }
  return lexicon.subset(std::move(ids));
}

FlatState belief_input(const BeliefState& previous, const FrequencyTables& freq) {
  return flatten(canonical_order(previous, freq));
}

EncodedTurn encode_turn(const TurnInput& input, const ComerModel& model, const Lexicon& lexicon) {
  auto words = [](const std::vector<std::string>& toks) {
    FlatState out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back({t, TokenKind::kWord});
    return out;
  };
  EncodedTurn e;
  e.belief = encode(belief_input(input.previous, model.frequencies), lexicon, model.encoder, MemoryRole::kBelief);
  e.system = encode(words(input.system), lexicon, model.encoder, MemoryRole::kSystem);
  e.user = encode(words(input.user), lexicon, model.encoder, MemoryRole::kUser);
  e.q0 = init_decoder_state(e.belief, e.system, e.user);
  return e;
}

nlohmann::ordered_json AttentionRecord::to_json() const {
  nlohmann::ordered_json j;
  j["level"] = level;
  j["step"] = step;
  j["token"] = token;
  j["weights_belief"] = weights[0];
  j["weights_sys"] = weights[1];
  j["weights_usr"] = weights[2];
  return j;
}

namespace {

struct Generator {
  const ComerModel& model;
  const Lexicon& lexicon;
  const PredictOptions& options;
  const Memories memories;
  const DecoderState q0;
  TurnPrediction& out;
  Rng rng{0};

  DecodeResult run(Level level, const num::Tensor& condition, const OutputSet& outputs, std::size_t max_len) {
    DecodeResult r = decode_sequence(condition, memories, lexicon, outputs, q0, max_len, std::nullopt, model.decoder,
                                     model.config.decoder, Mode::kEval, rng);
    ++out.decode_calls;
    if (options.record_attention) {
      for (const auto& s : r.attention) {
        out.attention.push_back({static_cast<int>(level), s.step, lexicon.table().key(s.token), s.weights});
      }
    }
    if (options.hook) options.hook(level, condition, r);
    return r;
  }

  // Surface of a generated name token, empty when it is not of `kind`.
  std::string name(std::size_t token, TokenKind kind) const {
    TokenUnit u = lexicon.unit(token);
    return u.kind == kind ? u.surface : std::string();
  }

  std::vector<std::string> value(const std::vector<std::size_t>& tokens) const {
    std::vector<std::string> v;
    for (auto t : tokens) {
      TokenUnit u = lexicon.unit(t);
      if (u.kind == TokenKind::kWord || (u.kind == TokenKind::kControl && u.surface == tokens::kPriority)) {
        v.push_back(u.surface);
      }
    }
    return v;
  }
};

}  // namespace

TurnPrediction predict_turn(const TurnInput& input, const ComerModel& model, const Lexicon& lexicon,
                            const PredictOptions& options) {
  num::NoGradGuard no_grad;
  TurnPrediction out;
  EncodedTurn enc = encode_turn(input, model, lexicon);
  Generator gen{model, lexicon, options, enc.memories(), initial_decoder_state(enc.q0), out};

  const auto& cfg = model.config;
  DecodeResult domains =
      gen.run(Level::kDomain, num::Tensor::zeros({1, cfg.decoder.model_dim}), lexicon.domain_outputs(),
              cfg.max_domains);
  for (std::size_t i = 0; i < domains.tokens.size(); ++i) {
    const std::string domain = gen.name(domains.tokens[i], TokenKind::kDomain);
    DecodeResult slots = gen.run(Level::kSlot, domains.hidden_rows[i], lexicon.slot_outputs(), cfg.max_slots);
    for (std::size_t j = 0; j < slots.tokens.size(); ++j) {
      const std::string slot = gen.name(slots.tokens[j], TokenKind::kSlot);
      DecodeResult value = gen.run(Level::kValue, slots.hidden_rows[j],
                                   value_output_set(model, lexicon, domain, slot), cfg.max_value_tokens);
      out.raw.push_back({domain, slot, gen.value(value.tokens)});
    }
  }
  auto kept = postprocess(out.raw);
  out.state = canonical_order(BeliefState::from_triplets(kept), model.frequencies);
  return out;
}

StateFeed parse_state_feed(std::string_view name) {
  if (name == "gold") return StateFeed::kGold;
  if (name == "predicted") return StateFeed::kPredicted;
  throw ConfigError("unknown state feed \"" + std::string(name) + "\" (gold, predicted)");
}

std::vector<TurnPrediction> track_dialogue(const Dialogue& dialogue, const ComerModel& model,
                                           const Lexicon& lexicon, StateFeed feed,
                                           const PredictOptions& options) {
  std::vector<TurnPrediction> out;
  out.reserve(dialogue.turns.size());
  BeliefState previous;
  for (const auto& turn : dialogue.turns) {
    out.push_back(predict_turn({turn.user, turn.system, previous}, model, lexicon, options));
    previous = feed == StateFeed::kGold ? turn.state : out.back().state;
  }
  return out;
}

}  // namespace comer
