// Hierarchical belief-state generation: domains first, then slots for each
// domain (conditioned on that domain's decoder state), then values for each
// slot (conditioned on that slot's decoder state). Every decode call goes
// through the same CmrdParams.
#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <utility>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "comer/belief.hpp"
#include "comer/cmrd.hpp"
#include "comer/data.hpp"
#include "comer/encoder.hpp"

namespace comer {

/// What the value-level decoder may emit: every table entry, or only [SEP],
/// ">" and the words of values seen for that (domain, slot) in training.
enum class ValueOutputs { kFull, kSlot };
ValueOutputs parse_value_outputs(std::string_view name);
const char* to_string(ValueOutputs v);

struct ModelConfig {
  CmrdConfig decoder;
  ValueOutputs value_outputs = ValueOutputs::kFull;
  std::size_t max_domains = 8;
  std::size_t max_slots = 12;
  std::size_t max_value_tokens = 10;
};

struct ComerModel {
  ModelConfig config;
  EncoderParams encoder;
  CmrdParams decoder;
  /// Orders predicted states (and the previous-state input) canonically.
  FrequencyTables frequencies;
  /// Value words per (domain, slot) seen in training; read in kSlot mode.
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> value_words;

  static ComerModel zeros(const ModelConfig& config);
  /// Encoder parameters, then decoder parameters, in a fixed order.
  ParamList params() const;
  /// Deep copy: fresh parameter tensors holding the same values.
  ComerModel clone() const;
};

struct TurnInput {
  std::vector<std::string> user;
  std::vector<std::string> system;
  BeliefState previous;
};

/// Records the value words of every training label into model.value_words.
void collect_value_words(ComerModel& model, std::span<const Dialogue> dialogues);

/// Output set of the value level for a (domain, slot). Falls back to the
/// full table in kSlot mode when the pair has no recorded words.
OutputSet value_output_set(const ComerModel& model, const Lexicon& lexicon, const std::string& domain,
                           const std::string& slot);

/// Belief-state input of the belief encoder: the canonical flat form.
FlatState belief_input(const BeliefState& previous, const FrequencyTables& freq);

struct EncodedTurn {
  EncodedMemory belief, system, user;
  num::Tensor q0;
  Memories memories() const { return {belief, system, user}; }
};

EncodedTurn encode_turn(const TurnInput& input, const ComerModel& model, const Lexicon& lexicon);

enum class Level { kDomain = 1, kSlot = 2, kValue = 3 };

struct AttentionRecord {
  int level = 0;
  std::size_t step = 0;
  std::string token;  // table key of the emitted token
  std::array<std::vector<double>, 3> weights;  // belief, system, user

  nlohmann::ordered_json to_json() const;
};

/// Invoked after every decode call with its level and condition vector.
using DecodeHook = std::function<void(Level level, const num::Tensor& condition, const DecodeResult& result)>;

struct PredictOptions {
  bool record_attention = false;
  DecodeHook hook;
};

struct TurnPrediction {
  BeliefState state;     // post-processed, canonical order
  std::vector<Triplet> raw;  // before post-processing
  std::size_t decode_calls = 0;
  std::vector<AttentionRecord> attention;
};

TurnPrediction predict_turn(const TurnInput& input, const ComerModel& model, const Lexicon& lexicon,
                            const PredictOptions& options = {});

enum class StateFeed { kGold, kPredicted };
StateFeed parse_state_feed(std::string_view name);

/// Predicts every turn of a dialogue. With kPredicted the previous-state
/// input is the model's own last prediction; with kGold it is the gold label.
std::vector<TurnPrediction> track_dialogue(const Dialogue& dialogue, const ComerModel& model,
                                           const Lexicon& lexicon, StateFeed feed,
                                           const PredictOptions& options = {});

}  // namespace comer
