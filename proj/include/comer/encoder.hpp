// Two-layer BiLSTM encoders for the previous belief state, the system
// transcript and the user utterance. One EncoderParams instance serves all
// three roles.
#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "comer/lexicon.hpp"
#include "comer/lstm.hpp"

namespace comer {

enum class MemoryRole { kBelief, kSystem, kUser };
const char* to_string(MemoryRole role);

struct EncoderParams {
  static constexpr std::size_t kLayers = 2;
  std::size_t input_dim = 0;
  std::size_t model_dim = 0;  // d_m; each direction has d_m / 2 units
  // layers[l][0] runs forward in time, layers[l][1] backward.
  std::array<std::array<LstmLayer, 2>, kLayers> layers;

  static EncoderParams zeros(std::size_t input_dim, std::size_t model_dim);
  void collect(ParamList& out, const std::string& prefix = "encoder") const;
};

struct EncodedMemory {
  MemoryRole role = MemoryRole::kUser;
  num::Tensor hidden;      // H, [T x d_m]; row t = forward_t (+) backward_t
  num::Tensor hidden_t;    // H^T, [d_m x T]
  num::Tensor last_forward;   // final forward state of the top layer
  num::Tensor last_backward;  // final backward state of the top layer (t = 0)

  std::size_t length() const { return hidden.rows(); }
};

/// Wraps the tokens as [CLS] w_1 .. w_T [SEP], embeds them and runs the
/// stacked BiLSTM from zero states.
EncodedMemory encode(std::span<const TokenUnit> tokens, const Lexicon& lexicon,
                     const EncoderParams& params, MemoryRole role);

/// Same network over precomputed (already wrapped) input rows [T x d_e], as
/// produced by a contextual embedding exporter.
EncodedMemory encode_rows(std::span<const num::Tensor> rows, const EncoderParams& params,
                          MemoryRole role);

/// q_0: mean of the three per-encoder mean hidden states, [1 x d_m].
num::Tensor init_decoder_state(const EncodedMemory& belief, const EncodedMemory& system,
                               const EncodedMemory& user);

}  // namespace comer
