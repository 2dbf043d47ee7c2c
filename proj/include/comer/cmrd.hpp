// Conditional Memory Relation Decoder.
//
// One parameter set drives every level of the hierarchy. A step embeds the
// previous token, runs a 2-layer LSTM, adds the condition vector, walks a
// residual chain of attention reads over the three encoder memories, reasons
// over the concatenated chain states with a 4-layer ReLU MLP and scores the
// static table entries of an output set through E^T.
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "comer/encoder.hpp"
#include "comer/lexicon.hpp"
#include "comer/lstm.hpp"
#include "comer/tensor.hpp"

namespace comer {

struct CmrdConfig {
  std::size_t model_dim = 512;
  std::size_t embed_dim = 1024;
  double dropout = 0.5;
  /// Memories read by the residual attention chain, in order.
  std::array<MemoryRole, 3> attention_order{MemoryRole::kBelief, MemoryRole::kSystem,
                                            MemoryRole::kUser};
  /// Block gradients of h1, h2, h3 where they enter the relation input.
  bool block_grad = true;
  /// Apply dropout only in front of the output projection, emitting the
  /// undropped MLP output as the step representation.
  bool move_dropout = false;
};

struct CmrdParams {
  static constexpr std::size_t kLstmLayers = 2;
  static constexpr std::size_t kMlpLayers = 4;

  std::size_t model_dim = 0;
  std::size_t embed_dim = 0;
  std::array<LstmLayer, kLstmLayers> lstm;
  // Shared by all attention reads.
  num::Tensor attn_w1, attn_b1, attn_w2, attn_b2;
  // mlp_w[0] is [4 d_m x d_m], the rest [d_m x d_m].
  std::array<num::Tensor, kMlpLayers> mlp_w, mlp_b;
  num::Tensor out_w;  // [d_m x d_e]
  num::Tensor out_b;  // [1 x d_e]

  static CmrdParams zeros(std::size_t model_dim, std::size_t embed_dim);
  void collect(ParamList& out, const std::string& prefix = "decoder") const;
};

struct Memories {
  const EncodedMemory& belief;
  const EncodedMemory& system;
  const EncodedMemory& user;

  const EncodedMemory& get(MemoryRole role) const;
};

struct AttentionResult {
  num::Tensor output;   // W2^T (H c) + b2, [1 x d_m]
  num::Tensor weights;  // c = softmax(H^T a), [1 x l]
};

/// a = W1^T h + b1; c = softmax(H^T a); return W2^T (H c) + b2.
/// `memory` is H as rows [l x d_m]; `memory_t` its transpose.
AttentionResult attention(const num::Tensor& h, const num::Tensor& memory,
                          const num::Tensor& memory_t, const CmrdParams& params);

/// Per-layer LSTM state q.
using DecoderState = std::vector<LstmState>;

/// Every layer starts from hidden state q0 and a zero cell.
DecoderState initial_decoder_state(const num::Tensor& q0, std::size_t layers = CmrdParams::kLstmLayers);

/// Intermediate values of one step, exposed for diagnostics and tests.
struct StepTrace {
  num::Tensor h0, h1, h2, h3, h4;
  num::Tensor relation;   // r, [1 x 4 d_m]
  num::Tensor mlp_out;    // h_k
  num::Tensor projected;  // h_o
};

struct StepOutput {
  std::size_t token = 0;     // table index of the argmax, lowest on ties
  std::size_t position = 0;  // its position in the output set
  num::Tensor hidden;     // h_s
  DecoderState next;
  num::Tensor logits;     // E^T h_o over the output set, [1 x |set|]
  std::vector<double> probs;
  /// Attention weights indexed by MemoryRole (belief, system, user).
  std::array<std::vector<double>, 3> attention;
  StepTrace trace;
};

StepOutput cmrd_step(std::size_t input_token, const DecoderState& q_prev, const num::Tensor& condition,
                     const Memories& memories, const Lexicon& lexicon, const OutputSet& outputs,
                     const CmrdParams& params, const CmrdConfig& config, Mode mode, Rng& rng);

struct StepAttention {
  std::size_t step = 0;
  std::size_t token = 0;
  std::array<std::vector<double>, 3> weights;  // by MemoryRole
};

struct DecodeResult {
  std::vector<std::size_t> tokens;       // emitted (or fed gold) tokens, terminator excluded
  std::vector<num::Tensor> hidden_rows;  // h_s per emitted token
  std::vector<num::Tensor> step_logits;  // every executed step
  std::vector<std::size_t> targets;      // per step when teacher-forced: gold then [SEP]
  std::vector<std::size_t> target_positions;  // targets as output-set positions
  std::vector<StepAttention> attention;
  std::size_t steps = 0;

  /// H_s as [l_s x d_m]; undefined when no token was emitted.
  num::Tensor hidden_matrix() const;
};

/// Greedy decoding from [CLS] until [SEP] or max_len tokens. With `forced`
/// (teacher forcing) exactly forced->size() + 1 steps run, feeding gold
/// tokens back and recording [SEP] as the final target; a gold token outside
/// `outputs` throws DataError.
DecodeResult decode_sequence(const num::Tensor& condition, const Memories& memories,
                             const Lexicon& lexicon, const OutputSet& outputs,
                             const DecoderState& q0, std::size_t max_len,
                             std::optional<std::span<const std::size_t>> forced,
                             const CmrdParams& params,
                             const CmrdConfig& config, Mode mode, Rng& rng);

}  // namespace comer
