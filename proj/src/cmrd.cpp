#include "comer/cmrd.hpp"

#include <algorithm>

#include "comer/errors.hpp"

namespace comer {

using num::Tensor;

namespace {

Tensor zero_param(num::Shape shape) {
  auto n = num::numel_of(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, 0.0));
}

}  // namespace

CmrdParams CmrdParams::zeros(std::size_t model_dim, std::size_t embed_dim) {
  if (model_dim == 0 || embed_dim == 0) throw std::invalid_argument("decoder sizes must be positive");
  CmrdParams p;
  p.model_dim = model_dim;
  p.embed_dim = embed_dim;
  p.lstm[0] = LstmLayer::zeros(embed_dim, model_dim);
  for (std::size_t l = 1; l < kLstmLayers; ++l) p.lstm[l] = LstmLayer::zeros(model_dim, model_dim);
  p.attn_w1 = zero_param({model_dim, model_dim});
  p.attn_b1 = zero_param({1, model_dim});
  p.attn_w2 = zero_param({model_dim, model_dim});
  p.attn_b2 = zero_param({1, model_dim});
  p.mlp_w[0] = zero_param({4 * model_dim, model_dim});
  for (std::size_t i = 1; i < kMlpLayers; ++i) p.mlp_w[i] = zero_param({model_dim, model_dim});
  for (auto& b : p.mlp_b) b = zero_param({1, model_dim});
  p.out_w = zero_param({model_dim, embed_dim});
  p.out_b = zero_param({1, embed_dim});
  return p;
}

void CmrdParams::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t l = 0; l < kLstmLayers; ++l) lstm[l].collect(out, prefix + ".lstm" + std::to_string(l));
  out.push_back({prefix + ".attn.w1", attn_w1, false});
  out.push_back({prefix + ".attn.b1", attn_b1, true});
  out.push_back({prefix + ".attn.w2", attn_w2, false});
  out.push_back({prefix + ".attn.b2", attn_b2, true});
  for (std::size_t i = 0; i < kMlpLayers; ++i) {
    out.push_back({prefix + ".mlp.w" + std::to_string(i), mlp_w[i], false});
    out.push_back({prefix + ".mlp.b" + std::to_string(i), mlp_b[i], true});
  }
  out.push_back({prefix + ".out.w", out_w, false});
  out.push_back({prefix + ".out.b", out_b, true});
}

const EncodedMemory& Memories::get(MemoryRole role) const {
  switch (role) {
    case MemoryRole::kBelief: return belief;
    case MemoryRole::kSystem: return system;
    case MemoryRole::kUser: return user;
  }
  return user;
}

AttentionResult attention(const Tensor& h, const Tensor& memory, const Tensor& memory_t,
                          const CmrdParams& params) {
  if (memory.rank() != 2 || memory.rows() == 0) {
    throw ShapeError("attention: memory must be a non-empty matrix, got " + num::to_string(memory.shape()));
  }
  if (memory.cols() != params.model_dim || h.cols() != params.model_dim) {
    throw ShapeError("attention: width mismatch, query " + num::to_string(h.shape()) + ", memory " +
                     num::to_string(memory.shape()) + ", model size " + std::to_string(params.model_dim));
  }
  using namespace num;
  Tensor a = add(matmul(h, params.attn_w1), params.attn_b1);
  Tensor weights = softmax(matmul(a, memory_t));
  Tensor read = matmul(weights, memory);
  return {add(matmul(read, params.attn_w2), params.attn_b2), weights};
}

DecoderState initial_decoder_state(const Tensor& q0, std::size_t layers) {
  DecoderState q;
  q.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) q.push_back({q0, Tensor::zeros({1, q0.cols()})});
  return q;
}

StepOutput cmrd_step(std::size_t input_token, const DecoderState& q_prev, const Tensor& condition,
                     const Memories& memories, const Lexicon& lexicon, const OutputSet& outputs,
                     const CmrdParams& params, const CmrdConfig& config, Mode mode, Rng& rng) {
  using namespace num;
  if (input_token >= lexicon.size()) {
    throw DataError("decoder input token " + std::to_string(input_token) + " is not in the table");
  }
  if (condition.cols() != params.model_dim || condition.rows() != 1) {
    throw ShapeError("cmrd_step: condition must be [1 x " + std::to_string(params.model_dim) + "], got " +
                     to_string(condition.shape()));
  }
  if (q_prev.size() != CmrdParams::kLstmLayers) throw ShapeError("cmrd_step: wrong number of LSTM layers");

  StepOutput out;
  out.next.resize(CmrdParams::kLstmLayers);
  Tensor x = lexicon.embed(input_token);
  for (std::size_t l = 0; l < CmrdParams::kLstmLayers; ++l) {
    out.next[l] = lstm_cell(params.lstm[l], x, q_prev[l]);
    x = out.next[l].h;
  }

  StepTrace& tr = out.trace;
  tr.h0 = x;
  tr.h1 = add(tr.h0, condition);
  std::array<Tensor*, 3> chain_out{&tr.h2, &tr.h3, &tr.h4};
  Tensor current = tr.h1;
  for (std::size_t k = 0; k < 3; ++k) {
    const MemoryRole role = config.attention_order[k];
    const EncodedMemory& mem = memories.get(role);
    AttentionResult read = attention(current, mem.hidden, mem.hidden_t, params);
    current = add(current, read.output);
    *chain_out[k] = current;
    out.attention[static_cast<std::size_t>(role)] = read.weights.to_vector();
  }

  auto tap = [&](const Tensor& t) { return config.block_grad ? stop_gradient(t) : t; };
  tr.relation = concat({tap(tr.h1), tap(tr.h2), tap(tr.h3), tr.h4}, 1);

  Tensor r = tr.relation;
  for (std::size_t i = 0; i < CmrdParams::kMlpLayers; ++i) {
    r = relu(add(matmul(r, params.mlp_w[i]), params.mlp_b[i]));
  }
  tr.mlp_out = r;

  Tensor to_output;
  if (config.move_dropout) {
    out.hidden = tr.mlp_out;
    to_output = dropout(tr.mlp_out, config.dropout, mode, rng);
  } else {
    out.hidden = dropout(tr.mlp_out, config.dropout, mode, rng);
    to_output = out.hidden;
  }
  tr.projected = add(matmul(to_output, params.out_w), params.out_b);
  if (outputs.size() == 0) throw std::invalid_argument("cmrd_step: empty output set");
  out.logits = matmul(tr.projected, outputs.matrix_t);
  out.probs = softmax_values(out.logits.data());
  auto logits = out.logits.data();
  out.position = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  out.token = outputs.ids[out.position];
  return out;
}

Tensor DecodeResult::hidden_matrix() const {
  if (hidden_rows.empty()) return {};
  return num::concat(hidden_rows, 0);
}

DecodeResult decode_sequence(const Tensor& condition, const Memories& memories, const Lexicon& lexicon,
                             const OutputSet& outputs, const DecoderState& q0, std::size_t max_len,
                             std::optional<std::span<const std::size_t>> forced,
                             const CmrdParams& params, const CmrdConfig& config, Mode mode, Rng& rng) {
  if (max_len < 1) throw std::invalid_argument("decode_sequence: max_len must be at least 1");
  DecodeResult result;
  DecoderState q = q0;
  std::size_t input = lexicon.cls();
  const std::size_t limit = forced ? forced->size() + 1 : max_len;

  for (std::size_t step = 0; step < limit; ++step) {
    StepOutput s = cmrd_step(input, q, condition, memories, lexicon, outputs, params, config, mode, rng);
    ++result.steps;
    result.step_logits.push_back(s.logits);
    result.attention.push_back({step, s.token, s.attention});

    std::size_t emitted = s.token;
    if (forced) {
      emitted = step < forced->size() ? (*forced)[step] : lexicon.sep();
      auto pos = outputs.position(emitted);
      if (!pos) {
        throw DataError("gold token " + (emitted < lexicon.size() ? lexicon.table().key(emitted) : std::to_string(emitted)) +
                        " is not a decoder output at this level");
      }
      result.targets.push_back(emitted);
      result.target_positions.push_back(*pos);
      result.attention.back().token = emitted;
    }
    if (emitted == lexicon.sep()) break;
    result.tokens.push_back(emitted);
    result.hidden_rows.push_back(s.hidden);
    q = std::move(s.next);
    input = emitted;
  }
  return result;
}

}  // namespace comer
