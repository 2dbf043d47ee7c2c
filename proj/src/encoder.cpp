#include "comer/encoder.hpp"

#include <vector>

namespace comer {

const char* to_string(MemoryRole role) {
  switch (role) {
    case MemoryRole::kBelief: return "belief";
    case MemoryRole::kSystem: return "system";
    case MemoryRole::kUser: return "user";
  }
  return "?";
}

EncoderParams EncoderParams::zeros(std::size_t input_dim, std::size_t model_dim) {
  if (model_dim == 0 || model_dim % 2 != 0) {
    throw std::invalid_argument("encoder model size must be a positive even number");
  }
  EncoderParams p;
  p.input_dim = input_dim;
  p.model_dim = model_dim;
  const std::size_t half = model_dim / 2;
  for (std::size_t l = 0; l < kLayers; ++l) {
    const std::size_t in = l == 0 ? input_dim : model_dim;
    p.layers[l][0] = LstmLayer::zeros(in, half);
    p.layers[l][1] = LstmLayer::zeros(in, half);
  }
  return p;
}

void EncoderParams::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t l = 0; l < kLayers; ++l) {
    layers[l][0].collect(out, prefix + ".l" + std::to_string(l) + ".fwd");
    layers[l][1].collect(out, prefix + ".l" + std::to_string(l) + ".bwd");
  }
}

EncodedMemory encode(std::span<const TokenUnit> tokens, const Lexicon& lexicon,
                     const EncoderParams& params, MemoryRole role) {
  std::vector<num::Tensor> rows;
  rows.reserve(tokens.size() + 2);
  rows.push_back(lexicon.embed(lexicon.cls()));
  for (const auto& t : tokens) rows.push_back(lexicon.embed(t));
  rows.push_back(lexicon.embed(lexicon.sep()));
  return encode_rows(rows, params, role);
}

EncodedMemory encode_rows(std::span<const num::Tensor> rows, const EncoderParams& params,
                          MemoryRole role) {
  if (rows.empty()) throw std::invalid_argument("encode: empty input sequence");
  const std::size_t steps = rows.size();
  const std::size_t half = params.model_dim / 2;

  std::vector<num::Tensor> input(rows.begin(), rows.end());
  std::vector<num::Tensor> fwd(steps), bwd(steps);
  for (std::size_t l = 0; l < EncoderParams::kLayers; ++l) {
    LstmState state = LstmState::zeros(half);
    for (std::size_t t = 0; t < steps; ++t) {
      state = lstm_cell(params.layers[l][0], input[t], state);
      fwd[t] = state.h;
    }
    state = LstmState::zeros(half);
    for (std::size_t t = steps; t-- > 0;) {
      state = lstm_cell(params.layers[l][1], input[t], state);
      bwd[t] = state.h;
    }
    for (std::size_t t = 0; t < steps; ++t) input[t] = num::concat({fwd[t], bwd[t]}, 1);
  }

  EncodedMemory mem;
  mem.role = role;
  mem.hidden = num::concat(input, 0);
  mem.hidden_t = num::transpose(mem.hidden);
  mem.last_forward = fwd.back();
  mem.last_backward = bwd.front();
  return mem;
}

num::Tensor init_decoder_state(const EncodedMemory& belief, const EncodedMemory& system,
                               const EncodedMemory& user) {
  const auto width = belief.hidden.cols();
  if (system.hidden.cols() != width || user.hidden.cols() != width) {
    throw ShapeError("init_decoder_state: memory widths differ (" + std::to_string(width) + ", " +
                     std::to_string(system.hidden.cols()) + ", " +
                     std::to_string(user.hidden.cols()) + ")");
  }
  using namespace num;
  Tensor total = add(add(mean_rows(belief.hidden), mean_rows(system.hidden)), mean_rows(user.hidden));
  return scale(total, 1.0 / 3.0);
}

}  // namespace comer
