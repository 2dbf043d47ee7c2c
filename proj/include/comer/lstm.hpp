#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "comer/tensor.hpp"

namespace comer {

/// A trainable tensor with a stable dotted name ("decoder.mlp.w0").
struct NamedParam {
  std::string name;
  num::Tensor tensor;
  bool bias = false;
};
using ParamList = std::vector<NamedParam>;

std::size_t count_values(const ParamList& params);

/// One LSTM layer without peepholes. Gate order: input, forget, cell, output.
/// Each gate weight is [(input + hidden) x hidden] acting on [x, h_prev].
struct LstmLayer {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::array<num::Tensor, 4> weight;
  std::array<num::Tensor, 4> bias;

  static LstmLayer zeros(std::size_t input, std::size_t hidden);
  void collect(ParamList& out, const std::string& prefix) const;
};

struct LstmState {
  num::Tensor h;  // [1 x hidden]
  num::Tensor c;  // [1 x hidden]

  static LstmState zeros(std::size_t hidden);
};

/// i = s(W_i[x,h]+b_i), f = s(..), g = tanh(..), o = s(..);
/// c' = f*c + i*g; h' = o*tanh(c').
LstmState lstm_cell(const LstmLayer& layer, const num::Tensor& x, const LstmState& prev);

}  // namespace comer
