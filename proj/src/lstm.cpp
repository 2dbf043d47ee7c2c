#include "comer/lstm.hpp"

namespace comer {

std::size_t count_values(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

LstmLayer LstmLayer::zeros(std::size_t input, std::size_t hidden) {
  LstmLayer l;
  l.input = input;
  l.hidden = hidden;
  for (int g = 0; g < 4; ++g) {
    l.weight[g] = num::Tensor::parameter({input + hidden, hidden},
                                         std::vector<double>((input + hidden) * hidden, 0.0));
    l.bias[g] = num::Tensor::parameter({1, hidden}, std::vector<double>(hidden, 0.0));
  }
  return l;
}

void LstmLayer::collect(ParamList& out, const std::string& prefix) const {
  static constexpr const char* kGate[] = {"i", "f", "g", "o"};
  for (int g = 0; g < 4; ++g) {
    out.push_back({prefix + ".w_" + kGate[g], weight[g], false});
    out.push_back({prefix + ".b_" + kGate[g], bias[g], true});
  }
}

LstmState LstmState::zeros(std::size_t hidden) {
  return {num::Tensor::zeros({1, hidden}), num::Tensor::zeros({1, hidden})};
}

LstmState lstm_cell(const LstmLayer& layer, const num::Tensor& x, const LstmState& prev) {
  using namespace num;
  const Tensor xh = concat({x, prev.h}, 1);
  auto gate = [&](int g) { return add(matmul(xh, layer.weight[g]), layer.bias[g]); };
  const Tensor i = sigmoid(gate(0));
  const Tensor f = sigmoid(gate(1));
  const Tensor g = tanh(gate(2));
  const Tensor o = sigmoid(gate(3));
  Tensor c = add(mul(f, prev.c), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

}  // namespace comer
