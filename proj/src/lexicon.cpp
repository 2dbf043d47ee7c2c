#include "comer/lexicon.hpp"

#include <algorithm>

#include "comer/errors.hpp"

namespace comer {

Lexicon::Lexicon(EmbeddingTable table, std::optional<std::uint64_t> pseudo_seed)
    : table_(std::move(table)), pseudo_seed_(pseudo_seed) {
  cls_ = table_.index(tokens::control_unit(tokens::kCls).key());
  sep_ = table_.index(tokens::control_unit(tokens::kSep).key());
  all_.matrix_t = num::transpose(table_.matrix());
  all_.ids.resize(table_.size());
  for (std::size_t i = 0; i < table_.size(); ++i) all_.ids[i] = i;
  std::vector<std::size_t> domains{sep_}, slots{sep_};
  for (std::size_t i = table_.vocab_count(); i < table_.size(); ++i) {
    const TokenKind kind = unit(i).kind;
    if (kind == TokenKind::kDomain) domains.push_back(i);
    if (kind == TokenKind::kSlot) slots.push_back(i);
  }
  domains_ = subset(std::move(domains));
  slots_ = subset(std::move(slots));
}

std::optional<std::size_t> OutputSet::position(std::size_t id) const {
  auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - ids.begin());
}

OutputSet Lexicon::subset(std::vector<std::size_t> ids) const {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const std::size_t d = table_.dim(), k = ids.size();
  std::vector<double> m(d * k);
  for (std::size_t j = 0; j < k; ++j) {
    if (ids[j] >= table_.size()) throw std::out_of_range("output set index out of range");
    auto v = table_.vector(ids[j]);
    for (std::size_t r = 0; r < d; ++r) m[r * k + j] = v[r];
  }
  OutputSet out;
  out.ids = std::move(ids);
  out.matrix_t = num::Tensor::constant({d, k}, std::move(m));
  return out;
}

num::Tensor Lexicon::embed(std::size_t index) const {
  return num::Tensor::row(table_.vector_f64(index));
}

num::Tensor Lexicon::embed(const TokenUnit& unit) const {
  return num::Tensor::row(resolve_vector(unit, table_, pseudo_seed_));
}

Lexicon Lexicon::with_registered_slots(std::size_t total_slots) const {
  std::size_t real = 0;
  for (std::size_t i = table_.vocab_count(); i < table_.size(); ++i) {
    if (unit(i).kind == TokenKind::kSlot) ++real;
  }
  if (total_slots < real) {
    throw std::invalid_argument("cannot register " + std::to_string(total_slots) +
                                " slots: the table already holds " + std::to_string(real));
  }
  EmbeddingTable inflated = table_;
  const std::uint64_t seed = pseudo_seed_.value_or(0);
  for (std::size_t k = real; k < total_slots; ++k) {
    TokenUnit dummy{"dummy slot " + std::to_string(k), TokenKind::kSlot};
    auto v = pseudo_embed(dummy.key(), table_.dim(), seed);
    inflated.add(dummy.key(), std::span<const double>(v), Section::kUnit);
  }
  return Lexicon(std::move(inflated), pseudo_seed_);
}

}  // namespace comer
