#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "comer/embeddings.hpp"
#include "comer/tensor.hpp"

namespace comer {

/// Table rows the decoder may emit at one level, with E^T restricted to them.
struct OutputSet {
  std::vector<std::size_t> ids;  // ascending table indices
  num::Tensor matrix_t;          // [d_e x ids.size()]

  std::size_t size() const { return ids.size(); }
  /// Position of table index `id` in the set.
  std::optional<std::size_t> position(std::size_t id) const;
};

/// The model's view of a static embedding table: input lookups for encoders
/// and decoder, and the fixed output projection E^T of the decoder.
class Lexicon {
 public:
  /// `pseudo_seed` enables pseudo vectors for words missing from the table
  /// (encoder inputs only; decoder outputs are always table entries).
  Lexicon(EmbeddingTable table, std::optional<std::uint64_t> pseudo_seed);

  const EmbeddingTable& table() const { return table_; }
  std::optional<std::uint64_t> pseudo_seed() const { return pseudo_seed_; }
  std::size_t size() const { return table_.size(); }
  std::size_t dim() const { return table_.dim(); }
  std::size_t cls() const { return cls_; }
  std::size_t sep() const { return sep_; }

  /// E^T as a constant [d_e x |E|] tensor.
  const num::Tensor& output_matrix() const { return all_.matrix_t; }
  /// Every table entry.
  const OutputSet& all() const { return all_; }
  /// [SEP] plus every domain unit.
  const OutputSet& domain_outputs() const { return domains_; }
  /// [SEP] plus every slot unit.
  const OutputSet& slot_outputs() const { return slots_; }
  /// Arbitrary subset; ids are sorted and deduplicated.
  OutputSet subset(std::vector<std::size_t> ids) const;
  /// Row vector [1 x d_e] of table entry `index`.
  num::Tensor embed(std::size_t index) const;
  /// Row vector for any token, with pseudo fallback for unknown words.
  num::Tensor embed(const TokenUnit& unit) const;

  TokenUnit unit(std::size_t index) const { return TokenUnit::from_key(table_.key(index)); }
  std::size_t index(const TokenUnit& unit) const { return table_.index(unit.key()); }

  /// Copy with `total_slots` registered slot units: real slots plus
  /// "dummy slot k" entries. Used to inflate the ontology without touching
  /// any existing index.
  Lexicon with_registered_slots(std::size_t total_slots) const;

 private:
  EmbeddingTable table_;
  std::optional<std::uint64_t> pseudo_seed_;
  std::size_t cls_ = 0;
  std::size_t sep_ = 0;
  OutputSet all_, domains_, slots_;
};

}  // namespace comer
