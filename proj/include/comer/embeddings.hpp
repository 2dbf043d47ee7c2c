// Static token embeddings: a vocabulary section (words and control tokens)
// followed by a unit section (whole domain and slot names). Keys are
// kind-qualified ("word:food", "slot:food") so a slot never collides with the
// word spelled the same way.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "comer/tensor.hpp"

namespace comer {

enum class TokenKind { kWord, kDomain, kSlot, kControl };

struct TokenUnit {
  std::string surface;
  TokenKind kind = TokenKind::kWord;

  std::string key() const;
  /// Inverse of key(); throws DataError on an unknown prefix.
  static TokenUnit from_key(std::string_view key);
  bool operator==(const TokenUnit&) const = default;
};

namespace tokens {
inline constexpr std::string_view kCls = "[CLS]";
inline constexpr std::string_view kSep = "[SEP]";
inline constexpr std::string_view kDomainMark = "-";
inline constexpr std::string_view kSlotMark = ",";
inline constexpr std::string_view kValueEnd = ";";
inline constexpr std::string_view kPriority = ">";

/// Every control token in table order.
std::span<const std::string_view> control();
TokenUnit control_unit(std::string_view surface);
}  // namespace tokens

/// Lowercases and splits on whitespace and punctuation. Digits keep inner ':'
/// (times such as "20:45") and words keep inner '-', '\'', '/' and '&'.
/// ">" is emitted as its own token.
std::vector<std::string> tokenize(std::string_view text);

enum class Section { kVocab, kUnit };

class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  std::size_t vocab_count() const { return vocab_count_; }
  std::size_t unit_count() const { return keys_.size() - vocab_count_; }

  /// Vocabulary entries must all precede unit entries.
  void add(std::string key, std::span<const float> vector, Section section);
  void add(std::string key, std::span<const double> vector, Section section);

  std::optional<std::size_t> find(std::string_view key) const;
  std::size_t index(std::string_view key) const;
  bool contains(std::string_view key) const { return find(key).has_value(); }
  const std::string& key(std::size_t i) const { return keys_.at(i); }
  const std::vector<std::string>& keys() const { return keys_; }
  Section section(std::size_t i) const { return i < vocab_count_ ? Section::kVocab : Section::kUnit; }
  std::span<const float> vector(std::size_t i) const;
  std::span<const float> vector(std::string_view key) const { return vector(index(key)); }
  std::vector<double> vector_f64(std::size_t i) const;

  /// Per-utterance contextual matrices (rows x dim), keyed by utterance id.
  void add_contextual(std::string id, std::size_t rows, std::vector<float> values);
  const std::map<std::string, std::pair<std::size_t, std::vector<float>>>& contextual() const {
    return contextual_;
  }

  /// All vectors as a constant [size x dim] tensor.
  num::Tensor matrix() const;

  bool operator==(const EmbeddingTable& other) const;

 private:
  std::size_t dim_;
  std::size_t vocab_count_ = 0;
  std::vector<std::string> keys_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, std::pair<std::size_t, std::vector<float>>> contextual_;
};

/// Deterministic unit-norm vector derived from the token bytes and the seed.
std::vector<double> pseudo_embed(std::string_view token, std::size_t dim, std::uint64_t seed);

/// Mean of the unit's word vectors. Words are looked up as "word:<w>" in
/// `words`, falling back to pseudo_embed when a seed is given.
std::vector<double> build_unit_embedding(const TokenUnit& unit, const EmbeddingTable& words,
                                         std::optional<std::uint64_t> pseudo_seed);

/// E = E_v followed by E_s; every vector is copied bitwise.
EmbeddingTable compose_embedding(const EmbeddingTable& vocab, const EmbeddingTable& units);

/// Where static vectors come from: a loaded embedding file, the
/// deterministic pseudo-provider, or both (file first).
struct EmbeddingSource {
  std::size_t dim = 0;
  std::optional<EmbeddingTable> file;
  std::optional<std::uint64_t> pseudo_seed;
};

/// Builds the model table: control tokens, then sorted words, then sorted
/// domain units, then sorted slot units. Units present in the file are taken
/// as stored, others are averaged from their words.
EmbeddingTable build_static_table(const std::vector<std::string>& words,
                                  const std::vector<std::string>& domains,
                                  const std::vector<std::string>& slots,
                                  const EmbeddingSource& source);

/// Vector for an arbitrary token unit: exact key, then (for words) the
/// pseudo-provider. Throws DataError when unresolvable.
std::vector<double> resolve_vector(const TokenUnit& unit, const EmbeddingTable& table,
                                   std::optional<std::uint64_t> pseudo_seed);

void save_embedding_file(const EmbeddingTable& table, const std::filesystem::path& path);
/// Validates header, record dimensions, key uniqueness, counts and checksum.
EmbeddingTable load_embedding_file(const std::filesystem::path& path);

}  // namespace comer
