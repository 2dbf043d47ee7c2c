#include "comer/embeddings.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "comer/codec.hpp"
#include "comer/errors.hpp"

namespace comer {

namespace {

constexpr std::array<std::string_view, 6> kControl = {
    tokens::kCls, tokens::kSep, tokens::kDomainMark, tokens::kSlotMark, tokens::kValueEnd,
    tokens::kPriority};

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double unit_interval(std::uint64_t& state) {
  // 53 random bits in (0, 1).
  return (static_cast<double>(splitmix64(state) >> 11) + 0.5) * 0x1.0p-53;
}

bool is_separator(char c) {
  static constexpr std::string_view kPunct = ",.!?;()[]{}\"";
  return std::isspace(static_cast<unsigned char>(c)) || kPunct.find(c) != std::string_view::npos;
}

std::string trim_joiners(std::string s) {
  static constexpr std::string_view kJoiners = "-:'/&";
  auto first = s.find_first_not_of(kJoiners);
  if (first == std::string::npos) return {};
  auto last = s.find_last_not_of(kJoiners);
  return s.substr(first, last - first + 1);
}

}  // namespace

// ---- tokens ----------------------------------------------------------------

std::string TokenUnit::key() const {
  switch (kind) {
    case TokenKind::kWord: return "word:" + surface;
    case TokenKind::kDomain: return "domain:" + surface;
    case TokenKind::kSlot: return "slot:" + surface;
    case TokenKind::kControl: return "ctl:" + surface;
  }
  return surface;
}

TokenUnit TokenUnit::from_key(std::string_view key) {
  auto colon = key.find(':');
  if (colon == std::string_view::npos) throw DataError("token key without kind: " + std::string(key));
  auto prefix = key.substr(0, colon);
  std::string surface(key.substr(colon + 1));
  if (prefix == "word") return {surface, TokenKind::kWord};
  if (prefix == "domain") return {surface, TokenKind::kDomain};
  if (prefix == "slot") return {surface, TokenKind::kSlot};
  if (prefix == "ctl") return {surface, TokenKind::kControl};
  throw DataError("unknown token kind in key: " + std::string(key));
}

std::span<const std::string_view> tokens::control() { return kControl; }

TokenUnit tokens::control_unit(std::string_view surface) {
  return {std::string(surface), TokenKind::kControl};
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    auto t = trim_joiners(std::move(current));
    if (!t.empty()) out.push_back(std::move(t));
    current.clear();
  };
  for (char c : text) {
    if (c == '>') {
      flush();
      out.emplace_back(">");
    } else if (is_separator(c)) {
      flush();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

// ---- table -----------------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw std::invalid_argument("embedding dimension must be positive");
}

void EmbeddingTable::add(std::string key, std::span<const float> vector, Section section) {
  if (vector.size() != dim_) {
    throw DataError("embedding for '" + key + "' has dimension " + std::to_string(vector.size()) +
                    ", table expects " + std::to_string(dim_));
  }
  if (section == Section::kVocab && unit_count() > 0) {
    throw std::logic_error("vocabulary entry '" + key + "' added after unit entries");
  }
  if (index_.contains(key)) throw DataError("duplicate embedding key '" + key + "'");
  index_.emplace(key, keys_.size());
  keys_.push_back(std::move(key));
  data_.insert(data_.end(), vector.begin(), vector.end());
  if (section == Section::kVocab) ++vocab_count_;
}

void EmbeddingTable::add(std::string key, std::span<const double> vector, Section section) {
  std::vector<float> f(vector.begin(), vector.end());
  add(std::move(key), std::span<const float>(f), section);
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view key) const {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingTable::index(std::string_view key) const {
  auto i = find(key);
  if (!i) throw DataError("token '" + std::string(key) + "' is not in the embedding table");
  return *i;
}

std::span<const float> EmbeddingTable::vector(std::size_t i) const {
  if (i >= keys_.size()) throw std::out_of_range("embedding index out of range");
  return std::span<const float>(data_).subspan(i * dim_, dim_);
}

std::vector<double> EmbeddingTable::vector_f64(std::size_t i) const {
  auto v = vector(i);
  return {v.begin(), v.end()};
}

void EmbeddingTable::add_contextual(std::string id, std::size_t rows, std::vector<float> values) {
  if (values.size() != rows * dim_) {
    throw DataError("contextual matrix '" + id + "' has " + std::to_string(values.size()) +
                    " values, expected rows x " + std::to_string(dim_));
  }
  if (contextual_.contains(id)) throw DataError("duplicate contextual matrix '" + id + "'");
  contextual_.emplace(std::move(id), std::make_pair(rows, std::move(values)));
}

num::Tensor EmbeddingTable::matrix() const {
  return num::Tensor::constant({keys_.size(), dim_}, std::vector<double>(data_.begin(), data_.end()));
}

bool EmbeddingTable::operator==(const EmbeddingTable& other) const {
  return dim_ == other.dim_ && vocab_count_ == other.vocab_count_ && keys_ == other.keys_ &&
         data_ == other.data_ && contextual_ == other.contextual_;
}

// ---- providers -------------------------------------------------------------

std::vector<double> pseudo_embed(std::string_view token, std::size_t dim, std::uint64_t seed) {
  if (token.empty()) throw std::invalid_argument("pseudo_embed: empty token");
  if (dim == 0) throw std::invalid_argument("pseudo_embed: dimension must be positive");
  // FNV-1a over the bytes, then mixed with the seed.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  std::uint64_t state = h ^ (seed * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL);
  splitmix64(state);

  std::vector<double> v(dim);
  for (std::size_t i = 0; i < dim; i += 2) {
    // Box-Muller: two independent standard normals per draw.
    double r = std::sqrt(-2.0 * std::log(unit_interval(state)));
    double theta = 2.0 * std::numbers::pi * unit_interval(state);
    v[i] = r * std::cos(theta);
    if (i + 1 < dim) v[i + 1] = r * std::sin(theta);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<double> build_unit_embedding(const TokenUnit& unit, const EmbeddingTable& words,
                                         std::optional<std::uint64_t> pseudo_seed) {
  auto parts = tokenize(unit.surface);
  if (parts.empty()) throw DataError("unit '" + unit.surface + "' has no words");
  std::vector<double> mean(words.dim(), 0.0);
  for (const auto& w : parts) {
    std::vector<double> v;
    if (auto i = words.find(TokenUnit{w, TokenKind::kWord}.key())) {
      v = words.vector_f64(*i);
    } else if (pseudo_seed) {
      v = pseudo_embed(w, words.dim(), *pseudo_seed);
    } else {
      throw DataError("word '" + w + "' of unit '" + unit.surface + "' has no embedding");
    }
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += v[j];
  }
  for (double& x : mean) x /= static_cast<double>(parts.size());
  return mean;
}

EmbeddingTable compose_embedding(const EmbeddingTable& vocab, const EmbeddingTable& units) {
  if (vocab.dim() != units.dim()) {
    throw DataError("cannot compose embeddings of dimension " + std::to_string(vocab.dim()) +
                    " and " + std::to_string(units.dim()));
  }
  EmbeddingTable out(vocab.dim());
  for (std::size_t i = 0; i < vocab.size(); ++i) out.add(vocab.key(i), vocab.vector(i), Section::kVocab);
  for (std::size_t i = 0; i < units.size(); ++i) out.add(units.key(i), units.vector(i), Section::kUnit);
  return out;
}

std::vector<double> resolve_vector(const TokenUnit& unit, const EmbeddingTable& table,
                                   std::optional<std::uint64_t> pseudo_seed) {
  if (auto i = table.find(unit.key())) return table.vector_f64(*i);
  switch (unit.kind) {
    case TokenKind::kDomain:
    case TokenKind::kSlot: return build_unit_embedding(unit, table, pseudo_seed);
    case TokenKind::kWord:
    case TokenKind::kControl:
      if (pseudo_seed) return pseudo_embed(unit.surface, table.dim(), *pseudo_seed);
      break;
  }
  throw DataError("token '" + unit.key() + "' has no embedding");
}

EmbeddingTable build_static_table(const std::vector<std::string>& words,
                                  const std::vector<std::string>& domains,
                                  const std::vector<std::string>& slots,
                                  const EmbeddingSource& source) {
  const std::size_t dim = source.file ? source.file->dim() : source.dim;
  if (source.file && source.dim != 0 && source.dim != dim) {
    throw DataError("embedding file has dimension " + std::to_string(dim) + ", configuration asks for " +
                    std::to_string(source.dim));
  }
  const EmbeddingTable empty(dim);
  const EmbeddingTable& backing = source.file ? *source.file : empty;

  EmbeddingTable vocab(dim);
  for (auto c : tokens::control()) {
    auto unit = tokens::control_unit(c);
    vocab.add(unit.key(), std::span<const double>(resolve_vector(unit, backing, source.pseudo_seed)),
              Section::kVocab);
  }
  std::set<std::string> sorted_words(words.begin(), words.end());
  for (const auto& w : sorted_words) {
    TokenUnit unit{w, TokenKind::kWord};
    vocab.add(unit.key(), std::span<const double>(resolve_vector(unit, backing, source.pseudo_seed)),
              Section::kVocab);
  }

  EmbeddingTable units(dim);
  auto add_units = [&](const std::vector<std::string>& names, TokenKind kind) {
    std::set<std::string> sorted(names.begin(), names.end());
    for (const auto& name : sorted) {
      TokenUnit unit{name, kind};
      std::vector<double> v;
      if (auto i = backing.find(unit.key())) {
        v = backing.vector_f64(*i);
      } else {
        // Words already placed in the vocabulary section win over the file,
        // so a unit is always the mean of the vectors the model sees.
        v = build_unit_embedding(unit, vocab, source.pseudo_seed);
      }
      units.add(unit.key(), std::span<const double>(v), Section::kUnit);
    }
  };
  add_units(domains, TokenKind::kDomain);
  add_units(slots, TokenKind::kSlot);
  return compose_embedding(vocab, units);
}

// ---- file format -----------------------------------------------------------

void save_embedding_file(const EmbeddingTable& table, const std::filesystem::path& path) {
  std::string records;
  auto append = [&](const std::string& key, std::span<const float> values) {
    auto bytes = codec::floats_to_le_bytes(values);
    records += key;
    records += '\t';
    records += codec::base64_encode(
        std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
    records += '\n';
  };
  for (std::size_t i = 0; i < table.size(); ++i) append(table.key(i), table.vector(i));
  for (const auto& [id, m] : table.contextual()) append("ctx:" + id, m.second);

  nlohmann::ordered_json header;
  header["version"] = 1;
  header["d_e"] = table.dim();
  header["counts"] = {{"vocab", table.vocab_count()}, {"unit", table.unit_count()}};
  if (!table.contextual().empty()) header["counts"]["context"] = table.contextual().size();
  header["checksum"] = codec::sha256_hex(records);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write embedding file " + path.string());
  out << header.dump() << '\n' << records;
  if (!out) throw DataError("failed writing embedding file " + path.string());
}

EmbeddingTable load_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line)) throw DataError(path.string() + ": missing header");
  std::ostringstream rest;
  rest << in.rdbuf();
  const std::string records = rest.str();

  nlohmann::json header;
  std::size_t dim = 0, n_vocab = 0, n_unit = 0, n_context = 0;
  std::string checksum;
  try {
    header = nlohmann::json::parse(header_line);
    if (header.at("version").get<int>() != 1) throw DataError("unsupported version");
    dim = header.at("d_e").get<std::size_t>();
    n_vocab = header.at("counts").at("vocab").get<std::size_t>();
    n_unit = header.at("counts").at("unit").get<std::size_t>();
    n_context = header["counts"].value("context", std::size_t{0});
    checksum = header.at("checksum").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed header: " + e.what());
  }
  if (dim == 0) throw DataError(path.string() + ": malformed header: d_e must be positive");

  EmbeddingTable table(dim);
  std::size_t line_no = 1, pos = 0, seen = 0;
  while (pos < records.size()) {
    auto end = records.find('\n', pos);
    if (end == std::string::npos) throw DataError(path.string() + ": truncated record at end of file");
    std::string_view line(records.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": record without tab");
    }
    std::string key(line.substr(0, tab));
    auto bytes = codec::base64_decode(line.substr(tab + 1));
    auto values = codec::le_bytes_to_floats(bytes);
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (seen < n_vocab + n_unit) {
      if (values.size() != dim) {
        throw DataError(where + "record has " + std::to_string(values.size()) +
                        " values, header says d_e=" + std::to_string(dim));
      }
      table.add(key, std::span<const float>(values), seen < n_vocab ? Section::kVocab : Section::kUnit);
    } else {
      if (!key.starts_with("ctx:")) throw DataError(where + "unexpected record '" + key + "'");
      if (values.empty() || values.size() % dim != 0) {
        throw DataError(where + "contextual matrix is not a whole number of rows");
      }
      const std::size_t rows = values.size() / dim;
      table.add_contextual(key.substr(4), rows, std::move(values));
    }
    ++seen;
  }
  if (seen != n_vocab + n_unit + n_context) {
    throw DataError(path.string() + ": expected " + std::to_string(n_vocab + n_unit + n_context) +
                    " records, found " + std::to_string(seen));
  }
  if (codec::sha256_hex(records) != checksum) {
    throw ChecksumError(path.string() + ": checksum mismatch");
  }
  return table;
}

}  // namespace comer
