#include "comer/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "comer/codec.hpp"
#include "comer/errors.hpp"

namespace comer {

using nlohmann::json;
using nlohmann::ordered_json;

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "amsgrad") return OptimizerKind::kAmsGrad;
  throw ConfigError("unknown optimizer \"" + std::string(name) + "\" (adam, amsgrad)");
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "amsgrad"; }

namespace {

MemoryRole parse_role(const std::string& s) {
  if (s == "belief") return MemoryRole::kBelief;
  if (s == "system") return MemoryRole::kSystem;
  if (s == "user") return MemoryRole::kUser;
  throw ConfigError("unknown attention memory \"" + s + "\" (belief, system, user)");
}

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key \"" + key + "\" has the wrong type");
  }
}

std::size_t positive(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("config key \"" + key + "\" must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

void TrainConfig::validate() const {
  const auto& d = model.decoder;
  if (d.model_dim == 0 || d.model_dim % 2 != 0) throw ConfigError("d_m must be a positive even number");
  if (d.embed_dim == 0) throw ConfigError("d_e must be positive");
  if (!(d.dropout >= 0.0 && d.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(clip > 0.0)) throw ConfigError("clip must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (model.max_domains == 0 || model.max_slots == 0 || model.max_value_tokens == 0) {
    throw ConfigError("decode length limits must be positive");
  }
  std::array<MemoryRole, 3> order = d.attention_order;
  std::sort(order.begin(), order.end());
  if (order != std::array<MemoryRole, 3>{MemoryRole::kBelief, MemoryRole::kSystem, MemoryRole::kUser}) {
    throw ConfigError("attention_order must name belief, system and user once each");
  }
}

ordered_json TrainConfig::to_json() const {
  ordered_json j;
  j["d_m"] = model.decoder.model_dim;
  j["d_e"] = model.decoder.embed_dim;
  j["dropout"] = model.decoder.dropout;
  j["lr"] = lr;
  j["clip"] = clip;
  j["optimizer"] = comer::to_string(optimizer);
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["block_grad"] = model.decoder.block_grad;
  j["move_dropout"] = model.decoder.move_dropout;
  auto order = ordered_json::array();
  for (auto r : model.decoder.attention_order) order.push_back(comer::to_string(r));
  j["attention_order"] = order;
  j["max_domains"] = model.max_domains;
  j["max_slots"] = model.max_slots;
  j["max_value_tokens"] = model.max_value_tokens;
  j["value_outputs"] = comer::to_string(model.value_outputs);
  j["valid_feed"] = valid_feed == StateFeed::kGold ? "gold" : "predicted";
  return j;
}

bool TrainConfig::apply(const std::string& key, const json& v) {
  auto& d = model.decoder;
  if (key == "d_m") d.model_dim = positive(v, key);
  else if (key == "d_e") d.embed_dim = positive(v, key);
  else if (key == "dropout") d.dropout = get_as<double>(v, key);
  else if (key == "lr") lr = get_as<double>(v, key);
  else if (key == "clip") clip = get_as<double>(v, key);
  else if (key == "optimizer") optimizer = parse_optimizer(get_as<std::string>(v, key));
  else if (key == "batch_size") batch_size = positive(v, key);
  else if (key == "epochs") epochs = positive(v, key);
  else if (key == "seed") seed = get_as<std::uint64_t>(v, key);
  else if (key == "block_grad") d.block_grad = get_as<bool>(v, key);
  else if (key == "move_dropout") d.move_dropout = get_as<bool>(v, key);
  else if (key == "attention_order") {
    auto names = get_as<std::vector<std::string>>(v, key);
    if (names.size() != 3) throw ConfigError("attention_order needs exactly three entries");
    for (std::size_t i = 0; i < 3; ++i) d.attention_order[i] = parse_role(names[i]);
  } else if (key == "max_domains") model.max_domains = positive(v, key);
  else if (key == "max_slots") model.max_slots = positive(v, key);
  else if (key == "max_value_tokens") model.max_value_tokens = positive(v, key);
  else if (key == "value_outputs") model.value_outputs = parse_value_outputs(get_as<std::string>(v, key));
  else if (key == "valid_feed") valid_feed = parse_state_feed(get_as<std::string>(v, key));
  else return false;
  return true;
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (!cfg.apply(key, value)) throw ConfigError("unknown config key \"" + key + "\"");
  }
  cfg.validate();
  return cfg;
}

void init_params(const ParamList& params, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& p : params) {
    num::Tensor t = p.tensor;
    auto data = t.mutable_data();
    if (p.bias) {
      std::fill(data.begin(), data.end(), 0.0);
      continue;
    }
    const double fan_in = static_cast<double>(t.shape().front());
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (auto& x : data) x = static_cast<double>(static_cast<float>(normal(rng)));
  }
}

double clip_gradients(std::span<std::vector<double>> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_gradients: max_norm must be positive");
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (double& x : g) x *= s;
  }
  return norm;
}

double clip_gradients(const ParamList& params, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_gradients: max_norm must be positive");
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    num::Tensor t = p.tensor;
    for (double x : t.mutable_grad()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      num::Tensor t = p.tensor;
      for (double& x : t.mutable_grad()) x *= s;
    }
  }
  return norm;
}

OptimizerState make_optimizer_state(const ParamList& params, OptimizerKind kind) {
  OptimizerState st;
  st.kind = kind;
  for (const auto& p : params) {
    st.m.emplace_back(p.tensor.numel(), 0.0);
    st.v.emplace_back(p.tensor.numel(), 0.0);
    if (kind == OptimizerKind::kAmsGrad) st.v_max.emplace_back(p.tensor.numel(), 0.0);
  }
  return st;
}

void optimizer_step(const ParamList& params, OptimizerState& st, const OptimizerSettings& s) {
  if (st.m.size() != params.size()) throw std::invalid_argument("optimizer state does not match parameters");
  if (st.kind != s.kind) throw std::invalid_argument("optimizer state was built for another optimizer");
  std::vector<std::vector<double>> grads(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    grads[i] = params[i].tensor.grad();
    for (std::size_t k = 0; k < grads[i].size(); ++k) {
      if (!std::isfinite(grads[i][k])) {
        throw NumericError("non-finite gradient in " + params[i].name + " at index " + std::to_string(k));
      }
    }
  }
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    num::Tensor p = params[i].tensor;
    auto w = p.mutable_data();
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = grads[i][k];
      m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g;
      v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g * g;
      double second = v[k];
      if (s.kind == OptimizerKind::kAmsGrad) {
        st.v_max[i][k] = std::max(st.v_max[i][k], v[k]);
        second = st.v_max[i][k];
      }
      const double update = s.lr * (m[k] / c1) / (std::sqrt(second / c2) + s.eps);
      w[k] -= update;
      if (s.round_to_float) w[k] = static_cast<double>(static_cast<float>(w[k]));
    }
  }
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) {
    num::Tensor t = p.tensor;
    t.zero_grad();
  }
}

namespace {

std::size_t gold_index(const Lexicon& lexicon, const TokenUnit& unit) {
  auto idx = lexicon.table().find(unit.key());
  if (!idx) throw DataError("gold token \"" + unit.key() + "\" is not in the embedding table");
  return *idx;
}

}  // namespace

TurnLoss loss_turn(const ComerModel& model, const Lexicon& lexicon, const TurnInput& input,
                   const BeliefState& gold, Mode mode, Rng& rng, bool record_steps) {
  const BeliefState target = canonical_order(gold, model.frequencies);
  EncodedTurn enc = encode_turn(input, model, lexicon);
  const Memories mem = enc.memories();
  const DecoderState q0 = initial_decoder_state(enc.q0);
  const auto& dcfg = model.config.decoder;

  TurnLoss out;
  std::vector<num::Tensor> terms;
  auto run = [&](Level level, const num::Tensor& condition, const OutputSet& outputs,
                 const std::vector<std::size_t>& gold_seq) {
    DecodeResult r = decode_sequence(condition, mem, lexicon, outputs, q0, gold_seq.size() + 1,
                                     std::span<const std::size_t>(gold_seq), model.decoder, dcfg, mode, rng);
    for (std::size_t k = 0; k < r.step_logits.size(); ++k) {
      terms.push_back(num::cross_entropy(r.step_logits[k], r.target_positions[k]));
      if (record_steps) {
        out.steps.push_back({level, r.targets[k], r.target_positions[k],
                             num::softmax_values(r.step_logits[k].data())});
      }
    }
    return r;
  };

  std::vector<std::size_t> domain_seq;
  for (const auto& d : target.domains) domain_seq.push_back(gold_index(lexicon, {d.domain, TokenKind::kDomain}));
  DecodeResult dr = run(Level::kDomain, num::Tensor::zeros({1, dcfg.model_dim}), lexicon.domain_outputs(), domain_seq);

  for (std::size_t i = 0; i < target.domains.size(); ++i) {
    const auto& dom = target.domains[i];
    std::vector<std::size_t> slot_seq;
    for (const auto& sv : dom.slots) slot_seq.push_back(gold_index(lexicon, {sv.slot, TokenKind::kSlot}));
    DecodeResult sr = run(Level::kSlot, dr.hidden_rows[i], lexicon.slot_outputs(), slot_seq);
    for (std::size_t j = 0; j < dom.slots.size(); ++j) {
      std::vector<std::size_t> value_seq;
      for (const auto& w : dom.slots[j].value) {
        TokenUnit u = w == tokens::kPriority ? tokens::control_unit(w) : TokenUnit{w, TokenKind::kWord};
        value_seq.push_back(gold_index(lexicon, u));
      }
      run(Level::kValue, sr.hidden_rows[j], value_output_set(model, lexicon, dom.domain, dom.slots[j].slot),
          value_seq);
    }
  }
  out.loss = num::add_scalars(terms);
  return out;
}

ordered_json EpochReport::to_json() const {
  ordered_json j;
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["first_batch_loss"] = first_batch;
  j["steps"] = steps;
  j["valid"] = valid.to_json();
  j["seconds"] = seconds;
  return j;
}

TrainResult train(const TrainConfig& cfg, std::span<const Dialogue> train_set, std::span<const Dialogue> valid_set,
                  const Lexicon& lexicon, const TrainHooks& hooks) {
  cfg.validate();
  if (cfg.model.decoder.embed_dim != lexicon.dim()) {
    throw ConfigError("d_e is " + std::to_string(cfg.model.decoder.embed_dim) + " but the embedding table has " +
                      std::to_string(lexicon.dim()) + " dimensions");
  }
  struct Item {
    const Dialogue* dialogue;
    std::size_t turn;
  };
  std::vector<Item> items;
  for (const auto& d : train_set)
    for (std::size_t t = 0; t < d.turns.size(); ++t) items.push_back({&d, t});
  if (items.empty()) throw DataError("training set has no turns");

  TrainResult res;
  res.model = ComerModel::zeros(cfg.model);
  res.model.frequencies = compute_frequencies(train_set);
  collect_value_words(res.model, train_set);
  const ParamList params = res.model.params();
  init_params(params, cfg.seed);
  res.best = res.model.clone();

  Rng shuffle_rng(cfg.seed ^ 0x5eedf00dULL);
  Rng dropout_rng(cfg.seed + 1);
  OptimizerState opt = make_optimizer_state(params, cfg.optimizer);
  const OptimizerSettings settings{cfg.optimizer, cfg.lr};
  bool have_best = false;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(items.begin(), items.end(), shuffle_rng);
    EpochReport rep;
    rep.epoch = epoch;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < items.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(items.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      double batch_loss = 0.0;
      zero_grads(params);
      for (std::size_t b = start; b < end; ++b) {
        const Dialogue& d = *items[b].dialogue;
        const std::size_t t = items[b].turn;
        TurnInput input{d.turns[t].user, d.turns[t].system, t == 0 ? BeliefState{} : d.turns[t - 1].state};
        TurnLoss tl = loss_turn(res.model, lexicon, input, d.turns[t].state, Mode::kTrain, dropout_rng);
        const double value = tl.loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", dialogue " + d.id +
                             ", turn " + std::to_string(t));
        }
        num::backward(num::scale(tl.loss, inv));
        batch_loss += value * inv;
        loss_sum += value;
      }
      clip_gradients(params, cfg.clip);
      optimizer_step(params, opt, settings);
      ++step;
      if (rep.steps == 0) rep.first_batch = batch_loss;
      ++rep.steps;
      if (hooks.on_step) hooks.on_step(step, batch_loss);
    }
    rep.loss = loss_sum / static_cast<double>(items.size());
    rep.valid = evaluate(res.model, lexicon, valid_set, cfg.valid_feed);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.epochs.push_back(rep);
    if (!have_best || rep.valid.jg > res.best_metric) {
      have_best = true;
      res.best = res.model.clone();
      res.best_epoch = epoch;
      res.best_metric = rep.valid.jg;
    }
    if (hooks.on_epoch && !hooks.on_epoch(rep, res.model)) break;
  }
  return res;
}

std::string table_digest(const EmbeddingTable& table) {
  std::string bytes;
  for (std::size_t i = 0; i < table.size(); ++i) {
    bytes += table.key(i);
    bytes.push_back('\n');
    bytes += codec::floats_to_le_bytes(table.vector(i));
  }
  return codec::sha256_hex(bytes);
}

namespace {

ordered_json frequencies_to_json(const FrequencyTables& f) {
  ordered_json j;
  ordered_json d = ordered_json::object();
  for (const auto& [k, v] : f.domain) d[k] = v;
  ordered_json s = ordered_json::array();
  for (const auto& [k, v] : f.slot) s.push_back({k.first, k.second, v});
  j["domain"] = std::move(d);
  j["slot"] = std::move(s);
  return j;
}

FrequencyTables frequencies_from_json(const json& j) {
  FrequencyTables f;
  for (const auto& [k, v] : j.at("domain").items()) f.domain[k] = v.get<std::size_t>();
  for (const auto& e : j.at("slot")) {
    f.slot[{e.at(0).get<std::string>(), e.at(1).get<std::string>()}] = e.at(2).get<std::size_t>();
  }
  return f;
}

}  // namespace

std::string checkpoint_bytes(const ComerModel& model, const CheckpointMeta& meta) {
  const ParamList params = model.params();
  std::string blob;
  ordered_json shapes = ordered_json::array();
  for (const auto& p : params) {
    std::vector<float> f(p.tensor.data().begin(), p.tensor.data().end());
    blob += codec::floats_to_le_bytes(f);
    shapes.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  }
  ordered_json h;
  h["format"] = "comer-checkpoint";
  h["version"] = 1;
  h["config"] = meta.config.to_json();
  h["seed"] = meta.config.seed;
  h["epoch"] = meta.epoch;
  h["metric"] = meta.metric;
  h["params"] = std::move(shapes);
  h["frequencies"] = frequencies_to_json(model.frequencies);
  ordered_json vw = ordered_json::array();
  for (const auto& [k, v] : model.value_words) vw.push_back({k.first, k.second, v});
  h["value_words"] = std::move(vw);
  h["vocabulary"] = {{"words", meta.vocabulary.words},
                     {"domains", meta.vocabulary.domains},
                     {"slots", meta.vocabulary.slots}};
  h["embedding"] = meta.embedding.is_null() ? ordered_json::object() : ordered_json(meta.embedding);
  h["table_digest"] = meta.table_digest;
  h["blob_bytes"] = blob.size();
  h["checksum"] = codec::sha256_hex(blob);
  return h.dump() + "\n" + blob;
}

void save_checkpoint(const std::filesystem::path& path, const ComerModel& model, const CheckpointMeta& meta) {
  const std::string bytes = checkpoint_bytes(model, meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint parse_checkpoint(const std::string& bytes, const std::string& where) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw DataError(where + ": missing header line");
  json h;
  try {
    h = json::parse(bytes.substr(0, nl));
  } catch (const json::parse_error& e) {
    throw DataError(where + ": malformed header: " + e.what());
  }
  const std::string blob = bytes.substr(nl + 1);
  LoadedCheckpoint out;
  try {
    if (h.at("format") != "comer-checkpoint" || h.at("version") != 1) {
      throw DataError(where + ": not a version 1 checkpoint");
    }
    if (h.at("blob_bytes").get<std::size_t>() != blob.size()) {
      throw DataError(where + ": expected " + h.at("blob_bytes").dump() + " parameter bytes, found " +
                      std::to_string(blob.size()));
    }
    if (codec::sha256_hex(blob) != h.at("checksum").get<std::string>()) {
      throw ChecksumError(where + ": parameter checksum mismatch");
    }
    out.meta.config = TrainConfig::from_json(h.at("config"));
    out.meta.epoch = h.at("epoch").get<std::size_t>();
    out.meta.metric = h.at("metric").get<double>();
    const json& voc = h.at("vocabulary");
    out.meta.vocabulary = {voc.at("words").get<std::vector<std::string>>(),
                           voc.at("domains").get<std::vector<std::string>>(),
                           voc.at("slots").get<std::vector<std::string>>()};
    out.meta.embedding = h.at("embedding");
    out.meta.table_digest = h.at("table_digest").get<std::string>();

    out.model = ComerModel::zeros(out.meta.config.model);
    out.model.frequencies = frequencies_from_json(h.at("frequencies"));
    for (const auto& e : h.at("value_words")) {
      out.model.value_words[{e.at(0).get<std::string>(), e.at(1).get<std::string>()}] =
          e.at(2).get<std::vector<std::string>>();
    }
    const ParamList params = out.model.params();
    const json& shapes = h.at("params");
    if (shapes.size() != params.size()) throw DataError(where + ": parameter list does not match the config");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (shapes[i].at("name") != params[i].name ||
          shapes[i].at("shape").get<num::Shape>() != params[i].tensor.shape()) {
        throw DataError(where + ": parameter " + std::to_string(i) + " (" + params[i].name + ") has the wrong shape");
      }
      const std::size_t n = params[i].tensor.numel() * 4;
      if (offset + n > blob.size()) throw DataError(where + ": truncated parameter blob");
      auto f = codec::le_bytes_to_floats(
          std::span(reinterpret_cast<const std::uint8_t*>(blob.data()) + offset, n));
      num::Tensor t = params[i].tensor;
      auto dst = t.mutable_data();
      for (std::size_t k = 0; k < f.size(); ++k) dst[k] = f[k];
      offset += n;
    }
    if (offset != blob.size()) throw DataError(where + ": trailing bytes after the parameter blob");
  } catch (const json::exception& e) {
    throw DataError(where + ": malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(where + ": bad stored config: " + e.what());
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str(), path.string());
}

}  // namespace comer
