#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "comer/errors.hpp"
#include "comer/training.hpp"
#include "support.hpp"

using namespace comer;
using num::Tensor;

namespace {

struct Toy {
  std::vector<Dialogue> corpus = gen_synthetic({1, 2, 3}, 6, 4);
  Vocabulary vocab = collect_vocabulary(corpus);
  Lexicon lex = test::small_lexicon(vocab, 16);

  TrainConfig config(std::size_t epochs = 2) const {
    TrainConfig c;
    c.model.decoder.model_dim = 8;
    c.model.decoder.embed_dim = 16;
    c.model.decoder.dropout = 0.2;
    c.model.max_domains = 3;
    c.model.max_slots = 3;
    c.model.max_value_tokens = 3;
    c.lr = 0.01;
    c.batch_size = 4;
    c.epochs = epochs;
    c.seed = 9;
    return c;
  }
};

ComerModel toy_model(const Toy& toy, std::uint64_t seed = 2) {
  ComerModel m = ComerModel::zeros(toy.config().model);
  init_params(m.params(), seed);
  m.frequencies = compute_frequencies(toy.corpus);
  collect_value_words(m, toy.corpus);
  return m;
}

TurnInput input_of(const Dialogue& d, std::size_t t) {
  return {d.turns[t].user, d.turns[t].system, t == 0 ? BeliefState{} : d.turns[t - 1].state};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("gradient clipping") {
  std::vector<std::vector<double>> g{{3.0}, {4.0}};
  CHECK(clip_gradients(g, 2.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == doctest::Approx(1.2));
  CHECK(g[1][0] == doctest::Approx(1.6));
  std::vector<std::vector<double>> small{{0.3, -0.4}};
  CHECK(clip_gradients(small, 2.0) == doctest::Approx(0.5));
  CHECK(small[0] == std::vector<double>{0.3, -0.4});
  CHECK_THROWS_AS(clip_gradients(small, 0.0), std::invalid_argument);

  ParamList ps{{"w", Tensor::parameter({1, 2}, {1.0, 1.0}), false}};
  num::backward(num::sum(num::scale(ps[0].tensor, 10.0)));
  CHECK(clip_gradients(ps, 2.0) == doctest::Approx(std::sqrt(200.0)));
  auto gr = ps[0].tensor.grad();
  CHECK(std::hypot(gr[0], gr[1]) == doctest::Approx(2.0));
}

TEST_CASE("Adam minimises a quadratic") {
  ParamList ps{{"w", Tensor::parameter({1, 3}, {1.0, -2.0, 3.0}), false}};
  OptimizerSettings s{OptimizerKind::kAdam, 0.05};
  s.round_to_float = false;
  OptimizerState st = make_optimizer_state(ps, s.kind);
  for (int i = 0; i < 2000; ++i) {
    zero_grads(ps);
    num::backward(num::scale(num::sum(num::mul(ps[0].tensor, ps[0].tensor)), 0.5));
    optimizer_step(ps, st, s);
  }
  double norm = 0;
  for (double x : ps[0].tensor.data()) norm += x * x;
  CHECK(std::sqrt(norm) < 0.05);
  CHECK(st.step == 2000);
}

TEST_CASE("first Adam step moves every coordinate by lr") {
  ParamList ps{{"w", Tensor::parameter({1, 3}, {0.5, 0.5, 0.5}), false}};
  OptimizerSettings s{OptimizerKind::kAdam, 0.01};
  s.round_to_float = false;
  OptimizerState st = make_optimizer_state(ps, s.kind);
  num::backward(num::sum(num::mul(ps[0].tensor, Tensor::constant({1, 3}, {2.0, -0.001, 300.0}))));
  optimizer_step(ps, st, s);
  auto w = ps[0].tensor.data();
  CHECK(w[0] == doctest::Approx(0.49).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(0.51).epsilon(1e-6));
  CHECK(w[2] == doctest::Approx(0.49).epsilon(1e-6));
}

TEST_CASE("AMSGrad second moment never decreases; zero gradients leave weights alone") {
  ParamList ps{{"w", Tensor::parameter({1, 4}, {0.1, 0.2, 0.3, 0.4}), false}};
  OptimizerSettings s{OptimizerKind::kAmsGrad, 0.01};
  OptimizerState st = make_optimizer_state(ps, s.kind);
  Rng rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> prev(4, 0.0);
  for (int i = 0; i < 200; ++i) {
    zero_grads(ps);
    std::vector<double> c(4);
    for (auto& x : c) x = n(rng) * (i < 100 ? 5.0 : 0.1);
    num::backward(num::sum(num::mul(ps[0].tensor, Tensor::constant({1, 4}, c))));
    optimizer_step(ps, st, s);
    for (std::size_t k = 0; k < 4; ++k) {
      REQUIRE(st.v_max[0][k] >= prev[k]);
      REQUIRE(st.v_max[0][k] >= st.v[0][k]);
    }
    prev = st.v_max[0];
  }

  ParamList z{{"z", Tensor::parameter({1, 2}, {0.25, -0.75}), false}};
  OptimizerState zs = make_optimizer_state(z, OptimizerKind::kAdam);
  num::backward(num::sum(num::scale(z[0].tensor, 0.0)));
  optimizer_step(z, zs, {});
  CHECK(z[0].tensor.to_vector() == std::vector<double>{0.25, -0.75});
}

TEST_CASE("non-finite gradients are reported before any update") {
  ParamList ps{{"decoder.out.b", Tensor::parameter({1, 2}, {1.0, 2.0}), true},
               {"decoder.mlp.w0", Tensor::parameter({1, 2}, {3.0, 4.0}), false}};
  num::backward(num::add(num::sum(ps[0].tensor), num::sum(num::scale(ps[1].tensor, std::nan("")))));
  OptimizerState st = make_optimizer_state(ps, OptimizerKind::kAdam);
  CHECK_THROWS_WITH_AS(optimizer_step(ps, st, {}), doctest::Contains("decoder.mlp.w0"), NumericError);
  CHECK(ps[0].tensor.to_vector() == std::vector<double>{1.0, 2.0});
  CHECK(st.step == 0);
}

TEST_CASE("Kaiming initialisation") {
  ParamList ps{{"w", Tensor::parameter({512, 512}, std::vector<double>(512 * 512)), false},
               {"b", Tensor::parameter({1, 512}, std::vector<double>(512, 1.0)), true}};
  init_params(ps, 42);
  double mean = 0, sq = 0;
  for (double x : ps[0].tensor.data()) mean += x, sq += x * x;
  const double n = 512.0 * 512.0;
  mean /= n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(var - 2.0 / 512) < 0.15 * 2.0 / 512);
  CHECK(std::abs(mean) < 1e-3);
  for (double x : ps[1].tensor.data()) REQUIRE(x == 0.0);
  for (double x : ps[0].tensor.data()) REQUIRE(static_cast<double>(static_cast<float>(x)) == x);

  auto a = test::snapshot(ps);
  init_params(ps, 42);
  CHECK(test::snapshot(ps) == a);
  init_params(ps, 43);
  CHECK(test::snapshot(ps) != a);
}

TEST_CASE("empty gold state costs one [SEP] step") {
  Toy toy;
  ComerModel m = toy_model(toy);
  Rng rng(0);
  TurnLoss l = loss_turn(m, toy.lex, input_of(toy.corpus[0], 0), {}, Mode::kEval, rng, true);
  REQUIRE(l.steps.size() == 1);
  CHECK(l.steps[0].level == Level::kDomain);
  CHECK(l.steps[0].target == toy.lex.sep());
  CHECK(l.loss.item() == doctest::Approx(-std::log(l.steps[0].probs[l.steps[0].position])).epsilon(1e-12));
}

TEST_CASE("turn loss equals the summed step cross-entropies") {
  Toy toy;
  ComerModel m = toy_model(toy);
  Rng rng(0);
  const Dialogue& d = toy.corpus[1];
  const std::size_t t = d.turns.size() - 1;
  TurnLoss l = loss_turn(m, toy.lex, input_of(d, t), d.turns[t].state, Mode::kEval, rng, true);

  // Steps: each level emits its gold tokens plus [SEP].
  const BeliefState& g = d.turns[t].state;
  std::size_t expected = g.domains.size() + 1;
  for (const auto& dom : g.domains) {
    expected += dom.slots.size() + 1;
    for (const auto& sv : dom.slots) expected += sv.value.size() + 1;
  }
  CHECK(l.steps.size() == expected);
  double sum = 0;
  for (const auto& s : l.steps) sum -= std::log(s.probs[s.position]);
  CHECK(std::abs(l.loss.item() - sum) < 1e-10);

  BeliefState unknown = test::state({{"spaceship", "area", "north"}});
  CHECK_THROWS_AS(loss_turn(m, toy.lex, input_of(d, 0), unknown, Mode::kEval, rng), DataError);
}

TEST_CASE("batch gradient is the mean of per-example gradients") {
  Toy toy;
  ComerModel m = toy_model(toy);
  const ParamList ps = m.params();
  Rng rng(0);
  std::vector<TurnInput> inputs;
  std::vector<BeliefState> golds;
  for (std::size_t i = 0; i < 3; ++i) {
    inputs.push_back(input_of(toy.corpus[i], 0));
    golds.push_back(toy.corpus[i].turns[0].state);
  }
  std::vector<std::vector<double>> mean;
  for (std::size_t i = 0; i < 3; ++i) {
    zero_grads(ps);
    num::backward(loss_turn(m, toy.lex, inputs[i], golds[i], Mode::kEval, rng).loss);
    for (std::size_t p = 0; p < ps.size(); ++p) {
      auto g = ps[p].tensor.has_grad() ? ps[p].tensor.grad() : std::vector<double>(ps[p].tensor.numel(), 0.0);
      if (mean.size() <= p) mean.emplace_back(g.size(), 0.0);
      for (std::size_t k = 0; k < g.size(); ++k) mean[p][k] += g[k] / 3.0;
    }
  }
  zero_grads(ps);
  for (std::size_t i = 0; i < 3; ++i) {
    num::backward(num::scale(loss_turn(m, toy.lex, inputs[i], golds[i], Mode::kEval, rng).loss, 1.0 / 3.0));
  }
  double worst = 0;
  for (std::size_t p = 0; p < ps.size(); ++p) {
    auto g = ps[p].tensor.has_grad() ? ps[p].tensor.grad() : std::vector<double>(ps[p].tensor.numel(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) worst = std::max(worst, std::abs(g[k] - mean[p][k]));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("training config JSON") {
  TrainConfig c;
  c.lr = 0.001;
  c.optimizer = OptimizerKind::kAmsGrad;
  c.model.value_outputs = ValueOutputs::kSlot;
  c.model.decoder.attention_order = {MemoryRole::kUser, MemoryRole::kBelief, MemoryRole::kSystem};
  TrainConfig back = TrainConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  CHECK(back.to_json() == c.to_json());

  TrainConfig d;
  CHECK(d.model.decoder.dropout == 0.5);
  CHECK(d.model.decoder.model_dim == 512);
  CHECK(d.model.decoder.embed_dim == 1024);
  CHECK(d.lr == 0.0005);
  CHECK(d.clip == 2.0);
  CHECK(d.batch_size == 32);
  CHECK(d.epochs == 150);

  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"learning_rate", 0.1}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"lr", "fast"}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"dropout", 1.0}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"d_m", 7}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"optimizer", "sgd"}}), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"attention_order", {"user", "user", "belief"}}}),
                  ConfigError);
  CHECK(parse_optimizer("amsgrad") == OptimizerKind::kAmsGrad);
}

TEST_CASE("training is deterministic for a seed") {
  Toy toy;
  TrainConfig c = toy.config(2);
  TrainResult a = train(c, toy.corpus, toy.corpus, toy.lex);
  TrainResult b = train(c, toy.corpus, toy.corpus, toy.lex);
  CHECK(test::snapshot(a.model.params()) == test::snapshot(b.model.params()));
  REQUIRE(a.epochs.size() == 2);
  CHECK(a.epochs[0].loss == b.epochs[0].loss);
  CHECK(a.epochs[1].valid.to_json() == b.epochs[1].valid.to_json());
  c.seed = 10;
  TrainResult other = train(c, toy.corpus, toy.corpus, toy.lex);
  CHECK(test::snapshot(other.model.params()) != test::snapshot(a.model.params()));
}

TEST_CASE("zero epochs return the initial parameters") {
  Toy toy;
  TrainConfig c = toy.config(0);
  TrainResult r = train(c, toy.corpus, toy.corpus, toy.lex);
  CHECK(r.epochs.empty());
  ComerModel init = ComerModel::zeros(c.model);
  init_params(init.params(), c.seed);
  CHECK(test::snapshot(r.model.params()) == test::snapshot(init.params()));
  CHECK(test::snapshot(r.best.params()) == test::snapshot(init.params()));
}

TEST_CASE("training rejects bad setups") {
  Toy toy;
  TrainConfig c = toy.config(1);
  c.model.decoder.embed_dim = 12;
  CHECK_THROWS_AS(train(c, toy.corpus, toy.corpus, toy.lex), ConfigError);
  CHECK_THROWS_AS(train(toy.config(1), std::vector<Dialogue>{}, toy.corpus, toy.lex), DataError);
  std::vector<Dialogue> bad = toy.corpus;
  bad[0].turns[0].state.set("spaceship", "area", {"north"});
  CHECK_THROWS_AS(train(toy.config(1), bad, toy.corpus, toy.lex), DataError);
}

TEST_CASE("mini-batch loss falls early in training") {
  Toy toy;
  TrainConfig c = toy.config(20);
  c.model.decoder.dropout = 0.0;
  c.batch_size = static_cast<std::size_t>(1e6);  // one batch per epoch: the same examples every step
  std::vector<double> losses;
  TrainHooks h;
  h.on_step = [&](std::size_t, double l) { losses.push_back(l); };
  train(c, toy.corpus, toy.corpus, toy.lex, h);
  REQUIRE(losses.size() == 20);
  CHECK(*std::min_element(losses.begin() + 1, losses.end()) < losses.front());
  CHECK(losses.back() < losses.front());
}

TEST_CASE("parameter movement scales with the learning rate") {
  Toy toy;
  TrainConfig c = toy.config(1);
  c.lr = 1e-6;
  TrainResult r = train(c, toy.corpus, toy.corpus, toy.lex);
  ComerModel init = ComerModel::zeros(c.model);
  init_params(init.params(), c.seed);
  auto before = test::snapshot(init.params()), after = test::snapshot(r.model.params());
  const double steps = static_cast<double>(r.epochs[0].steps);
  double worst = 0;
  bool moved = false;
  for (std::size_t p = 0; p < before.size(); ++p)
    for (std::size_t k = 0; k < before[p].size(); ++k) {
      const double d = std::abs(after[p][k] - before[p][k]);
      const double ulp = std::abs(before[p][k]) * 1.2e-7;  // float storage
      worst = std::max(worst, d - ulp);
      moved |= d > 0;
    }
  CHECK(moved);
  CHECK(worst <= steps * 4 * c.lr);
}

TEST_CASE("checkpoint round-trip and tamper detection") {
  Toy toy;
  TrainConfig c = toy.config(1);
  TrainResult r = train(c, toy.corpus, toy.corpus, toy.lex);
  CheckpointMeta meta{c, 0, r.best_metric, toy.vocab, {{"source", "pseudo"}, {"seed", 5}}, table_digest(toy.lex.table())};
  auto dir = test::temp_dir("ckpt");
  save_checkpoint(dir / "m.ckpt", r.model, meta);
  LoadedCheckpoint back = load_checkpoint(dir / "m.ckpt");
  CHECK(test::snapshot(back.model.params()) == test::snapshot(r.model.params()));
  CHECK(back.model.frequencies.domain == r.model.frequencies.domain);
  CHECK(back.model.value_words == r.model.value_words);
  CHECK(back.meta.config.to_json() == c.to_json());
  CHECK(back.meta.table_digest == meta.table_digest);
  CHECK(back.meta.vocabulary.words == toy.vocab.words);
  CHECK(checkpoint_bytes(back.model, back.meta) == slurp(dir / "m.ckpt"));
  for (const auto& d : toy.corpus) {
    auto a = track_dialogue(d, r.model, toy.lex, StateFeed::kPredicted);
    auto b = track_dialogue(d, back.model, toy.lex, StateFeed::kPredicted);
    for (std::size_t t = 0; t < a.size(); ++t) REQUIRE(a[t].state == b[t].state);
  }

  const std::string bytes = slurp(dir / "m.ckpt");
  std::string flipped = bytes;
  flipped[bytes.size() - 3] ^= 0x01;
  CHECK_THROWS_AS(parse_checkpoint(flipped), ChecksumError);
  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 4)), DataError);
  CHECK_THROWS_AS(parse_checkpoint("not a checkpoint"), DataError);
  CHECK_THROWS_AS(parse_checkpoint("{\"format\":\"other\"}\n"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), DataError);
  CHECK(table_digest(toy.lex.table()) != table_digest(test::small_lexicon(toy.vocab, 16, 6).table()));
}
