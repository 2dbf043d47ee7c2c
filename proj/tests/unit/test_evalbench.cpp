#include <doctest.h>

#include "comer/errors.hpp"
#include "comer/evalbench.hpp"
#include "support.hpp"

using namespace comer;
using test::state;

namespace {

const OntologyStats kWoz = ontology_stats(7.45, 11.24, 3, 99);
const OntologyStats kMultiWoz = ontology_stats(13.68, 13.18, 35, 4510);

}  // namespace

TEST_CASE("turn scores nest") {
  auto gold = state({{"hotel", "area", "north"}, {"hotel", "day", "monday"}});
  TurnScore s = score_turn(gold, gold);
  CHECK((s.domains && s.domain_slots && s.goal));
  s = score_turn(state({{"hotel", "area", "north"}, {"hotel", "day", "friday"}}), gold);
  CHECK((s.domains && s.domain_slots && !s.goal));
  s = score_turn(state({{"hotel", "area", "north"}}), gold);
  CHECK((s.domains && !s.domain_slots && !s.goal));
  s = score_turn(state({{"taxi", "area", "north"}}), gold);
  CHECK((!s.domains && !s.domain_slots && !s.goal));
  s = score_turn({}, {});
  CHECK((s.domains && s.domain_slots && s.goal));
}

TEST_CASE("ten-turn metric fixture") {
  auto f = test::load_metric_fixture(std::string(COMER_FIXTURES) + "/metric_turns.json");
  REQUIRE(f.preds.size() == 10);
  MetricsReport r = metrics(f.preds, f.golds);
  CHECK(r.turns == 10);
  CHECK(r.jd == doctest::Approx(f.jd));
  CHECK(r.jds == doctest::Approx(f.jds));
  CHECK(r.jg == doctest::Approx(f.jg));
  CHECK(r.to_json().dump() == R"({"jd":0.7,"jds":0.5,"jg":0.3,"turns":10})");

  MetricsReport oracle = metrics(f.golds, f.golds);
  CHECK(oracle.jg == 1.0);
  CHECK(oracle.jds == 1.0);
  CHECK(oracle.jd == 1.0);

  CHECK_THROWS_AS(metrics(f.preds, std::span(f.golds).first(9)), std::invalid_argument);
  MetricsReport none = metrics(std::vector<BeliefState>{}, std::vector<BeliefState>{});
  CHECK(none.turns == 0);
  CHECK(none.jg == 0.0);
}

TEST_CASE("metric ordering on random pairs") {
  Rng rng(12);
  const std::vector<std::string> doms{"hotel", "train"}, slots{"area", "day"}, vals{"a", "b"};
  auto draw = [&] {
    BeliefState b;
    for (int i = 0, n = static_cast<int>(rng() % 4); i < n; ++i) {
      b.set(doms[rng() % 2], slots[rng() % 2], {vals[rng() % 2]});
    }
    return b;
  };
  std::vector<BeliefState> p, g;
  for (int i = 0; i < 500; ++i) p.push_back(draw()), g.push_back(draw());
  MetricsReport r = metrics(p, g);
  CHECK(r.jg <= r.jds);
  CHECK(r.jds <= r.jd);
  CHECK(r.jg > 0.0);
}

TEST_CASE("ITM values for the two ontologies") {
  CHECK(itm(kWoz, kMultiWoz, ItcClass::kConstant) == doctest::Approx(2.15).epsilon(0.01 / 2.15));
  CHECK(itm(kWoz, kMultiWoz, ItcClass::kLinear) == doctest::Approx(25.1).epsilon(0.2 / 25.1));
  CHECK(itm(kWoz, kMultiWoz, ItcClass::kProduct) == doctest::Approx(1143).epsilon(5.0 / 1143));
  CHECK(itm(kWoz, kMultiWoz, ItcClass::kConstant) == doctest::Approx((13.68 / 7.45) * (13.18 / 11.24)));
}

TEST_CASE("ITM identity and multiplicativity") {
  const OntologyStats mid = ontology_stats(10.0, 12.0, 10, 700);
  for (ItcClass c : {ItcClass::kConstant, ItcClass::kLinear, ItcClass::kProduct}) {
    CHECK(itm(kWoz, kWoz, c) == doctest::Approx(1.0));
    CHECK(itm(kWoz, kMultiWoz, c) == doctest::Approx(itm(kWoz, mid, c) * itm(mid, kMultiWoz, c)));
    CHECK(itm(kWoz, kMultiWoz, c) * itm(kMultiWoz, kWoz, c) == doctest::Approx(1.0));
  }
  CHECK(parse_itc("O(1)") == ItcClass::kConstant);
  CHECK(parse_itc("O(n)") == ItcClass::kLinear);
  CHECK(parse_itc("O(mn)") == ItcClass::kProduct);
  CHECK_THROWS_AS(parse_itc("O(n^2)"), ConfigError);
  CHECK_THROWS_AS(itm(ontology_stats(0.0, 1, 1, 1), kWoz, ItcClass::kConstant), std::invalid_argument);
}

TEST_CASE("inference benchmark report") {
  auto corpus = gen_synthetic({1, 2, 3}, 3, 5);
  const Vocabulary vocab = collect_vocabulary(corpus);
  Lexicon lex = test::small_lexicon(vocab, 64);
  ComerModel m = test::small_model(8, 64, 3);
  // An untrained model may pick a dummy slot; pin the output direction to
  // real names so the call count is comparable across levels.
  std::fill(m.decoder.out_w.mutable_data().begin(), m.decoder.out_w.mutable_data().end(), 0.0);
  auto b = m.decoder.out_b.mutable_data();
  for (const TokenUnit& u : {TokenUnit{vocab.domains[0], TokenKind::kDomain},
                             TokenUnit{vocab.slots[0], TokenKind::kSlot}}) {
    auto e = lex.embed(u).to_vector();
    for (std::size_t k = 0; k < b.size(); ++k) b[k] += 20.0 * e[k];
  }
  std::size_t turns = 0;
  for (const auto& d : corpus) turns += d.turns.size();

  std::vector<std::size_t> one{2};
  BenchReport single = benchmark_inference(m, lex, corpus, one, 2);
  REQUIRE(single.levels.size() == 1);
  CHECK(single.levels[0].ratio == 1.0);
  CHECK(single.turns == turns);
  CHECK(single.levels[0].run_means.size() == 2);
  CHECK(single.levels[0].turn_seconds.size() == turns);

  std::vector<std::size_t> two{2, 30};
  BenchReport r = benchmark_inference(m, lex, corpus, two, 2);
  REQUIRE(r.levels.size() == 2);
  CHECK(r.levels[1].table_size == r.levels[0].table_size + 28);
  CHECK(r.decode_calls_constant());
  CHECK(r.levels[1].ratio == doctest::Approx(r.levels[1].mean / r.levels[0].mean));
  CHECK(r.to_json()["levels"].size() == 2);
  const std::string csv = r.to_csv();
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == 1 + 2 * turns);
  CHECK(r.to_table().find("30") != std::string::npos);

  CHECK_THROWS_AS(benchmark_inference(m, lex, std::vector<Dialogue>{}, one, 1), DataError);
  std::vector<std::size_t> too_few{1};
  CHECK_THROWS_AS(benchmark_inference(m, lex, corpus, too_few, 1), std::invalid_argument);
}
