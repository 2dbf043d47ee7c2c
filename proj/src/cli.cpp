#include "comer/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "comer/errors.hpp"

namespace comer::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <typename T>
T field(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key \"" + key + "\" has the wrong type");
  }
}

json read_json(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + std::string(what) + " " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path + ": invalid JSON: " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

std::vector<Dialogue> read_corpus(const std::string& path, const std::string& format) {
  if (path.empty()) throw ConfigError("no corpus given (--corpus)");
  return load_corpus(path, parse_corpus_format(format));
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad inflation entry \"" + item + "\"");
    }
  }
  if (out.empty()) throw ConfigError("empty inflation list");
  return out;
}

OntologyStats parse_stats(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad statistics entry \"" + item + "\"");
    }
  }
  if (v.size() != 4) throw ConfigError("statistics must be t,s,n,m");
  return ontology_stats(v[0], v[1], static_cast<std::size_t>(v[2]), static_cast<std::size_t>(v[3]));
}

std::vector<Dialogue> read_dialogues(const std::string& path) {
  json doc = read_json(path, "dialogue file");
  if (doc.is_object() && doc.contains("turns")) {
    json wrapped;
    wrapped["dialogues"] = json::array({doc});
    return parse_corpus(wrapped, CorpusFormat::kCanonical, path);
  }
  return parse_corpus(doc, CorpusFormat::kCanonical, path);
}

}  // namespace

void RunConfig::apply(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (train.apply(key, v)) continue;
    if (key == "corpus") corpus = field<std::string>(v, key);
    else if (key == "valid_corpus") valid_corpus = field<std::string>(v, key);
    else if (key == "format") format = field<std::string>(v, key);
    else if (key == "embeddings") embeddings = field<std::string>(v, key);
    else if (key == "embedding_seed") embedding_seed = field<std::uint64_t>(v, key);
    else if (key == "checkpoint") checkpoint = field<std::string>(v, key);
    else if (key == "metrics") metrics = field<std::string>(v, key);
    else if (key == "save_epochs") save_epochs = field<bool>(v, key);
    else throw ConfigError("unknown config key \"" + key + "\"");
  }
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  RunConfig cfg;
  cfg.apply(j);
  return cfg;
}

Lexicon make_lexicon(const Vocabulary& vocabulary, const std::string& embeddings, std::size_t dim,
                     std::uint64_t seed) {
  EmbeddingSource src;
  src.pseudo_seed = seed;
  if (embeddings == "pseudo" || embeddings.empty()) {
    src.dim = dim;
  } else {
    src.file = load_embedding_file(embeddings);
    src.dim = src.file->dim();
    if (src.dim != dim) {
      throw ConfigError("d_e is " + std::to_string(dim) + " but " + embeddings + " stores " +
                        std::to_string(src.dim) + " dimensions");
    }
  }
  return Lexicon(build_static_table(vocabulary.words, vocabulary.domains, vocabulary.slots, src), seed);
}

json embedding_descriptor(const std::string& embeddings, std::uint64_t seed) {
  json j;
  if (embeddings == "pseudo" || embeddings.empty()) {
    j["source"] = "pseudo";
  } else {
    j["source"] = "file";
    j["path"] = embeddings;
  }
  j["seed"] = seed;
  return j;
}

Lexicon checkpoint_lexicon(const LoadedCheckpoint& ckpt, const std::string& override_path) {
  const json& e = ckpt.meta.embedding;
  std::string source = "pseudo";
  std::uint64_t seed = 0;
  try {
    if (e.at("source") == "file") source = e.at("path").get<std::string>();
    seed = e.at("seed").get<std::uint64_t>();
  } catch (const json::exception&) {
    throw DataError("checkpoint has no usable embedding description");
  }
  if (!override_path.empty() && override_path != "pseudo") source = override_path;
  Lexicon lex = make_lexicon(ckpt.meta.vocabulary, source, ckpt.meta.config.model.decoder.embed_dim, seed);
  if (table_digest(lex.table()) != ckpt.meta.table_digest) {
    throw DataError("embedding table rebuilt from " + source + " differs from the one used in training");
  }
  return lex;
}

namespace {

struct Options {
  std::string config, checkpoint, corpus, format, embeddings, attention, inflation = "3,35", state_feed = "predicted";
  std::string dialogue, out, csv, itc = "O(1)", d1, d2;
  std::optional<std::uint64_t> seed;
  std::size_t repeats = 5;
  bool json = false, oracle = false;
  std::size_t domains = 2, slots = 3, values = 6, dialogues = 64;
};

int cmd_train(const Options& o, std::ostream& out) {
  RunConfig cfg;
  if (!o.config.empty()) cfg = RunConfig::load(o.config);
  if (!o.corpus.empty()) cfg.corpus = o.corpus;
  if (!o.format.empty()) cfg.format = o.format;
  if (!o.embeddings.empty()) cfg.embeddings = o.embeddings;
  if (!o.checkpoint.empty()) cfg.checkpoint = o.checkpoint;
  if (o.seed) cfg.train.seed = *o.seed;
  cfg.train.validate();
  if (cfg.metrics.empty()) cfg.metrics = cfg.checkpoint + ".metrics.json";

  const auto train_set = read_corpus(cfg.corpus, cfg.format);
  const auto valid_set = cfg.valid_corpus.empty() ? train_set : read_corpus(cfg.valid_corpus, cfg.format);
  Vocabulary vocab = collect_vocabulary(train_set);
  merge_into(vocab, collect_vocabulary(valid_set));
  const Lexicon lexicon = make_lexicon(vocab, cfg.embeddings, cfg.train.model.decoder.embed_dim, cfg.embedding_seed);

  CheckpointMeta meta;
  meta.config = cfg.train;
  meta.vocabulary = vocab;
  meta.embedding = embedding_descriptor(cfg.embeddings, cfg.embedding_seed);
  meta.table_digest = table_digest(lexicon.table());

  TrainHooks hooks;
  if (cfg.save_epochs) {
    hooks.on_epoch = [&](const EpochReport& r, const ComerModel& m) {
      CheckpointMeta em = meta;
      em.epoch = r.epoch;
      em.metric = r.valid.jg;
      save_checkpoint(cfg.checkpoint + ".epoch" + std::to_string(r.epoch), m, em);
      return true;
    };
  }
  TrainResult res = train(cfg.train, train_set, valid_set, lexicon, hooks);
  meta.epoch = res.best_epoch;
  meta.metric = res.best_metric;
  save_checkpoint(cfg.checkpoint, res.best, meta);

  ordered_json report;
  report["config"] = cfg.train.to_json();
  report["best_epoch"] = res.best_epoch;
  report["best_jg"] = res.best_metric;
  auto epochs = ordered_json::array();
  for (const auto& e : res.epochs) epochs.push_back(e.to_json());
  report["epochs"] = std::move(epochs);
  write_text(cfg.metrics, report.dump(1) + "\n");

  ordered_json summary;
  summary["checkpoint"] = cfg.checkpoint;
  summary["metrics"] = cfg.metrics;
  summary["epochs"] = res.epochs.size();
  summary["best_epoch"] = res.best_epoch;
  summary["best_jg"] = res.best_metric;
  if (o.json) out << summary.dump() << '\n';
  else out << "trained " << res.epochs.size() << " epochs; best jg " << res.best_metric << " at epoch "
           << res.best_epoch << "; wrote " << cfg.checkpoint << '\n';
  return kOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto corpus = read_corpus(o.corpus, o.format.empty() ? "canonical" : o.format);
  MetricsReport rep;
  if (o.oracle) {
    std::vector<BeliefState> golds;
    for (const auto& d : corpus)
      for (const auto& t : d.turns) golds.push_back(t.state);
    rep = metrics(golds, golds);
  } else {
    if (o.checkpoint.empty()) throw ConfigError("eval needs --checkpoint (or --oracle)");
    const LoadedCheckpoint ckpt = load_checkpoint(o.checkpoint);
    const Lexicon lexicon = checkpoint_lexicon(ckpt, o.embeddings);
    rep = evaluate(ckpt.model, lexicon, corpus, parse_state_feed(o.state_feed));
  }
  out << rep.to_json().dump() << '\n';
  return kOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw ConfigError("predict needs --checkpoint");
  if (o.dialogue.empty()) throw ConfigError("predict needs --dialogue");
  const LoadedCheckpoint ckpt = load_checkpoint(o.checkpoint);
  const Lexicon lexicon = checkpoint_lexicon(ckpt, o.embeddings);
  const auto dialogues = read_dialogues(o.dialogue);
  std::ofstream attention;
  if (!o.attention.empty()) {
    attention.open(o.attention);
    if (!attention) throw DataError("cannot write " + o.attention);
  }
  PredictOptions popt;
  popt.record_attention = !o.attention.empty();
  const StateFeed feed = parse_state_feed(o.state_feed);
  for (const auto& d : dialogues) {
    auto preds = track_dialogue(d, ckpt.model, lexicon, feed, popt);
    for (std::size_t t = 0; t < preds.size(); ++t) {
      ordered_json row;
      row["dialogue"] = d.id;
      row["turn"] = t;
      row["state"] = belief_to_json(preds[t].state);
      row["decode_calls"] = preds[t].decode_calls;
      out << row.dump() << '\n';
      for (const auto& rec : preds[t].attention) {
        ordered_json j;
        j["dialogue"] = d.id;
        j["turn"] = t;
        j.update(rec.to_json());
        attention << j.dump() << '\n';
      }
    }
  }
  return kOk;
}

int cmd_bench(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw ConfigError("bench needs --checkpoint");
  const LoadedCheckpoint ckpt = load_checkpoint(o.checkpoint);
  const Lexicon lexicon = checkpoint_lexicon(ckpt, o.embeddings);
  const auto corpus = read_corpus(o.corpus, o.format.empty() ? "canonical" : o.format);
  const auto levels = parse_list(o.inflation);
  BenchReport rep;
  try {
    rep = benchmark_inference(ckpt.model, lexicon, corpus, levels, o.repeats);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!o.csv.empty()) write_text(o.csv, rep.to_csv());
  if (o.json) out << rep.to_json().dump() << '\n';
  else out << rep.to_table();
  return kOk;
}

int cmd_gen(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("gen-synthetic needs --out");
  if (o.domains == 0 || o.slots == 0 || o.values == 0) throw ConfigError("ontology sizes must be positive");
  auto corpus = gen_synthetic({o.domains, o.slots, o.values}, o.dialogues, o.seed.value_or(0));
  save_canonical_corpus(corpus, o.out);
  out << "wrote " << corpus.size() << " dialogues to " << o.out << '\n';
  return kOk;
}

int cmd_stats(const Options& o, std::ostream& out) {
  const auto corpus = read_corpus(o.corpus, o.format.empty() ? "canonical" : o.format);
  const OntologyStats st = corpus_stats(corpus);
  const AccumulationReport acc = check_accumulation(corpus);
  ordered_json j;
  j["dialogues"] = st.dialogues;
  j["turns"] = st.turns;
  j["t"] = st.avg_turns;
  j["s"] = st.avg_tokens;
  j["n"] = st.slots;
  j["n_nested"] = st.slots_nested;
  j["n_combined"] = st.slots_combined;
  j["m"] = st.values;
  j["accumulation_violations"] = acc.violations;
  out << j.dump() << '\n';
  return kOk;
}

int cmd_itm(const Options& o, std::ostream& out) {
  if (o.d1.empty() || o.d2.empty()) throw ConfigError("itm needs --d1 and --d2 as t,s,n,m");
  const double k = itm(parse_stats(o.d1), parse_stats(o.d2), parse_itc(o.itc));
  ordered_json j;
  j["itc"] = to_string(parse_itc(o.itc));
  j["K"] = k;
  out << j.dump() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical dialogue state tracker"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "train a model and write the best checkpoint");
  train->add_option("--config", o.config, "flat JSON run configuration");
  train->add_option("--corpus", o.corpus);
  train->add_option("--format", o.format, "woz, multiwoz or canonical");
  train->add_option("--embeddings", o.embeddings, "embedding file or 'pseudo'");
  train->add_option("--checkpoint", o.checkpoint, "output checkpoint path");
  train->add_option("--seed", o.seed);
  train->add_flag("--json", o.json);

  auto* eval = app.add_subcommand("eval", "print jd/jds/jg for a corpus");
  eval->add_option("--checkpoint", o.checkpoint);
  eval->add_option("--corpus", o.corpus)->required();
  eval->add_option("--format", o.format);
  eval->add_option("--embeddings", o.embeddings);
  eval->add_option("--state-feed", o.state_feed, "gold or predicted");
  eval->add_flag("--oracle", o.oracle, "score the gold states against themselves");
  eval->add_flag("--json", o.json);

  auto* predict = app.add_subcommand("predict", "per-turn belief states as JSON lines");
  predict->add_option("--checkpoint", o.checkpoint)->required();
  predict->add_option("--dialogue", o.dialogue, "canonical dialogue or corpus JSON")->required();
  predict->add_option("--embeddings", o.embeddings);
  predict->add_option("--state-feed", o.state_feed);
  predict->add_option("--attention", o.attention, "write attention weights as JSON lines");
  predict->add_flag("--json", o.json);

  auto* bench = app.add_subcommand("bench", "latency under ontology inflation");
  bench->add_option("--checkpoint", o.checkpoint)->required();
  bench->add_option("--corpus", o.corpus)->required();
  bench->add_option("--format", o.format);
  bench->add_option("--embeddings", o.embeddings);
  bench->add_option("--inflation", o.inflation, "registered slot counts, e.g. 3,35");
  bench->add_option("--repeats", o.repeats);
  bench->add_option("--csv", o.csv, "per-turn latencies");
  bench->add_flag("--json", o.json);

  auto* gen = app.add_subcommand("gen-synthetic", "write a templated corpus");
  gen->add_option("--domains", o.domains);
  gen->add_option("--slots", o.slots, "slots per domain");
  gen->add_option("--values", o.values, "values per slot");
  gen->add_option("--dialogues", o.dialogues);
  gen->add_option("--seed", o.seed);
  gen->add_option("--out", o.out)->required();

  auto* stats = app.add_subcommand("stats", "corpus statistics t, s, n, m");
  stats->add_option("--corpus", o.corpus)->required();
  stats->add_option("--format", o.format);

  auto* itm_cmd = app.add_subcommand("itm", "inference time multiplier between two datasets");
  itm_cmd->add_option("--d1", o.d1, "t,s,n,m")->required();
  itm_cmd->add_option("--d2", o.d2, "t,s,n,m")->required();
  itm_cmd->add_option("--itc", o.itc, "O(1), O(n) or O(mn)");

  std::vector<std::string> argv_store{"comer"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (*train) return cmd_train(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*predict) return cmd_predict(o, out);
    if (*bench) return cmd_bench(o, out);
    if (*gen) return cmd_gen(o, out);
    if (*stats) return cmd_stats(o, out);
    if (*itm_cmd) return cmd_itm(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ChecksumError& e) {
    err << "checksum error: " << e.what() << '\n';
    return kChecksumError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace comer::cli
