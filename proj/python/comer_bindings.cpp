#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "comer/cli.hpp"
#include "comer/errors.hpp"
#include "comer/evalbench.hpp"
#include "comer/lstm.hpp"

namespace py = pybind11;
using namespace comer;

namespace {

// JSON crosses the boundary as text; the Python side parses it with json.
py::object from_json(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

BeliefState state_arg(const py::object& o) { return belief_from_json(to_json(o)); }

std::vector<Dialogue> corpus_arg(const py::object& o) {
  return parse_corpus(to_json(o), CorpusFormat::kCanonical, "corpus");
}

const char* kind_name(TokenKind k) {
  switch (k) {
    case TokenKind::kWord: return "word";
    case TokenKind::kDomain: return "domain";
    case TokenKind::kSlot: return "slot";
    case TokenKind::kControl: return "control";
  }
  return "?";
}

TokenKind kind_arg(const std::string& s) {
  if (s == "word") return TokenKind::kWord;
  if (s == "domain") return TokenKind::kDomain;
  if (s == "slot") return TokenKind::kSlot;
  if (s == "control") return TokenKind::kControl;
  throw ConfigError("unknown token kind \"" + s + "\"");
}

OntologyStats stats_arg(const std::vector<double>& v) {
  if (v.size() != 4) throw ConfigError("expected (t, s, n, m)");
  return ontology_stats(v[0], v[1], static_cast<std::size_t>(v[2]), static_cast<std::size_t>(v[3]));
}

// A checkpoint with its rebuilt embedding table.
class Model {
 public:
  explicit Model(const std::string& path, const std::string& embeddings)
      : ckpt_(load_checkpoint(path)), lexicon_(cli::checkpoint_lexicon(ckpt_, embeddings)) {}

  py::object predict(const std::string& user, const std::string& system, const py::object& previous) const {
    TurnInput in{tokenize(user), tokenize(system), previous.is_none() ? BeliefState{} : state_arg(previous)};
    TurnPrediction p;
    {
      py::gil_scoped_release release;
      p = predict_turn(in, ckpt_.model, lexicon_);
    }
    nlohmann::ordered_json j;
    j["state"] = belief_to_json(p.state);
    j["decode_calls"] = p.decode_calls;
    return from_json(j);
  }

  py::object evaluate(const py::object& corpus, const std::string& feed) const {
    auto dialogues = corpus_arg(corpus);
    return from_json(comer::evaluate(ckpt_.model, lexicon_, dialogues, parse_state_feed(feed)).to_json());
  }

  py::object config() const { return from_json(ckpt_.meta.config.to_json()); }
  std::size_t parameter_count() const { return count_values(ckpt_.model.params()); }
  std::size_t table_size() const { return lexicon_.size(); }

 private:
  LoadedCheckpoint ckpt_;
  Lexicon lexicon_;
};

}  // namespace

PYBIND11_MODULE(_comer, m) {
  m.doc() = "Hierarchical dialogue state tracker";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  auto data = py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<ChecksumError>(m, "ChecksumError", data.ptr());
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("tokenize", [](const std::string& s) { return tokenize(s); }, py::arg("text"));

  m.def(
      "flatten_state",
      [](const py::object& state) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& t : flatten(state_arg(state))) out.emplace_back(t.surface, kind_name(t.kind));
        return out;
      },
      py::arg("state"), "Flat [surface, kind] tokens of a {domain: {slot: value}} state.");

  m.def(
      "parse_state",
      [](const std::vector<std::pair<std::string, std::string>>& flat, bool strict) {
        FlatState f;
        for (const auto& [s, k] : flat) f.push_back({s, kind_arg(k)});
        return from_json(belief_to_json(parse_flat(f, strict ? ParseMode::kStrict : ParseMode::kLenient)));
      },
      py::arg("flat"), py::arg("strict") = true);

  m.def(
      "metrics",
      [](const std::vector<py::object>& preds, const std::vector<py::object>& golds) {
        std::vector<BeliefState> p, g;
        for (const auto& o : preds) p.push_back(state_arg(o));
        for (const auto& o : golds) g.push_back(state_arg(o));
        return from_json(comer::metrics(p, g).to_json());
      },
      py::arg("preds"), py::arg("golds"));

  m.def(
      "itm",
      [](const std::vector<double>& d1, const std::vector<double>& d2, const std::string& itc) {
        return comer::itm(stats_arg(d1), stats_arg(d2), parse_itc(itc));
      },
      py::arg("d1"), py::arg("d2"), py::arg("itc") = "O(1)");

  m.def(
      "gen_synthetic",
      [](std::size_t domains, std::size_t slots, std::size_t values, std::size_t dialogues, std::uint64_t seed) {
        return from_json(corpus_to_json(gen_synthetic({domains, slots, values}, dialogues, seed)));
      },
      py::arg("domains") = 2, py::arg("slots") = 3, py::arg("values") = 6, py::arg("dialogues") = 64,
      py::arg("seed") = 0);

  m.def(
      "corpus_stats",
      [](const py::object& corpus) {
        auto st = comer::corpus_stats(corpus_arg(corpus));
        nlohmann::ordered_json j;
        j["t"] = st.avg_turns;
        j["s"] = st.avg_tokens;
        j["n"] = st.slots;
        j["m"] = st.values;
        j["n_nested"] = st.slots_nested;
        j["dialogues"] = st.dialogues;
        j["turns"] = st.turns;
        return from_json(j);
      },
      py::arg("corpus"));

  m.def(
      "save_embedding_file",
      [](const std::filesystem::path& path, std::size_t dim,
         const std::vector<std::pair<std::string, std::vector<double>>>& vocab,
         const std::vector<std::pair<std::string, std::vector<double>>>& units) {
        EmbeddingTable t(dim);
        for (const auto& [k, v] : vocab) t.add(k, std::span<const double>(v), Section::kVocab);
        for (const auto& [k, v] : units) t.add(k, std::span<const double>(v), Section::kUnit);
        save_embedding_file(t, path);
      },
      py::arg("path"), py::arg("dim"), py::arg("vocab"), py::arg("units") = std::vector<std::pair<std::string, std::vector<double>>>{},
      "Writes a static table; keys are kind-qualified (\"word:cheap\", \"slot:price range\").");

  m.def(
      "load_embedding_file",
      [](const std::filesystem::path& path) {
        EmbeddingTable t = load_embedding_file(path);
        py::dict out;
        for (std::size_t i = 0; i < t.size(); ++i) out[py::str(t.key(i))] = t.vector_f64(i);
        return out;
      },
      py::arg("path"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line in-process; returns (exit code, stdout, stderr).");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&, const std::string&>(), py::arg("checkpoint"), py::arg("embeddings") = "")
      .def("predict", &Model::predict, py::arg("user"), py::arg("system") = "", py::arg("previous") = py::none())
      .def("evaluate", &Model::evaluate, py::arg("corpus"), py::arg("state_feed") = "predicted")
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("table_size", &Model::table_size);
}
