import json
import math
import pathlib

import pytest

import comer

FIXTURES = pathlib.Path(__file__).resolve().parents[2] / "tests" / "fixtures"


def test_tokenize():
    assert comer.tokenize("I'd like a Cheap place, at 20:45!") == ["i'd", "like", "a", "cheap", "place", "at", "20:45"]
    assert comer.tokenize("cheap > moderate") == ["cheap", ">", "moderate"]


def test_flatten_round_trip():
    state = {"train": {"arrive by": "20:45", "day": "wednesday"}}
    flat = comer.flatten_state(state)
    assert flat[0] == ("train", "domain")
    assert comer.parse_state(flat) == state


def test_strict_parse_rejects_garbage():
    with pytest.raises(comer.DataError):
        comer.parse_state([(";", "control")])
    assert comer.parse_state([(";", "control")], strict=False) == {}


def test_metric_fixture():
    doc = json.loads((FIXTURES / "metric_turns.json").read_text())
    report = comer.metrics([t["pred"] for t in doc["turns"]], [t["gold"] for t in doc["turns"]])
    for key, value in doc["expected"].items():
        assert math.isclose(report[key], value)
    assert report["turns"] == 10


def test_itm():
    woz = [7.45, 11.24, 3, 99]
    assert comer.itm(woz, woz, "O(mn)") == pytest.approx(1.0)
    with pytest.raises(comer.ConfigError):
        comer.itm(woz, woz, "O(n^2)")


def test_synthetic_stats():
    corpus = comer.gen_synthetic(domains=1, slots=2, values=3, dialogues=4, seed=5)
    assert corpus == comer.gen_synthetic(domains=1, slots=2, values=3, dialogues=4, seed=5)
    stats = comer.corpus_stats(corpus)
    assert stats["dialogues"] == 4
    assert stats["n"] <= 2


def test_embedding_file_round_trip(tmp_path):
    path = tmp_path / "emb.txt"
    vocab = [("word:cheap", [0.5, -0.25, 1.0]), ("word:north", [0.0, 1.0, 0.125])]
    units = [("slot:area", [0.0, 1.0, 0.125])]
    comer.save_embedding_file(path, 3, vocab, units)
    table = comer.load_embedding_file(path)
    assert list(table) == ["word:cheap", "word:north", "slot:area"]
    assert table["word:cheap"] == [0.5, -0.25, 1.0]
    header, first, *rest = path.read_text().splitlines()
    key, blob = first.split("\t")
    tampered = ("B" if blob[0] != "B" else "C") + blob[1:]
    path.write_text("\n".join([header, key + "\t" + tampered, *rest]) + "\n")
    with pytest.raises(comer.DataError):
        comer.load_embedding_file(path)


def test_cli_train_and_model(tmp_path):
    corpus = tmp_path / "corpus.json"
    code, _, err = comer.run_cli(["gen-synthetic", "--domains", "1", "--slots", "2", "--values", "3",
                                  "--dialogues", "4", "--seed", "3", "--out", str(corpus)])
    assert code == 0, err
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"d_m": 8, "d_e": 16, "epochs": 1, "batch_size": 4, "corpus": str(corpus)}))
    ckpt = tmp_path / "m.ckpt"
    code, _, err = comer.run_cli(["train", "--config", str(config), "--checkpoint", str(ckpt)])
    assert code == 0, err

    model = comer.Model(str(ckpt))
    assert model.config["d_m"] == 8
    assert model.parameter_count > 0
    first = model.predict("i want a cheap place")
    assert first == model.predict("i want a cheap place")
    assert set(first) == {"state", "decode_calls"}
    assert first["decode_calls"] >= 1

    report = model.evaluate(json.loads(corpus.read_text()))
    assert report["turns"] > 0
    assert 0.0 <= report["jg"] <= report["jds"] <= report["jd"] <= 1.0


def test_cli_errors(tmp_path):
    assert comer.run_cli(["frobnicate"])[0] == 2
    code, _, err = comer.run_cli(["stats", "--corpus", str(tmp_path / "missing.json")])
    assert code == 3
    assert "missing.json" in err
    with pytest.raises(comer.DataError):
        comer.Model(str(tmp_path / "missing.ckpt"))
