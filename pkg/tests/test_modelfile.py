import numpy as np
import pytest

from activeht.model import Belief
from activeht.modelfile import (
    ModelFileError,
    dump_model,
    load_model,
    load_model_and_prior,
    model_digest,
    parse_model,
    preset,
)


def test_setup1_rows():
    m = preset("setup1")
    assert (m.num_hypotheses, m.num_queries) == (3, 2)
    assert m.probs[0].tolist() == [[0.8, 0.2], [0.8, 0.2]]
    assert m.probs[1].tolist() == [[0.2, 0.8], [0.8, 0.2]]
    assert m.probs[2].tolist() == [[0.8, 0.2], [0.2, 0.8]]


def test_setup2_extra_queries():
    m = preset("setup2")
    assert m.num_queries == 4
    assert m.probs[1, 2].tolist() == [1 - 1e-7, 1e-7]
    assert m.probs[2, 3].tolist() == [1 - 1e-7, 1e-7]
    assert m.probs[0, 2].tolist() == [0.8, 0.2]
    assert np.array_equal(m.probs[:, :2], preset("setup1").probs)


@pytest.mark.parametrize("name", ["setup1", "setup2"])
def test_preset_round_trip(tmp_path, name):
    path = tmp_path / f"{name}.yaml"
    path.write_text(dump_model(preset(name)))
    assert load_model(path) == preset(name)
    assert load_model(name) == preset(name)


def test_prior_round_trip():
    prior = Belief([0.5, 0.25, 0.25])
    model, back = parse_model(dump_model(preset("setup1"), prior))
    assert np.array_equal(back.rho, prior.rho)


def test_row_sum_error_names_cell():
    text = dump_model(preset("setup1")).replace("'h1': [0.2, 0.8]", "'h1': [0.2, 0.7]", 1)
    with pytest.raises(ModelFileError, match=r"m\.yaml:8:\d+: row \(h=h1, u=u1\)"):
        parse_model(text, "m.yaml")


def test_parse_error_has_line_and_column():
    with pytest.raises(ModelFileError, match=r"bad\.yaml:3:\d+:"):
        parse_model("hypotheses: [a, b]\nqueries: [u]\nprobs: {u: [1, 0}\n", "bad.yaml")


@pytest.mark.parametrize(
    "text, message",
    [
        ("hypotheses: [a, b]\n", "missing required key"),
        ("format: other/2\nhypotheses: [a, b]\nqueries: [u]\nobservations: [x, y]\nprobs: {}\n", "unsupported format"),
        ("hypotheses: [a, b]\nqueries: [u]\nobservations: [x, y]\nprobs: {u: {a: [1, 0]}}\n", "no row for hypothesis 'b'"),
        ("hypotheses: [a, b]\nqueries: [u]\nobservations: [x, y]\nprobs: {u: {a: [1, 0], b: [0.5]}}\n", "has 1 entries"),
        ("hypotheses: [a, b]\nqueries: [u]\nobservations: [x, y]\nprobs: {u: {a: [1, 0], b: [q, 1]}}\n", "not a number"),
        ("hypotheses: [a, b]\nqueries: [u]\nobservations: [x, y]\nprior: [0.5]\nprobs: {u: {a: [1, 0], b: [0, 1]}}\n",
         "prior has 1 entries"),
        ("hypotheses: [a, a]\nqueries: [u]\nobservations: [x, y]\nprobs: {u: {a: [1, 0]}}\n", "unique"),
        ("hypotheses: [a, b]\nqueries: [u]\nobservations: [x, y]\nprobs: {u: {a: [1, 0], b: [0, 1]}, v: {}}\n",
         "unknown queries"),
    ],
)
def test_structural_errors(text, message):
    with pytest.raises(ModelFileError, match=message):
        parse_model(text)


def test_missing_file(tmp_path):
    with pytest.raises(ModelFileError, match="cannot read"):
        load_model(tmp_path / "nope.yaml")
    with pytest.raises(ModelFileError, match="unknown preset"):
        preset("setup9")


def test_file_prior_is_loaded(tmp_path):
    path = tmp_path / "m.yaml"
    path.write_text(dump_model(preset("setup1"), Belief([0.6, 0.2, 0.2])))
    model, prior = load_model_and_prior(path)
    assert prior.rho == pytest.approx([0.6, 0.2, 0.2])


def test_digest(tmp_path):
    path = tmp_path / "m.yaml"
    path.write_text(dump_model(preset("setup1")))
    assert model_digest(path) == model_digest("setup1")
    assert model_digest("setup1") != model_digest("setup2")
