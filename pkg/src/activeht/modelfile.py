"""Model files: YAML documents holding the probability tables of a testing problem.

Example::

    format: activeht-model/1
    hypotheses: [h0, h1, h2]
    queries: [u1, u2]
    observations: ['0', '1']
    prior: [0.5, 0.25, 0.25]          # optional, defaults to uniform
    probs:
      u1:
        h0: [0.8, 0.2]
        h1: [0.2, 0.8]
        h2: [0.8, 0.2]
      u2: ...

Any function taking a model path also accepts a preset name (``setup1``,
``setup2``).
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import yaml

from .model import Belief, ModelError, ObservationModel

__all__ = [
    "FORMAT",
    "ModelFileError",
    "PRESETS",
    "preset",
    "parse_model",
    "load_model",
    "load_model_and_prior",
    "dump_model",
    "model_digest",
]

FORMAT = "activeht-model/1"
DELTA = 1e-7


class ModelFileError(ValueError):
    pass


def _setup1() -> ObservationModel:
    probs = np.array([
        [[0.8, 0.2], [0.8, 0.2]],
        [[0.2, 0.8], [0.8, 0.2]],
        [[0.8, 0.2], [0.2, 0.8]],
    ])
    return ObservationModel(probs, ("h0", "h1", "h2"), ("u1", "u2"), ("0", "1"))


def _setup2() -> ObservationModel:
    extra = np.array([
        [[0.8, 0.2], [0.8, 0.2]],
        [[1 - DELTA, DELTA], [0.8, 0.2]],
        [[0.8, 0.2], [1 - DELTA, DELTA]],
    ])
    probs = np.concatenate([_setup1().probs, extra], axis=1)
    return ObservationModel(probs, ("h0", "h1", "h2"), ("u1", "u2", "u3", "u4"), ("0", "1"))


PRESETS = {"setup1": _setup1, "setup2": _setup2}


def preset(name: str) -> ObservationModel:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ModelFileError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _fail(source, message, node=None):
    where = source
    if node is not None:
        where += f":{node.start_mark.line + 1}:{node.start_mark.column + 1}"
    raise ModelFileError(f"{where}: {message}")


def _mapping(node, source, what):
    if not isinstance(node, yaml.MappingNode):
        _fail(source, f"{what} must be a mapping", node)
    return {k.value: (k, v) for k, v in node.value}


def _str_list(node, source, what):
    if not isinstance(node, yaml.SequenceNode) or not all(isinstance(v, yaml.ScalarNode) for v in node.value):
        _fail(source, f"{what} must be a list of names", node)
    return [v.value for v in node.value]


def _float_list(node, source, what):
    if not isinstance(node, yaml.SequenceNode):
        _fail(source, f"{what} must be a list of numbers", node)
    out = []
    for v in node.value:
        try:
            out.append(float(v.value))
        except (TypeError, ValueError):
            _fail(source, f"{what}: {v.value!r} is not a number", v)
    return out


def parse_model(text: str, source: str = "<string>") -> Tuple[ObservationModel, Optional[Belief]]:
    """Parse model-file text; errors carry ``source:line:column``."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ModelFileError(f"{source}:{mark.line + 1}:{mark.column + 1}: {exc.problem}") from None
    if root is None:
        _fail(source, "empty model file")
    top = _mapping(root, source, "document")
    for key in ("hypotheses", "queries", "observations", "probs"):
        if key not in top:
            _fail(source, f"missing required key {key!r}", root)
    if "format" in top and top["format"][1].value != FORMAT:
        _fail(source, f"unsupported format {top['format'][1].value!r} (expected {FORMAT!r})", top["format"][1])
    hyps = _str_list(top["hypotheses"][1], source, "hypotheses")
    queries = _str_list(top["queries"][1], source, "queries")
    obs = _str_list(top["observations"][1], source, "observations")
    probs_node = top["probs"][1]
    table = _mapping(probs_node, source, "probs")
    probs = np.empty((len(hyps), len(queries), len(obs)))
    for u, qname in enumerate(queries):
        if qname not in table:
            _fail(source, f"probs has no entry for query {qname!r}", probs_node)
        rows = _mapping(table[qname][1], source, f"probs.{qname}")
        for h, hname in enumerate(hyps):
            if hname not in rows:
                _fail(source, f"probs.{qname} has no row for hypothesis {hname!r}", table[qname][1])
            node = rows[hname][1]
            row = _float_list(node, source, f"probs.{qname}.{hname}")
            if len(row) != len(obs):
                _fail(source, f"row (h={hname}, u={qname}) has {len(row)} entries, expected {len(obs)}", node)
            if abs(sum(row) - 1.0) > 1e-9 or min(row) < 0 or max(row) > 1:
                _fail(source, f"row (h={hname}, u={qname}) is not a probability distribution: {row}", node)
            probs[h, u] = row
        extra = set(rows) - set(hyps)
        if extra:
            _fail(source, f"probs.{qname} names unknown hypotheses {sorted(extra)}", table[qname][1])
    extra = set(table) - set(queries)
    if extra:
        _fail(source, f"probs names unknown queries {sorted(extra)}", probs_node)
    try:
        model = ObservationModel(probs, hyps, queries, obs)
    except ModelError as exc:
        _fail(source, str(exc), root)
    prior = None
    if "prior" in top:
        node = top["prior"][1]
        values = _float_list(node, source, "prior")
        if len(values) != len(hyps):
            _fail(source, f"prior has {len(values)} entries, expected {len(hyps)}", node)
        try:
            prior = Belief(values)
        except ModelError as exc:
            _fail(source, str(exc), node)
    return model, prior


def load_model_and_prior(path_or_preset) -> Tuple[ObservationModel, Optional[Belief]]:
    name = str(path_or_preset)
    if name in PRESETS and not Path(name).exists():
        return preset(name), None
    path = Path(name)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelFileError(f"{path}: cannot read model file ({exc.strerror})") from None
    return parse_model(text, str(path))


def load_model(path_or_preset) -> ObservationModel:
    return load_model_and_prior(path_or_preset)[0]


def dump_model(model: ObservationModel, prior: Optional[Belief] = None) -> str:
    """Model-file text that parses back to an identical model."""
    lines = [
        f"format: {FORMAT}",
        "hypotheses: " + _flow(model.hypothesis_labels),
        "queries: " + _flow(model.query_labels),
        "observations: " + _flow(model.observation_labels),
    ]
    if prior is not None:
        lines.append("prior: [" + ", ".join(repr(float(v)) for v in prior.rho) + "]")
    lines.append("probs:")
    for u, qname in enumerate(model.query_labels):
        lines.append(f"  {_quote(qname)}:")
        for h, hname in enumerate(model.hypothesis_labels):
            row = ", ".join(repr(float(v)) for v in model.probs[h, u])
            lines.append(f"    {_quote(hname)}: [{row}]")
    return "\n".join(lines) + "\n"


def _quote(s):
    return "'" + s.replace("'", "''") + "'"


def _flow(names):
    return "[" + ", ".join(_quote(s) for s in names) + "]"


def model_digest(path_or_preset) -> str:
    """sha256 of the model file bytes, or of the canonical dump for a preset."""
    name = str(path_or_preset)
    if name in PRESETS and not Path(name).exists():
        data = dump_model(preset(name)).encode()
    else:
        data = Path(name).read_bytes()
    return hashlib.sha256(data).hexdigest()
