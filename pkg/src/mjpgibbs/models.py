"""JSON model files.

Three document types share one loader, selected by the ``"type"`` key::

    {"type": "mjp", "generator": [[-1, 2], [1, -2]], "pi0": [1, 0],
     "convention": "column"}

    {"type": "mmpp", "generator": ..., "pi0": ..., "emission_rates": [0.5, 4]}

    {"type": "ctbn",
     "nodes": [{"name": "a", "states": 2}, {"name": "b", "states": 2}],
     "edges": [["a", "b"]],
     "rates": {"a": {"": [[-1, 1], [1, -1]]},
               "b": {"0": [[-1, 3], [1, -3]], "1": [[-3, 1], [3, -1]]}},
     "initial": {"product": {"a": [0.5, 0.5], "b": [1, 0]}}}

Generators default to the column convention (columns sum to zero);
``"convention": "row"`` transposes every matrix in the document on load.  In
a CTBN, a node's parents are the sources of its incoming edges in the order
the edges are listed, and rate-table keys are comma-separated parent states
in that order (``""`` for a root).  ``"initial"`` may be omitted (uniform),
give ``"product"`` per-node vectors or a ``"joint"`` nested table.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .core import as_distribution, as_generator, uniform_distribution
from .ctbn import CtbnModel
from .errors import ModelError
from .mmpp import MmppModel


@dataclass(frozen=True)
class MjpModel:
    A: np.ndarray
    pi0: np.ndarray

    def __post_init__(self):
        A = as_generator(self.A)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "pi0", as_distribution(self.pi0, A.shape[0]))

    @property
    def n_states(self):
        return self.A.shape[0]


def _matrix(value, convention):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelError("rate matrices must be numeric 2-D arrays") from None
    if M.ndim != 2:
        raise ModelError("rate matrices must be 2-D")
    return M.T if convention == "row" else M


def _pi0(doc, n):
    if doc.get("pi0") is None:
        return uniform_distribution(n)
    return as_distribution(doc["pi0"], n)


def _parse_ctbn(doc, convention):
    try:
        nodes = doc["nodes"]
        names = [str(nd["name"]) for nd in nodes]
        cards = [int(nd["states"]) for nd in nodes]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed node list: {exc}") from None
    pos = {nm: i for i, nm in enumerate(names)}
    parents = [[] for _ in names]
    for edge in doc.get("edges", []):
        try:
            src, dst = pos[edge[0]], pos[edge[1]]
        except (KeyError, IndexError, TypeError):
            raise ModelError(f"bad edge {edge!r}") from None
        parents[dst].append(src)
    tables = []
    rates = doc.get("rates", {})
    for k, nm in enumerate(names):
        if nm not in rates:
            raise ModelError(f"no rate table for node {nm!r}")
        table = {}
        try:
            for key, mat in rates[nm].items():
                cfg = tuple(int(x) for x in key.split(",")) if key.strip() else ()
                table[cfg] = _matrix(mat, convention)
        except (AttributeError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed rate table for node {nm!r}: {exc}") from None
        tables.append(table)
    init = doc.get("initial")
    pi0 = None
    if init is not None:
        if "product" in init:
            pi0 = [init["product"][nm] for nm in names]
        elif "joint" in init:
            pi0 = np.array(init["joint"], dtype=float)
        else:
            raise ModelError("initial must give 'product' or 'joint'")
    return CtbnModel(cards, parents, tables, pi0=pi0, names=names)


def parse_model(doc):
    """Model object from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    kind = doc.get("type")
    convention = doc.get("convention", "column")
    if convention not in ("column", "row"):
        raise ModelError(f"unknown convention {convention!r}")
    try:
        if kind == "ctbn":
            return _parse_ctbn(doc, convention)
        if kind in ("mjp", "mmpp"):
            allowed = {"type", "convention", "generator", "pi0", "description"}
            unknown = set(doc) - allowed - ({"emission_rates"} if kind == "mmpp" else set())
            if unknown:
                raise ModelError(f"unknown key {sorted(unknown)[0]!r} in {kind} model")
            A = as_generator(_matrix(doc["generator"], convention))
            pi0 = _pi0(doc, A.shape[0])
            if kind == "mjp":
                return MjpModel(A, pi0)
            return MmppModel(A, pi0, doc["emission_rates"])
    except KeyError as exc:
        raise ModelError(f"model document misses key {exc}") from None
    raise ModelError(f"unknown model type {kind!r}")


def load_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read model file: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}") from None
    return parse_model(doc)


def example_model(name):
    """Shipped example: ``"drug_effect"`` or ``"chain5x5"``."""
    ref = resources.files("mjpgibbs") / "data" / f"{name}.json"
    if not ref.is_file():
        raise ModelError(f"no shipped example named {name!r}")
    return parse_model(json.loads(ref.read_text(encoding="utf-8")))


def ctbn_to_doc(model: CtbnModel) -> dict:
    """JSON-ready document for a CTBN model (column convention)."""
    doc = {"type": "ctbn",
           "nodes": [{"name": nm, "states": c} for nm, c in zip(model.names, model.cards)],
           "edges": [[model.names[p], model.names[k]]
                     for k in range(model.n_nodes) for p in model.parents[k]],
           "rates": {}}
    for k, nm in enumerate(model.names):
        dims = [model.cards[p] for p in model.parents[k]]
        table = {}
        for u in range(model.n_configs(k)):
            key = ",".join(str(int(x)) for x in np.unravel_index(u, dims)) if dims else ""
            table[key] = model.rates[k][u].tolist()
        doc["rates"][nm] = table
    if model.pi0_product is not None:
        doc["initial"] = {"product": {nm: list(map(float, p))
                                      for nm, p in zip(model.names, model.pi0_product)}}
    else:
        doc["initial"] = {"joint": model.pi0_joint_table.tolist()}
    return doc
