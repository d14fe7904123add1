"""Versioned JSON documents for fitted models and calibrators.

Every document has the shape ``{"format": "solarprob", "version": 1,
"kind": <name>, "body": {...}}``. Floats are written with Python's
shortest round-trip repr, so ``loads(dumps(obj))`` reproduces every
parameter bit for bit and re-serialising gives identical bytes.
"""
from __future__ import annotations

import json

from solarprob.baselines import ChpModel, McmModel
from solarprob.calibrate import CrudeCalibrator, KuleshovCalibrator, MleCalibrator
from solarprob.errors import SerializationError
from solarprob.ngboost import NGBoostModel

FORMAT = "solarprob"
VERSION = 1

_KINDS = {
    "ngboost": NGBoostModel,
    "chp": ChpModel,
    "mcm": McmModel,
    "crude": CrudeCalibrator,
    "kuleshov": KuleshovCalibrator,
    "mle": MleCalibrator,
}


def _kind_of(obj) -> str:
    for kind, cls in _KINDS.items():
        if type(obj) is cls:
            return kind
    raise SerializationError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    doc = {"format": FORMAT, "version": VERSION, "kind": _kind_of(obj), "body": obj.to_dict()}
    try:
        return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    except ValueError as exc:
        raise SerializationError(str(exc)) from None


def loads(text: str | bytes):
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise SerializationError("not a solarprob document")
    if doc.get("version") != VERSION:
        raise SerializationError(f"unsupported document version {doc.get('version')!r}")
    try:
        cls = _KINDS[doc["kind"]]
    except KeyError:
        raise SerializationError(f"unknown document kind {doc.get('kind')!r}") from None
    return cls.from_dict(doc["body"])
