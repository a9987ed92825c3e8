"""Run configuration: one JSON (or TOML) document describing design and data.

Example (JSON)::

    {
      "alpha": 0.025,
      "method": "wpgsd",
      "hypotheses": ["H1", "H2", "H3"],
      "weighting": {
        "initial_weights": [0.3, 0.3, 0.4],
        "transition": [[0, 0.4286, 0.5714], [0.4286, 0, 0.5714], [0.5, 0.5, 0]],
        "subset_weights": [{"subset": ["H1", "H2"], "weights": [0.5, 0.5]}]
      },
      "spending": {"family": "hsd", "gamma": -4},
      "events": {
        "counts": [[100, 200], [110, 220], [225, 450]],
        "overlaps": [{"pair": ["H1", "H2"], "counts": [80, 160]}]
      },
      "observed": [{"analysis": 1, "p": [0.015, 0.01, 0.01]}],
      "mvn": {"tol": 1e-7, "seed": 20231101, "max_dim": 20},
      "simulation": {"reps": 100000, "seed": 1, "effects": [[0, 0], [0, 0], [0, 0]]}
    }

``correlation: {"matrix": [...], "information_fractions": [...]}`` replaces
``events``.  ``subset_weights``, when given, must cover every subset.
Subsets and pairs name hypotheses by label.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .correlation import CorrelationModel, EventTable
from .gaussian import MVNSettings
from .graph import HypothesisSet, WeightingStrategy
from .inference import Design, ObservedStatistics
from .spending import make_spending

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FORMATS = ("table", "csv", "json")
TOP_KEYS = {
    "alpha", "method", "hypotheses", "weighting", "spending", "events",
    "correlation", "observed", "mvn", "simulation", "output",
}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class RunConfig:
    alpha: float
    method: str
    design: Design
    observed: ObservedStatistics | None
    simulation: dict
    output_format: str
    digest: str


def _get(doc: dict, key: str, path: str, default=...):
    if key in doc:
        return doc[key]
    if default is ...:
        raise ConfigError(f"{path}.{key}" if path else key, "is required")
    return default


def _matrix(value, path: str, shape=None) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "must be a numeric array") from None
    if shape is not None and arr.shape != shape:
        raise ConfigError(path, f"must have shape {shape}, got {arr.shape}")
    return arr


def _wrap(path: str, fn, *args, **kwargs):
    """Call ``fn`` and re-raise validation errors under ``path``."""
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def _label_index(labels, name, path: str) -> int:
    if name not in labels:
        raise ConfigError(path, f"unknown hypothesis {name!r}")
    return labels.index(name)


def read_document(path: str | Path) -> tuple[dict, bytes]:
    """Parse a JSON or TOML file; returns the document and its raw bytes."""
    raw = Path(path).read_bytes()
    try:
        if str(path).endswith(".toml"):
            doc = tomllib.loads(raw.decode("utf-8"))
        else:
            doc = json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError("", f"cannot parse {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("", "configuration must be a mapping at the top level")
    return doc, raw


def parse_config(doc: dict, raw: bytes = b"") -> RunConfig:
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")

    alpha = _get(doc, "alpha", "", 0.025)
    if not isinstance(alpha, (int, float)) or not 0 < alpha < 1:
        raise ConfigError("alpha", f"must lie in (0, 1), got {alpha!r}")
    method = _get(doc, "method", "", "wpgsd")
    if method not in ("bonferroni", "wpgsd"):
        raise ConfigError("method", f"must be 'bonferroni' or 'wpgsd', got {method!r}")

    hyps = _wrap("hypotheses", HypothesisSet, tuple(_get(doc, "hypotheses", "")))
    labels, m = hyps.labels, hyps.m

    wt = _get(doc, "weighting", "")
    w0 = _matrix(_get(wt, "initial_weights", "weighting"), "weighting.initial_weights", (m,))
    g = _matrix(_get(wt, "transition", "weighting"), "weighting.transition", (m, m))
    explicit = None
    if "subset_weights" in wt:
        explicit = {}
        for i, row in enumerate(wt["subset_weights"]):
            p = f"weighting.subset_weights[{i}]"
            members = _get(row, "subset", p)
            idx = [_label_index(labels, x, f"{p}.subset") for x in members]
            order = np.argsort(idx)
            vals = _matrix(_get(row, "weights", p), f"{p}.weights", (len(idx),))
            explicit[tuple(sorted(idx))] = vals[order]
    strategy = WeightingStrategy(w0, g, explicit)

    sp = _get(doc, "spending", "")
    params = {k: v for k, v in sp.items() if k != "family"}
    spending = _wrap("spending", make_spending, _get(sp, "family", "spending"), **params)

    has_events, has_corr = "events" in doc, "correlation" in doc
    if has_events == has_corr:
        raise ConfigError("events", "give exactly one of 'events' or 'correlation'")
    if has_events:
        ev = doc["events"]
        counts = _matrix(_get(ev, "counts", "events"), "events.counts")
        if counts.ndim != 2 or counts.shape[0] != m:
            raise ConfigError("events.counts", f"must be an {m} x K table")
        pairs = {}
        for i, row in enumerate(_get(ev, "overlaps", "events", [])):
            p = f"events.overlaps[{i}]"
            pair = _get(row, "pair", p)
            if len(pair) != 2:
                raise ConfigError(f"{p}.pair", "must name two hypotheses")
            key = tuple(_label_index(labels, x, f"{p}.pair") for x in pair)
            pairs[key] = _get(row, "counts", p)
        table = _wrap("events", EventTable.from_pairwise, counts, pairs)
        ccs = _wrap("events", CorrelationModel.from_events, table)
    else:
        cc = doc["correlation"]
        mat = _matrix(_get(cc, "matrix", "correlation"), "correlation.matrix")
        if mat.ndim != 2 or mat.shape[0] % m or mat.shape[0] != mat.shape[1]:
            raise ConfigError("correlation.matrix", f"must be square with a multiple of {m} rows")
        K = mat.shape[0] // m
        frac = cc.get("information_fractions")
        frac = None if frac is None else _matrix(frac, "correlation.information_fractions", (m, K))
        ccs = _wrap("correlation", CorrelationModel.from_matrix, mat, m, K, frac)
    K = ccs.K

    mv = _get(doc, "mvn", "", {})
    mvn = _wrap("mvn", MVNSettings, **mv)
    design = _wrap("weighting", Design, hyps, strategy, spending, ccs, mvn)

    observed = None
    if doc.get("observed"):
        z = np.full((m, K), np.nan)
        for i, entry in enumerate(doc["observed"]):
            p = f"observed[{i}]"
            k = _get(entry, "analysis", p)
            if not isinstance(k, int) or not 1 <= k <= K:
                raise ConfigError(f"{p}.analysis", f"must be an integer in 1..{K}")
            if not np.all(np.isnan(z[:, k - 1])):
                raise ConfigError(f"{p}.analysis", f"analysis {k} listed twice")
            if ("p" in entry) == ("z" in entry):
                raise ConfigError(p, "give exactly one of 'p' or 'z'")
            key = "p" if "p" in entry else "z"
            vals = [np.nan if v is None else v for v in entry[key]]
            vec = _matrix(vals, f"{p}.{key}", (m,))
            if key == "p":
                vec = _wrap(f"{p}.p", ObservedStatistics.from_p, vec[:, None]).z[:, 0]
            z[:, k - 1] = vec
        observed = _wrap("observed", ObservedStatistics, z)

    sim = dict(_get(doc, "simulation", "", {}))
    if "effects" in sim:
        sim["effects"] = _matrix(sim["effects"], "simulation.effects", (m, K))
    fmt = _get(doc, "output", "", {}).get("format", "table")
    if fmt not in FORMATS:
        raise ConfigError("output.format", f"must be one of {FORMATS}")
    return RunConfig(alpha, method, design, observed, sim, fmt, hashlib.sha256(raw).hexdigest())


def load_config(path: str | Path) -> RunConfig:
    doc, raw = read_document(path)
    return parse_config(doc, raw)
