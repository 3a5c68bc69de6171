"""Structured configs, graph text files, and result records.

Configs are YAML (key-value with nested tables).  Weight tables travel as
flat arrays in row-major (lexicographic) spin order.  Numeric results emit
as JSON records carrying an input digest and seed, and as CSV rows under a
versioned schema header for sweep experiments.
"""

from __future__ import annotations

import hashlib
import json
from typing import Mapping, Sequence

import numpy as np
import yaml

from .errors import ConfigError
from .graphmodel import DegreeSpec, WeightFamily
from .models import ModelSpec, build_model

CSV_SCHEMA = "# factor-cavity schema v1"


# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def degree_spec_from_config(node) -> DegreeSpec:
    """Accepts an int (constant), {deg: mass} mapping, or explicit tables.

    Explicit forms: {constant: v}, {support: [...], mass: [...]},
    {poisson: {mean: m, max_support: s}}.
    """
    if isinstance(node, DegreeSpec):
        return node
    if isinstance(node, (int, np.integer)):
        return DegreeSpec.constant(int(node))
    if not isinstance(node, Mapping):
        raise ConfigError(f"cannot read a degree spec from {node!r}")
    if "constant" in node:
        return DegreeSpec.constant(int(node["constant"]))
    if "poisson" in node:
        sub = node["poisson"]
        kwargs = {}
        if "max_support" in sub:
            kwargs["max_support"] = int(sub["max_support"])
        return DegreeSpec.poisson(float(sub["mean"]), **kwargs)
    if "support" in node:
        return DegreeSpec(tuple(node["support"]), tuple(node["mass"]))
    # plain {degree: mass} mapping
    try:
        return DegreeSpec.from_mapping({int(k): float(v) for k, v in node.items()})
    except (TypeError, ValueError) as err:
        raise ConfigError(f"cannot read a degree spec from {node!r}") from err


def degree_spec_to_config(spec: DegreeSpec) -> dict:
    return {"support": list(spec.support), "mass": list(spec.mass)}


def weight_family_from_config(node: Mapping) -> WeightFamily:
    """{q: int, arities: {k: {tables: [flat...], masses: [...], labels: [...]}}}"""
    try:
        q = int(node["q"])
        tables = {}
        masses = {}
        labels = {}
        for k, sub in node["arities"].items():
            k = int(k)
            tables[k] = tuple(np.asarray(t, dtype=float).reshape((q,) * k)
                              for t in sub["tables"])
            masses[k] = np.asarray(sub["masses"], dtype=float)
            if "labels" in sub:
                labels[k] = tuple(sub["labels"])
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"malformed weight family config: {err}") from err
    return WeightFamily(q=q, tables=tables, masses=masses,
                        labels=labels or None)


def weight_family_to_config(family: WeightFamily) -> dict:
    arities = {}
    for k in family.arities:
        arities[int(k)] = {
            "tables": [t.ravel().tolist() for t in family.tables[k]],
            "masses": family.masses[k].tolist(),
        }
        if family.labels and k in family.labels:
            arities[int(k)]["labels"] = list(family.labels[k])
    return {"q": family.q, "arities": arities}


def model_from_config(node: Mapping) -> ModelSpec:
    """Build a registered model from {name: ..., <param flags>}."""
    if not isinstance(node, Mapping) or "name" not in node:
        raise ConfigError("model config needs a 'name'")
    params = dict(node)
    name = params.pop("name")
    for key in ("dspec", "kspec"):
        if key in params:
            params[key] = degree_spec_from_config(params[key])
    try:
        return build_model(name, **params)
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"cannot build model '{name}': {err}") from err


def model_to_config(model: ModelSpec) -> dict:
    out = {"name": model.name}
    for key, val in model.params.items():
        out[key] = val
    if model.name == "ldgm":
        out["dspec"] = degree_spec_to_config(model.dspec)
        out["kspec"] = degree_spec_to_config(model.kspec)
    if model.name == "kspin":
        out["kspec"] = degree_spec_to_config(model.kspec)
    return out


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


def canonical(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    return obj


def inputs_digest(inputs) -> str:
    payload = json.dumps(canonical(inputs), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def result_record(operation: str, inputs, seed, value, stderr=None,
                  runtime=None, **extra) -> dict:
    rec = {
        "operation": operation,
        "inputs_digest": inputs_digest(inputs),
        "seed": seed,
        "value": value,
        "stderr": stderr,
        "runtime_s": runtime,
    }
    rec.update(extra)
    return canonical(rec)


def format_float(x) -> str:
    """Shortest round-trip decimal form; identical bits give identical text."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_body(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Deterministic CSV text under the versioned schema header."""
    lines = [CSV_SCHEMA, ",".join(columns)]
    for row in rows:
        lines.append(",".join(format_float(v) for v in row))
    return "\n".join(lines) + "\n"


def write_text(path, text: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(canonical(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
