"""Line-delimited JSON inputs and CSV outputs.

Item bank (one JSON object per line)::

    {"id": "risk-001", "kind": "propensity", "b_l": -1, "b_u": "+inf", "a": 1.0,
     "metadata": {"dataset": "risk", "propensity_name": "Risk Aversion",
                  "question_text": "..."}}
    {"id": "cap-7", "kind": "capability", "b": 0.5, "a": 1.0, "metadata": {}}

Outcomes::

    {"agent_id": "qwen", "item_id": "risk-001", "y": 1, "incitation_level": -2}

``incitation_level`` is optional and may be ``"unprompted"``.

Instances::

    {"id": "q1", "capability_demands": [18 numbers in 0..6],
     "propensity_windows": [[b_l, b_u] x 4], "y": 0}

Infinite bounds are written as the strings ``"-inf"`` and ``"+inf"``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import model
from .assessor import N_CAPABILITIES, PROPENSITY_DIMENSIONS, CVResult, InstanceFeatures
from .errors import DuplicateId, MalformedInstance, SchemaError
from .estimation import FitResult, OutcomeRecord, collapse_curve
from .model import CapabilityItem, Item, PropensityWindow
from .prompts import UNPROMPTED

DEMAND_CEILING = 6.0  # "5+" demand level


# --- reading --------------------------------------------------------------

def _records(path) -> Iterator[Tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(lineno, "json", str(exc)) from None
            if not isinstance(rec, dict):
                raise SchemaError(lineno, "json", "record is not an object")
            yield lineno, rec


def _require(rec: dict, key: str, lineno: int):
    if key not in rec:
        raise SchemaError(lineno, key, "missing")
    return rec[key]


def _number(value, lineno: int, name: str, allow_inf: bool = False) -> float:
    if isinstance(value, str) and allow_inf:
        if value == "-inf":
            return -math.inf
        if value == "+inf":
            return math.inf
        raise SchemaError(lineno, name, f"expected a number or '-inf'/'+inf', got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(lineno, name, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(lineno, name, "must be finite")
    return value


def encode_bound(x: float):
    if x == math.inf:
        return "+inf"
    if x == -math.inf:
        return "-inf"
    return x


@dataclass(frozen=True)
class ItemRecord:
    id: str
    item: Item
    metadata: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "capability" if isinstance(self.item, CapabilityItem) else "propensity"


class ItemBank(dict):
    """``id -> ItemRecord`` in file order."""

    def items_by_id(self) -> Dict[str, Item]:
        return {k: v.item for k, v in self.items()}


def _window(lower, upper, a, lineno: int) -> PropensityWindow:
    if math.isinf(lower) and math.isinf(upper):
        raise SchemaError(lineno, "bounds", "both bounds infinite")
    if lower > upper:
        raise SchemaError(lineno, "bounds", f"b_l={lower} exceeds b_u={upper}")
    if not (math.isinf(lower) or math.isinf(upper)) and (upper - lower) / 2 < model.R_MIN:
        raise SchemaError(lineno, "bounds", f"window narrower than radius {model.R_MIN}")
    if a <= 0:
        raise SchemaError(lineno, "a", "discrimination must be positive")
    return PropensityWindow(lower, upper, a)


def parse_item(rec: dict, lineno: int) -> ItemRecord:
    item_id = _require(rec, "id", lineno)
    if not isinstance(item_id, (str, int)) or isinstance(item_id, bool):
        raise SchemaError(lineno, "id", "must be a string or integer")
    kind = _require(rec, "kind", lineno)
    a = _number(rec.get("a", 1.0), lineno, "a")
    meta = rec.get("metadata", {})
    if not isinstance(meta, dict):
        raise SchemaError(lineno, "metadata", "must be an object")
    if kind == "capability":
        b = _number(_require(rec, "b", lineno), lineno, "b")
        if a <= 0:
            raise SchemaError(lineno, "a", "discrimination must be positive")
        item = CapabilityItem(b, a)
    elif kind == "propensity":
        lower = _number(_require(rec, "b_l", lineno), lineno, "b_l", allow_inf=True)
        upper = _number(_require(rec, "b_u", lineno), lineno, "b_u", allow_inf=True)
        item = _window(lower, upper, a, lineno)
    else:
        raise SchemaError(lineno, "kind", f"expected 'capability' or 'propensity', got {kind!r}")
    return ItemRecord(str(item_id), item, meta)


def load_item_bank(path) -> ItemBank:
    bank = ItemBank()
    seen: Dict[str, int] = {}
    for lineno, rec in _records(path):
        item = parse_item(rec, lineno)
        if item.id in seen:
            raise DuplicateId(lineno, "id", f"{item.id!r} already defined on line {seen[item.id]}")
        seen[item.id] = lineno
        bank[item.id] = item
    return bank


def item_to_record(rec: ItemRecord) -> dict:
    out = {"id": rec.id, "kind": rec.kind}
    if isinstance(rec.item, CapabilityItem):
        out["b"] = rec.item.b
    else:
        out["b_l"] = encode_bound(rec.item.lower)
        out["b_u"] = encode_bound(rec.item.upper)
    out["a"] = rec.item.a
    out["metadata"] = rec.metadata
    return out


def dumps_jsonl(records: Sequence[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records)


def write_item_bank(path, records: Sequence[ItemRecord]) -> None:
    atomic_write(path, dumps_jsonl([item_to_record(r) for r in records]))


@dataclass(frozen=True)
class OutcomeRow:
    agent_id: str
    item_id: str
    y: int
    incitation: Union[int, str, None] = None

    def record(self) -> OutcomeRecord:
        return OutcomeRecord(self.item_id, self.y)


def load_outcomes(path, bank: Optional[ItemBank] = None) -> List[OutcomeRow]:
    rows = []
    for lineno, rec in _records(path):
        agent = _require(rec, "agent_id", lineno)
        item_id = str(_require(rec, "item_id", lineno))
        y = _require(rec, "y", lineno)
        if isinstance(y, bool) or y not in (0, 1):
            raise SchemaError(lineno, "y", f"expected 0 or 1, got {y!r}")
        level = rec.get("incitation_level")
        if level is not None and level != UNPROMPTED:
            if isinstance(level, bool) or not isinstance(level, int) or not -3 <= level <= 3:
                raise SchemaError(lineno, "incitation_level",
                                  f"expected an integer in [-3, 3] or 'unprompted', got {level!r}")
        if bank is not None and item_id not in bank:
            raise SchemaError(lineno, "item_id", f"unknown item {item_id!r}")
        rows.append(OutcomeRow(str(agent), item_id, int(y), level))
    return rows


def outcome_to_record(row: OutcomeRow) -> dict:
    out = {"agent_id": row.agent_id, "item_id": row.item_id, "y": row.y}
    if row.incitation is not None:
        out["incitation_level"] = row.incitation
    return out


def write_outcomes(path, rows: Sequence[OutcomeRow]) -> None:
    atomic_write(path, dumps_jsonl([outcome_to_record(r) for r in rows]))


def load_instances(path) -> List[InstanceFeatures]:
    out = []
    seen = {}
    for lineno, rec in _records(path):
        inst_id = str(_require(rec, "id", lineno))
        if inst_id in seen:
            raise DuplicateId(lineno, "id", f"{inst_id!r} already defined on line {seen[inst_id]}")
        seen[inst_id] = lineno
        caps = _require(rec, "capability_demands", lineno)
        if not isinstance(caps, list) or len(caps) != N_CAPABILITIES:
            raise SchemaError(lineno, "capability_demands", f"expected a list of {N_CAPABILITIES} numbers")
        caps = [_number(c, lineno, "capability_demands") for c in caps]
        if any(c < 0 or c > DEMAND_CEILING for c in caps):
            raise SchemaError(lineno, "capability_demands", f"levels must lie in [0, {DEMAND_CEILING:g}]")
        wins = _require(rec, "propensity_windows", lineno)
        if not isinstance(wins, list) or len(wins) != len(PROPENSITY_DIMENSIONS):
            raise SchemaError(lineno, "propensity_windows",
                              f"expected {len(PROPENSITY_DIMENSIONS)} [b_l, b_u] pairs")
        windows = []
        for w in wins:
            if not isinstance(w, list) or len(w) != 2:
                raise SchemaError(lineno, "propensity_windows", "each window must be [b_l, b_u]")
            lo = _number(w[0], lineno, "propensity_windows", allow_inf=True)
            hi = _number(w[1], lineno, "propensity_windows", allow_inf=True)
            if lo > hi or (math.isinf(lo) and math.isinf(hi)):
                raise SchemaError(lineno, "propensity_windows", f"invalid bounds [{w[0]}, {w[1]}]")
            windows.append(PropensityWindow(lo, hi))
        y = _require(rec, "y", lineno)
        if isinstance(y, bool) or y not in (0, 1):
            raise SchemaError(lineno, "y", f"expected 0 or 1, got {y!r}")
        try:
            out.append(InstanceFeatures(tuple(caps), tuple(windows), int(y), id=inst_id))
        except MalformedInstance as exc:
            raise SchemaError(lineno, "instance", str(exc)) from None
    return out


def instance_to_record(inst: InstanceFeatures) -> dict:
    return {
        "id": inst.id,
        "capability_demands": list(inst.capability_demands),
        "propensity_windows": [[encode_bound(w.lower), encode_bound(w.upper)]
                               for w in inst.propensity_windows],
        "y": inst.y,
    }


def write_instances(path, instances: Sequence[InstanceFeatures]) -> None:
    atomic_write(path, dumps_jsonl([instance_to_record(i) for i in instances]))


# --- writing --------------------------------------------------------------

def atomic_write(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "NA"
        return repr(x)
    return str(x)


def to_csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


IRC_HEADER = ("theta", "p_unnorm", "p_naive_norm", "p_final")
SURFACE_HEADER = ("b_l", "b_u", "m", "width", "p")
COLLAPSE_HEADER = ("x", "p_emp", "n_cover")
COMPARISON_HEADER = ("feature_set", "n_features", "auroc_mean", "auroc_per_fold")


def irc_table(window: PropensityWindow, thetas) -> str:
    """Unnormalised, naively normalised and final curves for one window."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.size == 0:
        return to_csv(IRC_HEADER, [])
    unnorm = model.p_propensity_unnormalized(thetas, window, window.a, window.a)
    naive = model.p_propensity_naive(thetas, window)
    final = model.p_propensity(thetas, window)
    return to_csv(IRC_HEADER, zip(thetas, unnorm, naive, final))


def surface_table(theta: float, windows: Sequence[PropensityWindow]) -> str:
    """Agent characteristic surface at ``theta`` over the given windows."""
    rows = [(w.lower, w.upper, w.midpoint, w.upper - w.lower, model.p_propensity(theta, w))
            for w in windows]
    return to_csv(SURFACE_HEADER, rows)


def collapse_table(windows: Sequence[PropensityWindow], outcomes, xs) -> str:
    xs = np.asarray(xs, dtype=float)
    if len(windows) == 0 or xs.size == 0:
        return to_csv(COLLAPSE_HEADER, [])
    rate, n = collapse_curve(windows, outcomes, xs)
    return to_csv(COLLAPSE_HEADER, zip(xs, rate, (int(v) for v in n)))


def comparison_table(results: Dict[str, CVResult]) -> str:
    rows = [(name, r.n_features, r.auroc_mean, ";".join(repr(float(v)) for v in r.per_fold))
            for name, r in results.items()]
    return to_csv(COMPARISON_HEADER, rows)


def export_plot_data(kind: str, inputs: dict, path=None) -> str:
    """Render plot-ready CSV for ``kind`` in {irc, surface, collapse, comparison}.

    ``inputs`` holds the keyword arguments of the matching ``*_table`` function.
    The text is returned and, when ``path`` is given, written atomically.
    """
    makers = {
        "irc": irc_table,
        "surface": surface_table,
        "collapse": collapse_table,
        "comparison": comparison_table,
    }
    if kind not in makers:
        raise ValueError(f"unknown plot kind {kind!r}")
    text = makers[kind](**inputs)
    if path is not None:
        atomic_write(path, text)
    return text


FitKey = Tuple[str, str, Union[int, str, None]]
FIT_HEADER = ("agent", "dataset", "incitation", "theta_hat", "std_error", "n_items",
              "converged", "at_boundary", "log_likelihood")


def _incitation_order(level) -> Tuple[int, float]:
    if isinstance(level, int):
        return (0, level)
    if level == UNPROMPTED:
        return (1, 0)
    return (2, 0)


def fit_report(results: Sequence[Tuple[FitKey, FitResult]]) -> str:
    """One row per (agent, dataset, incitation), sorted by agent then incitation."""
    ordered = sorted(results, key=lambda kr: (kr[0][0], _incitation_order(kr[0][2]), kr[0][1]))
    rows = []
    for (agent, dataset, level), r in ordered:
        rows.append((agent, dataset, "NA" if level is None else level, r.theta_hat, r.std_error,
                     r.n_items, r.converged, r.at_boundary, r.log_likelihood))
    return to_csv(FIT_HEADER, rows)


def write_fit_report(path, results: Sequence[Tuple[FitKey, FitResult]]) -> None:
    atomic_write(path, fit_report(results))
