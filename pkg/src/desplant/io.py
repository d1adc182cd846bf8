"""JSON file formats and DOT export.

System file::

    {"format_version": 1,
     "plant": {"builtin": "double_integrator"} | {"linear": {"A": [[..]], "B": [[..]]}},
     "controls": [{"symbol": "r1", "value": [-1]}, ...],
     "partition": [{"id": 1, "normal": [1, 0], "offset": 0}, {"id": 2, "builtin": "unit_circle"}],
     "sampling_box": [[-5, 5], [-5, 5]],
     "cells": [{"symbol": "p1", "signs": [1, 1]}, ...],          (optional)
     "config": {"dt": .., "horizon": .., "samples": .., "eps_t": .., "eps_h": .., "seed": ..}}

Validation errors name the offending entry and, where it can be found, the
line of the file it came from.
"""
from __future__ import annotations

import json
import re
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .abstraction import DesAutomaton, ExtractionConfig, Trace, Transition
from .errors import DesPlantError, InputError
from .partition import CellLabel, Functional, PartitionSpec, format_signs
from .plant import ControlAlphabet, LinearField, PlantSystem, builtin_field

FORMAT_VERSION = 1
CONFIG_KEYS = {
    "dt": "dt",
    "horizon": "horizon",
    "samples": "samples_per_cell",
    "eps_t": "eps_t",
    "eps_h": "eps_h",
    "seed": "seed",
}


class SystemFileError(InputError):
    def __init__(self, source: str, message: str, line: Optional[int] = None):
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")
        self.line = line


def _line_of(text: str, pattern: str, occurrence: int = 1) -> Optional[int]:
    matches = list(re.finditer(pattern, text))
    if len(matches) < occurrence:
        return None
    return text.count("\n", 0, matches[occurrence - 1].start()) + 1


def bundled_systems() -> list[str]:
    return sorted(p.name for p in resources.files("desplant").joinpath("systems").iterdir()
                  if p.name.endswith(".json"))


def resolve_system_path(name: str) -> Path:
    """A filesystem path, or the name of a bundled system file such as ``double_integrator``."""
    path = Path(name)
    if path.exists():
        return path
    stem = name if name.endswith(".json") else name + ".json"
    bundled = resources.files("desplant").joinpath("systems", stem)
    if bundled.is_file():
        return Path(str(bundled))
    raise InputError(f"no such system file: {name} (bundled: {', '.join(bundled_systems())})")


def _loads(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemFileError(source, f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno) from None


def parse_system(text: str, source: str = "<system>") -> tuple[PlantSystem, dict[str, Any]]:
    """Parse a system file; returns the system and its config overrides."""
    doc = _loads(text, source)
    if not isinstance(doc, dict):
        raise SystemFileError(source, "top level must be a JSON object", 1)

    def fail(message, pattern=None, occurrence=1):
        line = _line_of(text, pattern, occurrence) if pattern else None
        raise SystemFileError(source, message, line)

    version = doc.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        fail(f"unsupported format_version {version!r}", r'"format_version"')
    for key in ("plant", "controls", "partition", "sampling_box"):
        if key not in doc:
            fail(f"missing required key {key!r}")

    plant = doc["plant"]
    if not isinstance(plant, dict) or len(plant) != 1 or not ({"builtin", "linear"} & set(plant)):
        fail('plant must be {"builtin": name} or {"linear": {"A": .., "B": ..}}', r'"plant"')
    try:
        if "builtin" in plant:
            field = builtin_field(plant["builtin"])
        else:
            lin = plant["linear"]
            field = LinearField(lin["A"], lin["B"])
    except (InputError, KeyError, TypeError, ValueError) as exc:
        fail(f"plant: {exc}", r'"plant"')

    entries = doc["controls"]
    if not isinstance(entries, list) or not entries:
        fail("controls must be a non-empty list", r'"controls"')
    seen = {}
    for k, entry in enumerate(entries):
        if not isinstance(entry, dict) or "symbol" not in entry or "value" not in entry:
            fail(f"controls[{k}] needs 'symbol' and 'value'", r'"controls"')
        sym = str(entry["symbol"])
        seen[sym] = seen.get(sym, 0) + 1
        if seen[sym] > 1:
            fail(f"duplicate control symbol {sym!r}", rf'"symbol"\s*:\s*"{re.escape(sym)}"', seen[sym])
    try:
        controls = ControlAlphabet(tuple((e["symbol"], e["value"]) for e in entries))
    except (InputError, TypeError, ValueError) as exc:
        fail(f"controls: {exc}", r'"controls"')

    functionals = []
    raw = doc["partition"]
    if not isinstance(raw, list) or not raw:
        fail("partition must be a non-empty list of functionals", r'"partition"')
    for k, entry in enumerate(raw):
        fid = entry.get("id", k + 1) if isinstance(entry, dict) else k + 1
        anchor = rf'"id"\s*:\s*{fid}\b'
        if not isinstance(entry, dict):
            fail(f"partition[{k}] must be an object", r'"partition"')
        if fid != k + 1:
            fail(f"functional ids must be contiguous 1..N in order; entry {k} has id {fid}", anchor)
        try:
            if "builtin" in entry:
                functionals.append(Functional(fid, builtin=entry["builtin"]))
            else:
                normal = entry.get("normal")
                if normal is not None and len(normal) and not any(float(c) for c in normal):
                    fail(f"functional {fid}: zero normal vector", anchor)
                functionals.append(Functional(fid, normal=tuple(normal or ()), offset=entry.get("offset", 0.0)))
        except (InputError, TypeError, ValueError) as exc:
            if isinstance(exc, SystemFileError):
                raise
            fail(f"functional {fid}: {exc}", anchor)
        f = functionals[-1]
        if f.dim is not None and f.dim != field.dim:
            fail(f"functional {fid} has dimension {f.dim}, plant has {field.dim}", anchor)
    partition = PartitionSpec(tuple(functionals))

    cells = ()
    if "cells" in doc:
        try:
            cells = tuple(CellLabel(tuple(c["signs"]), str(c["symbol"])) for c in doc["cells"])
        except (InputError, KeyError, TypeError) as exc:
            fail(f"cells: {exc}", r'"cells"')
        if any(len(c.signs) != partition.size for c in cells):
            fail(f"cells must have {partition.size} signs each", r'"cells"')

    try:
        system = PlantSystem(field, controls, partition, tuple(map(tuple, doc["sampling_box"])), cells,
                             name=str(doc.get("name", "")))
    except (InputError, TypeError, ValueError) as exc:
        fail(str(exc), r'"sampling_box"')

    config = doc.get("config", {}) or {}
    unknown = set(config) - set(CONFIG_KEYS)
    if unknown:
        fail(f"unknown config keys: {sorted(unknown)}", r'"config"')
    return system, dict(config)


def load_system(path) -> tuple[PlantSystem, dict[str, Any]]:
    path = resolve_system_path(str(path))
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    system, config = parse_system(text, str(path))
    if not system.name:
        system = replace(system, name=path.stem)
    return system, config


def make_config(file_config: dict[str, Any], overrides: dict[str, Any], **extra) -> ExtractionConfig:
    """File config, then command line overrides (``None`` means not given)."""
    values = {}
    for key, value in list(file_config.items()) + [(k, v) for k, v in overrides.items() if v is not None]:
        if key not in CONFIG_KEYS:
            raise InputError(f"unknown config key {key!r}")
        values[CONFIG_KEYS[key]] = value
    try:
        if "samples_per_cell" in values:
            values["samples_per_cell"] = int(values["samples_per_cell"])
        if "seed" in values:
            values["seed"] = int(values["seed"])
        for k in ("dt", "horizon", "eps_t", "eps_h"):
            if k in values:
                values[k] = float(values[k])
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad config value: {exc}") from None
    values.update(extra)
    return ExtractionConfig(**values)


def automaton_to_dict(a: DesAutomaton) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "states": [{"symbol": s.symbol, "signs": list(s.signs)} for s in a.states],
        "controls": list(a.controls),
        "plant_symbols": list(a.plant_symbols),
        "transitions": [
            {"from": t.source, "control": t.control, "to": t.target, "output": t.output}
            for t in a.transitions
        ],
        "metadata": a.metadata,
    }


def automaton_from_dict(doc: dict, source: str = "<automaton>") -> DesAutomaton:
    try:
        if doc.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
            raise InputError(f"unsupported format_version {doc.get('format_version')!r}")
        return DesAutomaton(
            states=tuple(CellLabel(tuple(s["signs"]), s["symbol"]) for s in doc["states"]),
            controls=tuple(doc["controls"]),
            plant_symbols=tuple(doc["plant_symbols"]),
            transitions=tuple(Transition(t["from"], t["control"], t["to"], t["output"])
                              for t in doc["transitions"]),
            metadata=doc.get("metadata", {}),
        )
    except DesPlantError as exc:
        raise InputError(f"{source}: {exc}") from None
    except (KeyError, TypeError, AttributeError) as exc:
        raise InputError(f"{source}: malformed automaton file ({type(exc).__name__}: {exc})") from None


def dumps(doc) -> str:
    # repr-based float output round-trips exactly
    return json.dumps(doc, indent=2) + "\n"


def save_automaton(a: DesAutomaton, path) -> None:
    Path(path).write_text(dumps(automaton_to_dict(a)))


def load_automaton(path) -> DesAutomaton:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be a JSON object")
    return automaton_from_dict(doc, str(path))


def trace_to_dict(tr: Trace) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "states": tr.states,
        "controls": tr.controls,
        "symbols": tr.symbols,
        "event_times": [float(t) for t in tr.event_times],
        "waypoints": [np.asarray(w, dtype=float).tolist() for w in tr.waypoints],
        "termination": tr.termination,
        "final_time": float(tr.final_time),
        "final_state": np.asarray(tr.final_state, dtype=float).tolist(),
        "simultaneous_events": tr.simultaneous_events,
        "sliding": tr.sliding,
    }


def trace_from_dict(doc: dict) -> Trace:
    return Trace(
        states=list(doc["states"]),
        controls=list(doc["controls"]),
        symbols=list(doc["symbols"]),
        event_times=list(doc["event_times"]),
        waypoints=[np.array(w) for w in doc["waypoints"]],
        termination=doc["termination"],
        final_time=doc["final_time"],
        final_state=np.array(doc["final_state"]),
        simultaneous_events=doc.get("simultaneous_events", 0),
        sliding=doc.get("sliding", False),
    )


def save_trace(tr: Trace, path) -> None:
    Path(path).write_text(dumps(trace_to_dict(tr)))


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def to_dot(a: DesAutomaton, name: str = "G_p") -> str:
    """Graphviz digraph: one node per state, one edge per transition labeled ``r / z``."""
    lines = [f"digraph {_dot_quote(name)} {{", "  rankdir=LR;", "  node [shape=circle];"]
    for s in sorted(a.states, key=lambda c: _natural(c.symbol)):
        label = f"{s.symbol}\n{format_signs(s.signs)}"
        lines.append(f"  {_dot_quote(s.symbol)} [label={_dot_quote(label)}];")
    for t in sorted(a.transitions, key=lambda t: (_natural(t.source), _natural(t.control), _natural(t.target), t.output)):
        lines.append(f"  {_dot_quote(t.source)} -> {_dot_quote(t.target)} "
                     f"[label={_dot_quote(f'{t.control} / {t.output}')}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _natural(symbol: str):
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", symbol)]
