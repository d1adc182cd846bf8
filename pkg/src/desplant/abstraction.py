"""DES-plant automaton: extraction by sampled simulation, observability, reconstruction.

Extraction under-approximates the transition relation: a transition is
recorded only if some sampled initial state realizes it.  States and
transitions are never invented.
"""
from __future__ import annotations

import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import DivergenceError, EmptyDomainError, InadmissibleSequenceError, InputError, NotObservableError
from .events import DEFAULT_EPS_T, PlantSymbol, next_crossing, plant_alphabet
from .partition import (
    DEFAULT_EPS_H,
    CellLabel,
    CellRegistry,
    SignVector,
    adjacency,
    cell_of,
    flip,
    format_signs,
    quality,
    signs_of,
)
from .plant import DEFAULT_DT, DEFAULT_HORIZON, PlantSystem

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExtractionConfig:
    samples_per_cell: int = 64
    horizon: float = DEFAULT_HORIZON
    dt: float = DEFAULT_DT
    eps_t: float = DEFAULT_EPS_T
    eps_h: float = DEFAULT_EPS_H
    seed: int = 0
    sampling_box: Optional[tuple[tuple[float, float], ...]] = None
    # rejection sampling keeps drawing until this many points even when every
    # known cell already has enough seeds, so small cells get a chance to show up
    min_draws: int = 16384
    max_draws: int = 1 << 20
    batch: int = 4096

    def __post_init__(self):
        if self.samples_per_cell < 1:
            raise InputError("samples_per_cell must be >= 1")
        for name in ("horizon", "dt", "eps_t", "eps_h"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if self.sampling_box is not None:
            box = tuple((float(lo), float(hi)) for lo, hi in self.sampling_box)
            if any(not hi > lo for lo, hi in box):
                raise InputError("sampling box must have positive volume")
            object.__setattr__(self, "sampling_box", box)


class Transition(NamedTuple):
    source: str
    control: str
    target: str
    output: str


@dataclass
class DesAutomaton:
    """Nondeterministic automaton over cell symbols.

    Transitions carry their output plant-symbol, so the output map is only
    defined on state pairs that actually occur.
    """

    states: tuple[CellLabel, ...]
    controls: tuple[str, ...]
    plant_symbols: tuple[str, ...]
    transitions: tuple[Transition, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = tuple(self.states)
        self.controls = tuple(self.controls)
        self.plant_symbols = tuple(self.plant_symbols)
        self.transitions = tuple(sorted(set(Transition(*t) for t in self.transitions),
                                        key=_transition_key))
        symbols = [s.symbol for s in self.states]
        if len(set(symbols)) != len(symbols):
            raise InputError("duplicate state symbols")
        if len({s.signs for s in self.states}) != len(self.states):
            raise InputError("two states share a sign vector")
        known_states, known_controls, known_outputs = set(symbols), set(self.controls), set(self.plant_symbols)
        for t in self.transitions:
            if t.source == t.target:
                raise InputError(f"self-loop {t.source} -> {t.target}: a transition must change state")
            if t.source not in known_states or t.target not in known_states:
                raise InputError(f"transition {tuple(t)} references an unknown state")
            if t.control not in known_controls:
                raise InputError(f"transition {tuple(t)} uses unknown control {t.control!r}")
            if t.output not in known_outputs:
                raise InputError(f"transition {tuple(t)} emits unknown plant-symbol {t.output!r}")

    def state(self, symbol: str) -> CellLabel:
        for s in self.states:
            if s.symbol == symbol:
                return s
        raise InputError(f"unknown state {symbol!r}")

    def registry(self) -> CellRegistry:
        n = len(self.states[0].signs) if self.states else 0
        return CellRegistry(n, self.states)

    def coherence_violations(self) -> list[Transition]:
        """Transitions whose output disagrees with the adjacency of their cells."""
        by_symbol = {s.symbol: s for s in self.states}
        bad = []
        for t in self.transitions:
            adj = adjacency(by_symbol[t.source], by_symbol[t.target])
            if adj is None or PlantSymbol(*adj).name != t.output:
                bad.append(t)
        return bad


def _symbol_number(symbol: str):
    digits = "".join(ch for ch in symbol if ch.isdigit())
    return (int(digits) if digits else -1, symbol)


def _transition_key(t: Transition):
    return (_symbol_number(t.source), _symbol_number(t.control), _symbol_number(t.target), t.output)


@dataclass
class ObservabilityReport:
    observable: bool
    witnesses: list[tuple[str, str, tuple[str, ...]]]


def check_observability(a: DesAutomaton) -> ObservabilityReport:
    """Next state must be a function of (current state, emitted plant-symbol)."""
    targets: dict[tuple[str, str], set[str]] = defaultdict(set)
    for t in a.transitions:
        targets[(t.source, t.output)].add(t.target)
    witnesses = [
        (src, out, tuple(sorted(tgts, key=_symbol_number)))
        for (src, out), tgts in sorted(targets.items(), key=lambda kv: (_symbol_number(kv[0][0]), kv[0][1]))
        if len(tgts) > 1
    ]
    return ObservabilityReport(not witnesses, witnesses)


def _symbol_name(z) -> str:
    return z.name if isinstance(z, PlantSymbol) else PlantSymbol.parse(str(z)).name


def reconstruct(a: DesAutomaton, p0, w_z: Sequence) -> list[str]:
    """The unique state sequence starting at ``p0`` that emits ``w_z``."""
    report = check_observability(a)
    if not report.observable:
        raise NotObservableError(
            f"automaton is not observable ({len(report.witnesses)} witness(es)); reconstruction is ambiguous")
    p = p0.symbol if isinstance(p0, CellLabel) else str(p0)
    a.state(p)
    step = {(t.source, t.output): t.target for t in a.transitions}
    out = [p]
    for k, z in enumerate(w_z, start=1):
        name = _symbol_name(z)
        nxt = step.get((p, name))
        if nxt is None:
            raise InadmissibleSequenceError(f"position {k}: no transition from {p} emits {name}", k)
        out.append(nxt)
        p = nxt
    return out


class Successor(NamedTuple):
    cell: CellLabel
    symbol: PlantSymbol
    time: float
    state: np.ndarray
    post_state: np.ndarray
    simultaneous: bool
    sliding: bool


def _advance(system: PlantSystem, registry: CellRegistry, signs: SignVector, x0, r: str,
             cfg: ExtractionConfig, t0: float = 0.0, on_kernel: bool = False):
    crossing = next_crossing(system.field, x0, system.act(r), system.partition, cfg.horizon, cfg.dt,
                             cfg.eps_t, cfg.eps_h, t0=t0, initial_signs=signs if on_kernel else None)
    e = crossing.trigger
    if e is None:
        return None, crossing
    if signs[e.index - 1] != -e.sign:
        raise AssertionError(f"event {e} does not leave cell {format_signs(signs)}")
    cell = registry.register(flip(signs, e.index))
    succ = Successor(cell, PlantSymbol(e.index, e.direction), e.time, e.state, e.post_state,
                     crossing.simultaneous, crossing.sliding)
    return succ, crossing


def successor(system: PlantSystem, from_cell: CellLabel, x0, r: str,
              cfg: Optional[ExtractionConfig] = None,
              registry: Optional[CellRegistry] = None) -> Optional[Successor]:
    """First cell entered from ``x0`` under the constant control ``r``.

    Returns None when the horizon expires without a plant-event.  The
    entered cell is ``from_cell`` with the crossed component flipped: just
    after the event the state is on the other side of exactly that kernel.
    """
    cfg = cfg or ExtractionConfig()
    registry = registry if registry is not None else system.registry()
    b = quality(system.partition, x0, cfg.eps_h)
    if 0 in b:
        cell_of(system.partition, registry, x0, cfg.eps_h)  # raises BoundaryStateError
    if b != from_cell.signs:
        raise InputError(f"x0 has quality {format_signs(b)}, not that of {from_cell}")
    succ, _ = _advance(system, registry, from_cell.signs, x0, r, cfg)
    return succ


def _draw_seeds(system: PlantSystem, registry: CellRegistry, cfg: ExtractionConfig):
    box = np.array(cfg.sampling_box or system.sampling_box)
    if box.shape != (system.dim, 2):
        raise InputError(f"sampling box must give {system.dim} intervals")
    rng = np.random.default_rng(cfg.seed)
    k = cfg.samples_per_cell
    seeds: dict[SignVector, list[np.ndarray]] = {}
    drawn = 0
    while drawn < cfg.max_draws:
        pts = rng.uniform(box[:, 0], box[:, 1], size=(cfg.batch, system.dim))
        drawn += cfg.batch
        signs = signs_of(system.partition.values(pts), cfg.eps_h)
        ok = np.all(signs != 0, axis=1)
        for pt, row in zip(pts[ok], signs[ok]):
            key = tuple(int(s) for s in row)
            bucket = seeds.get(key)
            if bucket is None:
                bucket = seeds[key] = []
                registry.register(key)
            if len(bucket) < k:
                bucket.append(pt)
        if seeds and drawn >= cfg.min_draws and all(len(v) >= k for v in seeds.values()):
            break
    if not seeds:
        raise EmptyDomainError(f"no state strictly inside a cell found in box {box.tolist()} after {drawn} draws")
    return seeds, drawn


def extract(system: PlantSystem, cfg: Optional[ExtractionConfig] = None) -> DesAutomaton:
    """Build the DES-plant automaton by simulating from sampled initial states.

    Cells are those witnessed by rejection sampling in the box plus those
    entered during simulation; cells found only by simulation are seeded
    from the states just past their entry events.  Each (cell, control)
    pair is run from every seed of the cell.
    """
    cfg = cfg or ExtractionConfig()
    registry = system.registry()
    seeds, drawn = _draw_seeds(system, registry, cfg)
    k = cfg.samples_per_cell

    queue = deque(seeds)
    seen = set(seeds)
    processed = set()
    transitions = set()
    no_event, divergent = set(), set()
    violations = sliding = runs = 0
    while queue:
        key = queue.popleft()
        processed.add(key)
        cell = registry.register(key)
        for r in system.controls.symbols:
            for x0 in seeds[key]:
                runs += 1
                try:
                    succ, _ = _advance(system, registry, key, x0, r, cfg)
                except DivergenceError:
                    divergent.add((cell.symbol, r))
                    continue
                if succ is None:
                    no_event.add((cell.symbol, r))
                    continue
                transitions.add(Transition(cell.symbol, r, succ.cell.symbol, succ.symbol.name))
                violations += succ.simultaneous
                sliding += succ.sliding
                target = succ.cell.signs
                if target not in seen:
                    seen.add(target)
                    seeds[target] = []
                    queue.append(target)
                bucket = seeds[target]
                if (target not in processed and len(bucket) < k
                        and quality(system.partition, succ.post_state, cfg.eps_h) == target):
                    bucket.append(succ.post_state)
    if violations:
        log.warning("%d run(s) had simultaneous plant-events; lower index taken as trigger", violations)

    states = tuple(c for c in registry if c.signs in seen)
    metadata = {
        "samples_per_cell": k,
        "seeds": {registry.get(key).symbol: len(v) for key, v in seeds.items()},
        "box_draws": drawn,
        "runs": runs,
        "horizon": cfg.horizon,
        "dt": cfg.dt,
        "eps_t": cfg.eps_t,
        "eps_h": cfg.eps_h,
        "seed": cfg.seed,
        "simultaneous_events": violations,
        "sliding_runs": sliding,
        "no_event": [list(pair) for pair in sorted(no_event, key=_pair_key)],
        "divergent": [list(pair) for pair in sorted(divergent, key=_pair_key)],
    }
    return DesAutomaton(
        states=states,
        controls=system.controls.symbols,
        plant_symbols=tuple(z.name for z in plant_alphabet(system.partition.size)),
        transitions=tuple(transitions),
        metadata=metadata,
    )


def _pair_key(pair):
    return (_symbol_number(pair[0]), _symbol_number(pair[1]))


@dataclass
class Trace:
    """One closed-loop run: visited cells, applied controls, emitted symbols."""

    states: list[str]
    controls: list[str]
    symbols: list[str]
    event_times: list[float]
    waypoints: list[np.ndarray]
    termination: str
    final_time: float
    final_state: np.ndarray
    simultaneous_events: int = 0
    sliding: bool = False


def simulate_closed_loop(system: PlantSystem, x0, w_r: Sequence[str],
                         cfg: Optional[ExtractionConfig] = None,
                         registry: Optional[CellRegistry] = None) -> Trace:
    """Apply ``w_r`` one symbol per visited cell, switching at each plant-event.

    Control ``r(k)`` is held from the entry into cell ``c(k)`` until the next
    plant-event; the run stops when the sequence is used up or a control
    produces no event within the horizon.
    """
    w_r = list(w_r)
    if not w_r:
        raise InputError("control sequence is empty")
    for r in w_r:
        system.act(r)
    cfg = cfg or ExtractionConfig()
    registry = registry if registry is not None else system.registry()
    x = np.asarray(x0, dtype=float)
    if x.shape != (system.dim,):
        raise InputError(f"x0 has dimension {x.size}, plant dimension is {system.dim}")
    cell = cell_of(system.partition, registry, x, cfg.eps_h)
    t = 0.0
    trace = Trace([cell.symbol], [], [], [], [x.copy()], "exhausted", t, x.copy())
    on_kernel = False
    for r in w_r:
        succ, crossing = _advance(system, registry, cell.signs, x, r, cfg, t0=t, on_kernel=on_kernel)
        trace.controls.append(r)
        trace.sliding |= crossing.sliding
        if succ is None:
            trace.termination = "no-event"
            trace.final_time, trace.final_state = crossing.end_time, crossing.end_state
            break
        trace.simultaneous_events += succ.simultaneous
        cell, x, t = succ.cell, succ.state, succ.time
        on_kernel = True
        trace.states.append(cell.symbol)
        trace.symbols.append(succ.symbol.name)
        trace.event_times.append(t)
        trace.waypoints.append(x.copy())
        trace.final_time, trace.final_state = t, x.copy()
    return trace
