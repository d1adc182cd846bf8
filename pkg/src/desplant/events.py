"""Plant-events: directed crossings of partition kernels along a trajectory.

Crossings are found at integrator-step resolution (a strict sign change of
``h_i`` between dense samples) and then localized by bisection, re-stepping
the integrator from the bracket start with a shortened step.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BoundaryStateError, InputError
from .partition import DEFAULT_EPS_H, PartitionSpec, evaluate, is_consistent, quality, signs_of
from .plant import DEFAULT_DT, TrajectorySegment, integrate_step, march

DEFAULT_EPS_T = 1e-9
# a kernel hugged for this many consecutive samples is reported as sliding
SLIDING_SAMPLES = 3
_MAX_BISECTIONS = 200

_SYMBOL_RE = re.compile(r"^z_?\{?(\d+)([+-])\}?$")


@dataclass(frozen=True, order=True)
class PlantSymbol:
    index: int
    direction: str

    def __post_init__(self):
        if self.direction not in ("+", "-"):
            raise InputError(f"plant-symbol direction must be '+' or '-', got {self.direction!r}")
        if self.index < 1:
            raise InputError(f"plant-symbol index must be >= 1, got {self.index}")

    @property
    def name(self) -> str:
        return f"z{self.index}{self.direction}"

    def __str__(self):
        return self.name

    @classmethod
    def parse(cls, text: str) -> "PlantSymbol":
        """Accepts ``z1+`` (canonical) as well as ``z_{1+}`` and ``z_1+``."""
        m = _SYMBOL_RE.match(text.strip())
        if not m:
            raise InputError(f"not a plant-symbol: {text!r} (expected e.g. z1+ or z2-)")
        return cls(int(m.group(1)), m.group(2))


def plant_alphabet(n_functionals: int) -> list[PlantSymbol]:
    return [PlantSymbol(i, d) for i in range(1, n_functionals + 1) for d in ("+", "-")]


@dataclass(frozen=True, eq=False)
class PlantEvent:
    """Crossing of ``Ker(h_index)`` into the halfspace named by ``direction``.

    ``state`` sits on the kernel (within eps_h); ``post_state`` is the first
    dense sample strictly inside the entered halfspace.
    """

    index: int
    direction: str
    time: float
    state: np.ndarray
    post_state: np.ndarray

    @property
    def sign(self) -> int:
        return 1 if self.direction == "+" else -1

    def __repr__(self):
        return f"PlantEvent({self.index}{self.direction}, t={self.time:.12g})"


def event_to_symbol(e: PlantEvent) -> PlantSymbol:
    return PlantSymbol(e.index, e.direction)


@dataclass
class _Bracket:
    index: int  # 0-based functional position
    lo: int
    hi: int
    direction: int


def _scan(signs: np.ndarray, prior: Sequence[int]):
    """Strict sign changes per component.

    ``prior`` is the sign in force at sample 0 and overrides its computed
    sign: a segment starting at an event state sits on a kernel, possibly a
    hair on the side it just left.
    """
    brackets = []
    for i in range(signs.shape[1]):
        col = signs[:, i]
        pos = np.flatnonzero(col)
        pos = pos[pos > 0]
        pos = np.concatenate([[0], pos])
        vals = np.concatenate([[prior[i]], col[pos[1:]]])
        change = np.flatnonzero(vals[1:] != vals[:-1]) + 1
        for k in change:
            brackets.append(_Bracket(i, int(pos[k - 1]), int(pos[k]), int(vals[k])))
    return brackets


def _localize(segment: TrajectorySegment, p: PartitionSpec, br: _Bracket,
              eps_t: float, eps_h: float) -> PlantEvent:
    f_i = p.functionals[br.index]
    t_a = float(segment.times[br.lo])
    x_a = segment.states[br.lo]
    before = -br.direction
    lo, hi = t_a, float(segment.times[br.hi])
    best_t, best_x = hi, segment.states[br.hi]
    best_h = abs(evaluate(f_i, best_x))
    for _ in range(_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        x_mid = integrate_step(segment.field, x_a, segment.control, mid - t_a)
        h_mid = evaluate(f_i, x_mid)
        if abs(h_mid) < best_h:
            best_t, best_x, best_h = mid, x_mid, abs(h_mid)
        if abs(h_mid) < eps_h and hi - lo < eps_t:
            best_t, best_x = mid, x_mid
            break
        if h_mid * before > 0:
            lo = mid
        else:
            hi = mid
    return PlantEvent(br.index + 1, "+" if br.direction > 0 else "-", best_t, best_x,
                      segment.states[br.hi])


def detect_events(segment: TrajectorySegment, p: PartitionSpec, eps_t: float = DEFAULT_EPS_T,
                  eps_h: float = DEFAULT_EPS_H, initial_signs: Optional[Sequence[int]] = None
                  ) -> list[PlantEvent]:
    """All kernel crossings along ``segment``, ordered by event time.

    A touch that returns to the previous side without a strict sign change
    between samples yields nothing.  ``initial_signs`` overrides the cell of
    the first sample, for segments that begin on a kernel.
    """
    signs = signs_of(p.values(segment.states), eps_h)
    if initial_signs is None:
        prior = tuple(int(s) for s in signs[0])
        if not is_consistent(prior):
            raise BoundaryStateError(f"segment starts on a kernel: quality {list(prior)}")
    else:
        prior = tuple(int(s) for s in initial_signs)
        if len(prior) != p.size or not is_consistent(prior):
            raise InputError(f"initial signs must be {p.size} nonzero entries, got {list(prior)}")
    brackets = _scan(signs, prior)
    events = [_localize(segment, p, br, eps_t, eps_h) for br in brackets]
    events.sort(key=lambda e: (e.time, e.index))
    return events


def check_simultaneity(events: Sequence[PlantEvent], eps_t: float = DEFAULT_EPS_T
                       ) -> tuple[list[PlantEvent], bool]:
    """Group events closer than ``eps_t`` and order each group by functional index.

    The flag reports whether any group had more than one member, i.e. the
    no-simultaneous-events assumption failed.
    """
    out: list[PlantEvent] = []
    group: list[PlantEvent] = []
    violated = False
    for e in events:
        if group and e.time - group[-1].time >= eps_t:
            violated |= len(group) > 1
            out.extend(sorted(group, key=lambda g: g.index))
            group = []
        group.append(e)
    violated |= len(group) > 1
    out.extend(sorted(group, key=lambda g: g.index))
    return out, violated


@dataclass
class Crossing:
    """Outcome of running one constant control until the first plant-event.

    ``events`` holds every event within ``eps_t`` of the earliest, lowest
    index first, so ``events[0]`` is the trigger; it is empty when the
    horizon expired first.  ``end_time``/``end_state`` give the trigger's
    event point, or the last sample on expiry.
    """

    events: list[PlantEvent]
    simultaneous: bool
    sliding: bool
    end_time: float
    end_state: np.ndarray

    @property
    def trigger(self) -> Optional[PlantEvent]:
        return self.events[0] if self.events else None


def next_crossing(field, x0, u, p: PartitionSpec, horizon: float, dt: float = DEFAULT_DT,
                  eps_t: float = DEFAULT_EPS_T, eps_h: float = DEFAULT_EPS_H, t0: float = 0.0,
                  initial_signs: Optional[Sequence[int]] = None) -> Crossing:
    """Integrate under ``u`` until the first plant-event or until ``horizon`` elapses.

    ``sliding`` on the result reports a component that stayed on its kernel
    for several consecutive samples.  Integration proceeds block by block
    and stops at the first block containing a crossing.
    """
    if initial_signs is None:
        prior = quality(p, x0, eps_h)
        if not is_consistent(prior):
            raise BoundaryStateError(f"state {np.asarray(x0, float).tolist()} lies on a kernel: quality {list(prior)}")
    else:
        prior = tuple(int(s) for s in initial_signs)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    sliding = False
    zero_run = np.zeros(p.size, dtype=int)
    for times, states in march(field, x0, u, horizon, dt, t0):
        seg = TrajectorySegment(field, u, times, states)
        signs = signs_of(p.values(states), eps_h)
        if np.array_equal(signs, np.broadcast_to(prior, signs.shape)):
            zero_run[:] = 0
            continue
        brackets = _scan(signs, prior)
        # zero runs continue across blocks; row 0 repeats the previous block's last row
        if np.any(signs[1:] == 0):
            for row in signs[1:]:
                zero_run = np.where(row == 0, zero_run + 1, 0)
                sliding |= bool(np.any(zero_run >= SLIDING_SAMPLES))
        else:
            zero_run[:] = 0
        if brackets:
            events = sorted((_localize(seg, p, br, eps_t, eps_h) for br in brackets),
                            key=lambda e: (e.time, e.index))
            first = events[0].time
            group = [e for e in events if e.time - first < eps_t]
            group, simultaneous = check_simultaneity(group, eps_t)
            return Crossing(group, simultaneous, sliding, group[0].time, group[0].state)
        prior = tuple(
            int(col[np.flatnonzero(col)[-1]]) if np.any(col) else prior[i]
            for i, col in enumerate(signs.T)
        )
    return Crossing([], False, sliding, float(times[-1]), states[-1])
