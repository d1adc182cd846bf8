"""Continuous plant under piecewise-constant control.

Integration is fixed-step classical RK4.  For linear fields one RK4 step is
the affine map ``x -> M x + N u``, so whole blocks of steps are produced
from precomputed powers of ``M`` instead of a Python loop per step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .errors import DivergenceError, InputError
from .partition import CellLabel, CellRegistry, PartitionSpec

DEFAULT_DT = 1e-3
DEFAULT_HORIZON = 100.0
CHUNK_STEPS = 2048


@dataclass(frozen=True)
class ControlAlphabet:
    """Ordered pairs ``(control symbol, control value)``; ``act`` is the lookup."""

    entries: tuple[tuple[str, tuple[float, ...]], ...]

    def __post_init__(self):
        entries = tuple((str(s), tuple(float(c) for c in np.atleast_1d(v))) for s, v in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise InputError("control alphabet is empty")
        symbols = [s for s, _ in entries]
        values = [v for _, v in entries]
        if len(set(symbols)) != len(symbols):
            dup = next(s for s in symbols if symbols.count(s) > 1)
            raise InputError(f"duplicate control symbol {dup!r}")
        if len(set(values)) != len(values):
            dup = next(v for v in values if values.count(v) > 1)
            raise InputError(f"duplicate control value {list(dup)}")
        if len({len(v) for v in values}) != 1:
            raise InputError("control values have inconsistent dimensions")

    @classmethod
    def of(cls, mapping) -> "ControlAlphabet":
        items = mapping.items() if hasattr(mapping, "items") else mapping
        return cls(tuple(items))

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(s for s, _ in self.entries)

    @property
    def control_dim(self) -> int:
        return len(self.entries[0][1])

    def act(self, r: str) -> np.ndarray:
        for s, v in self.entries:
            if s == r:
                return np.array(v)
        raise InputError(f"unknown control symbol {r!r}")

    def symbol_of(self, u) -> str:
        key = tuple(float(c) for c in np.atleast_1d(u))
        for s, v in self.entries:
            if v == key:
                return s
        raise InputError(f"no control symbol for value {list(key)}")


def actuate(alphabet: ControlAlphabet, r: str) -> np.ndarray:
    return alphabet.act(r)


class LinearField:
    """``dx/dt = A x + B u``."""

    kind = "linear"

    def __init__(self, A, B, name: Optional[str] = None):
        A = np.array(A, dtype=float, ndmin=2)
        B = np.array(B, dtype=float, ndmin=2)
        if A.shape[0] != A.shape[1]:
            raise InputError(f"A must be square, got shape {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise InputError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise InputError("A and B must be finite")
        A.setflags(write=False)
        B.setflags(write=False)
        self.A, self.B, self.name = A, B, name
        self._blocks: dict = {}

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def control_dim(self) -> int:
        return self.B.shape[1]

    def __call__(self, x, u):
        return x @ self.A.T + np.asarray(u, dtype=float) @ self.B.T

    def __eq__(self, other):
        return (isinstance(other, LinearField) and self.name == other.name
                and np.array_equal(self.A, other.A) and np.array_equal(self.B, other.B))

    def __hash__(self):
        return hash((self.name, self.A.tobytes(), self.B.tobytes()))

    def __repr__(self):
        return f"LinearField(A={self.A.tolist()}, B={self.B.tolist()}, name={self.name!r})"

    def rk4_map(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """``(M, N)`` with one RK4 step equal to ``M x + N u``."""
        n = self.dim
        hA = dt * self.A
        M = np.eye(n)
        term = np.eye(n)
        G = np.zeros((n, n))  # sum_{k>=1} (hA)^(k-1) h / k!
        for k in range(1, 5):
            G = G + term * dt / math.factorial(k)
            term = term @ hA
            M = M + term / math.factorial(k)
        return M, G @ self.B

    def block(self, dt: float, steps: int):
        """Stacked ``M^j`` and ``sum_{l<j} M^l N`` for ``j = 1..steps``."""
        key = (dt, steps)
        if key not in self._blocks:
            M, N = self.rk4_map(dt)
            n = self.dim
            P = np.empty((steps, n, n))
            Q = np.empty((steps, n, self.control_dim))
            Pj, Qj = np.eye(n), np.zeros_like(N)
            # unstable plants overflow late powers; march reports the non-finite states
            with np.errstate(over="ignore", invalid="ignore"):
                for j in range(steps):
                    Qj = Qj + Pj @ N
                    Pj = Pj @ M
                    P[j], Q[j] = Pj, Qj
            if len(self._blocks) > 8:
                self._blocks.clear()
            # rows j*n..(j+1)*n-1 of the flattened stack hold M^(j+1)
            self._blocks[key] = (P.reshape(steps * n, n), Q)
        return self._blocks[key]


class BuiltinField:
    """A nonlinear vector field registered in code under ``name``."""

    kind = "builtin"

    def __init__(self, name: str, func: Callable, dim: int, control_dim: int):
        self.name, self.func = name, func
        self.dim, self.control_dim = dim, control_dim

    def __call__(self, x, u):
        return self.func(np.asarray(x, dtype=float), np.asarray(u, dtype=float))

    def __eq__(self, other):
        return isinstance(other, BuiltinField) and self.name == other.name

    def __hash__(self):
        return hash(self.name)

    def __repr__(self):
        return f"BuiltinField({self.name!r})"


def _pendulum(x, u):
    return np.stack([x[..., 1], -np.sin(x[..., 0]) + u[..., 0]], axis=-1)


def double_integrator_field() -> LinearField:
    return LinearField([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], name="double_integrator")


BUILTIN_FIELDS: dict[str, Callable[[], object]] = {
    "double_integrator": double_integrator_field,
    "pendulum": lambda: BuiltinField("pendulum", _pendulum, 2, 1),
}


def builtin_field(name: str):
    try:
        return BUILTIN_FIELDS[name]()
    except KeyError:
        raise InputError(f"unknown builtin plant {name!r}; known: {sorted(BUILTIN_FIELDS)}") from None


def _check_finite(x, t):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"integration produced a non-finite state near t={t:.6g}")


def integrate_step(f, x, u, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step."""
    if not dt > 0:
        raise InputError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = f(x, u)
        k2 = f(x + 0.5 * dt * k1, u)
        k3 = f(x + 0.5 * dt * k2, u)
        k4 = f(x + dt * k3, u)
        out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(out, dt)
    return out


def step_count(horizon: float, dt: float) -> int:
    """Number of RK4 steps covering ``horizon``; the last one may be short."""
    return max(1, math.ceil(horizon / dt - 1e-9))


def march(f, x0, u, horizon: float, dt: float = DEFAULT_DT, t0: float = 0.0,
          chunk: int = CHUNK_STEPS) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield consecutive blocks ``(times, states)`` of a fixed-step trajectory.

    Row 0 of every block repeats the last row of the previous one, so each
    block can be scanned for sign changes on its own.  Sample ``k`` sits at
    ``t0 + k*dt``; the final sample lands exactly on ``t0 + horizon``.
    """
    if not horizon > 0:
        raise InputError(f"horizon must be positive, got {horizon}")
    if not dt > 0:
        raise InputError(f"dt must be positive, got {dt}")
    x = np.asarray(x0, dtype=float).copy()
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (f.dim,):
        raise InputError(f"state has shape {x.shape}, plant dimension is {f.dim}")
    if u.shape != (f.control_dim,):
        raise InputError(f"control has shape {u.shape}, plant expects {f.control_dim}")
    n_steps = step_count(horizon, dt)
    last_dt = horizon - (n_steps - 1) * dt
    linear = isinstance(f, LinearField)
    done = 0
    while done < n_steps:
        k = min(chunk, n_steps - done)
        full = k if done + k < n_steps else k - 1
        idx = np.arange(done, done + k + 1)
        times = t0 + idx * dt
        states = np.empty((k + 1, x.shape[0]))
        states[0] = x
        if full:
            if linear:
                P, Q = f.block(dt, chunk)
                n = x.shape[0]
                with np.errstate(over="ignore", invalid="ignore"):
                    states[1:full + 1] = (P[:full * n] @ x).reshape(full, n) + Q[:full] @ u
            else:
                for j in range(full):
                    states[j + 1] = integrate_step(f, states[j], u, dt)
        if full < k:
            states[k] = integrate_step(f, states[full], u, last_dt)
            times[k] = t0 + horizon
        _check_finite(states, times[-1])
        x = states[-1]
        done += k
        yield times, states


@dataclass(eq=False)
class TrajectorySegment:
    """Dense samples of one constant-control stretch of trajectory."""

    field: object
    control: np.ndarray
    times: np.ndarray
    states: np.ndarray

    @property
    def start_state(self) -> np.ndarray:
        return self.states[0]

    @property
    def start_time(self) -> float:
        return float(self.times[0])

    def __len__(self):
        return len(self.times)


def flow(f, x0, u, horizon: float, dt: float = DEFAULT_DT, t0: float = 0.0) -> TrajectorySegment:
    """Integrate under constant ``u`` for ``horizon`` time units."""
    blocks = list(march(f, x0, u, horizon, dt, t0))
    times = np.concatenate([blocks[0][0]] + [b[0][1:] for b in blocks[1:]])
    states = np.concatenate([blocks[0][1]] + [b[1][1:] for b in blocks[1:]])
    return TrajectorySegment(f, np.atleast_1d(np.asarray(u, dtype=float)), times, states)


@dataclass(frozen=True)
class ControlSchedule:
    """Control symbols with strictly increasing activation times."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        entries = tuple((str(r), float(t)) for r, t in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise InputError("control schedule is empty")
        times = [t for _, t in entries]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InputError(f"activation times must be strictly increasing, got {times}")

    def value_at(self, alphabet: ControlAlphabet, t: float) -> np.ndarray:
        """The actuator output ``u(t)``; before the first activation it is undefined."""
        active = None
        for r, tc in self.entries:
            if tc <= t:
                active = r
        if active is None:
            raise InputError(f"no control active at t={t}")
        return alphabet.act(active)


def flow_schedule(f, alphabet: ControlAlphabet, x0, schedule: ControlSchedule,
                  until: float, dt: float = DEFAULT_DT) -> list[TrajectorySegment]:
    """Piecewise-constant integration: one segment per schedule entry up to ``until``."""
    segments = []
    x = np.asarray(x0, dtype=float)
    bounds = [t for _, t in schedule.entries[1:]] + [until]
    for (r, start), end in zip(schedule.entries, bounds):
        if end <= start:
            break
        seg = flow(f, x, alphabet.act(r), end - start, dt, t0=start)
        segments.append(seg)
        x = seg.states[-1]
    return segments


def closed_form_double_integrator(x0, u: float, t: float) -> np.ndarray:
    """Exact double-integrator state after time ``t`` under constant ``u``.

    An array of times gives one row per time.
    """
    x0 = np.asarray(x0, dtype=float)
    u = float(np.asarray(u, dtype=float).reshape(-1)[0])
    t = np.asarray(t, dtype=float)
    return np.stack([x0[0] + t * x0[1] + 0.5 * t * t * u, x0[1] + t * u], axis=-1)


DOUBLE_INTEGRATOR_CELLS = (
    CellLabel((1, 1), "p1"),
    CellLabel((-1, 1), "p2"),
    CellLabel((-1, -1), "p3"),
    CellLabel((1, -1), "p4"),
)


@dataclass(frozen=True, eq=False)
class PlantSystem:
    """Everything needed to abstract a plant: dynamics, actuator, partition, sampling box.

    ``cells`` pins state symbols for known sign vectors; other cells get
    symbols in discovery order.  The double integrator over the two
    coordinate axes pins the classic quadrant numbering automatically.
    """

    field: object
    controls: ControlAlphabet
    partition: PartitionSpec
    sampling_box: tuple[tuple[float, float], ...]
    cells: tuple[CellLabel, ...] = ()
    name: str = ""

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.sampling_box)
        object.__setattr__(self, "sampling_box", box)
        n = self.field.dim
        if len(box) != n:
            raise InputError(f"sampling box has {len(box)} intervals, plant dimension is {n}")
        if any(not hi > lo for lo, hi in box):
            raise InputError("sampling box must have positive volume")
        if self.controls.control_dim != self.field.control_dim:
            raise InputError(f"control values have dimension {self.controls.control_dim}, "
                             f"plant expects {self.field.control_dim}")
        if self.partition.dim is not None and self.partition.dim != n:
            raise InputError(f"partition dimension {self.partition.dim} != plant dimension {n}")
        if not self.cells and _is_canonical_double_integrator(self):
            object.__setattr__(self, "cells", DOUBLE_INTEGRATOR_CELLS)

    @property
    def dim(self) -> int:
        return self.field.dim

    def registry(self) -> CellRegistry:
        return CellRegistry(self.partition.size, self.cells)

    def act(self, r: str) -> np.ndarray:
        return self.controls.act(r)


def _is_canonical_double_integrator(system: PlantSystem) -> bool:
    fs = system.partition.functionals
    return (getattr(system.field, "name", None) == "double_integrator"
            and system.field == double_integrator_field()
            and len(fs) == 2
            and fs[0].normal == (1.0, 0.0) and fs[0].offset == 0.0
            and fs[1].normal == (0.0, 1.0) and fs[1].offset == 0.0)


def double_integrator_system(box: Sequence[Sequence[float]] = ((-5.0, 5.0), (-5.0, 5.0))) -> PlantSystem:
    return PlantSystem(
        field=double_integrator_field(),
        controls=ControlAlphabet((("r1", (-1.0,)), ("r2", (0.0,)), ("r3", (1.0,)))),
        partition=PartitionSpec.affine([[1.0, 0.0], [0.0, 1.0]]),
        sampling_box=tuple(tuple(b) for b in box),
        name="double_integrator",
    )
