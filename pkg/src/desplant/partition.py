"""Hypersurface partitions of the state space and the cells they induce.

A partition is an ordered list of scalar functionals ``h_1 .. h_N``.  The
sign pattern of all functionals at a state (its *quality*) identifies the
open cell containing the state; states on some kernel ``h_i = 0`` belong to
no cell.
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import BoundaryStateError, CapacityError, InputError

DEFAULT_EPS_H = 1e-9
MAX_ENUMERATION_N = 20

SignVector = tuple[int, ...]


def _unit_circle(x):
    return np.sum(np.square(x), axis=-1) - 1.0


def _parabola(x):
    # x^1 - (x^2)^2 / 2: the integral curve of the double integrator under u=+1
    return x[..., 0] - 0.5 * np.square(x[..., 1])


# name -> (callable on (..., n) arrays, required dimension or None)
BUILTIN_FUNCTIONALS: dict[str, tuple[Callable[[np.ndarray], np.ndarray], Optional[int]]] = {
    "unit_circle": (_unit_circle, None),
    "parabola": (_parabola, 2),
}


@dataclass(frozen=True)
class Functional:
    """One partition functional ``h_i``.

    Affine functionals evaluate ``normal . x + offset``; otherwise ``builtin``
    names an entry of :data:`BUILTIN_FUNCTIONALS`.
    """

    id: int
    normal: Optional[tuple[float, ...]] = None
    offset: float = 0.0
    builtin: Optional[str] = None

    def __post_init__(self):
        if (self.normal is None) == (self.builtin is None):
            raise InputError(f"functional {self.id}: give exactly one of normal or builtin")
        if self.normal is not None:
            normal = tuple(float(c) for c in self.normal)
            if not normal or not all(np.isfinite(normal)) or not any(normal):
                raise InputError(f"functional {self.id}: normal vector must be finite and nonzero")
            object.__setattr__(self, "normal", normal)
            object.__setattr__(self, "offset", float(self.offset))
        elif self.builtin not in BUILTIN_FUNCTIONALS:
            raise InputError(f"functional {self.id}: unknown builtin {self.builtin!r}")

    @property
    def is_affine(self) -> bool:
        return self.normal is not None

    @property
    def dim(self) -> Optional[int]:
        if self.normal is not None:
            return len(self.normal)
        return BUILTIN_FUNCTIONALS[self.builtin][1]

    def __call__(self, x):
        return evaluate(self, x)


def evaluate(f: Functional, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError("state must be a 1-d vector")
    if f.dim is not None and x.shape[0] != f.dim:
        raise InputError(f"functional {f.id} expects dimension {f.dim}, got {x.shape[0]}")
    if f.normal is not None:
        return float(np.dot(f.normal, x) + f.offset)
    return float(BUILTIN_FUNCTIONALS[f.builtin][0](x))


@dataclass(frozen=True)
class PartitionSpec:
    functionals: tuple[Functional, ...]

    def __post_init__(self):
        fs = tuple(self.functionals)
        object.__setattr__(self, "functionals", fs)
        if not fs:
            raise InputError("a partition needs at least one functional")
        ids = [f.id for f in fs]
        if ids != list(range(1, len(fs) + 1)):
            raise InputError(f"functional ids must be 1..{len(fs)} in order, got {ids}")
        dims = {f.dim for f in fs if f.dim is not None}
        if len(dims) > 1:
            raise InputError(f"functionals disagree on state dimension: {sorted(dims)}")

    @classmethod
    def affine(cls, normals, offsets=None) -> "PartitionSpec":
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        if offsets is None:
            offsets = np.zeros(len(normals))
        return cls(tuple(
            Functional(i + 1, tuple(w), float(b)) for i, (w, b) in enumerate(zip(normals, offsets))
        ))

    @property
    def size(self) -> int:
        return len(self.functionals)

    @property
    def dim(self) -> Optional[int]:
        for f in self.functionals:
            if f.dim is not None:
                return f.dim
        return None

    def values(self, xs) -> np.ndarray:
        """Functional values for a batch of states, shape ``(..., N)``."""
        xs = np.asarray(xs, dtype=float)
        if self.dim is not None and xs.shape[-1] != self.dim:
            raise InputError(f"state dimension {xs.shape[-1]} does not match partition dimension {self.dim}")
        cols = []
        for f in self.functionals:
            if f.normal is not None:
                cols.append(xs @ np.asarray(f.normal) + f.offset)
            else:
                cols.append(BUILTIN_FUNCTIONALS[f.builtin][0](xs))
        return np.stack(cols, axis=-1)


def signs_of(values, eps_h: float = DEFAULT_EPS_H) -> np.ndarray:
    """sgn with a dead band: ``|v| < eps_h`` counts as zero."""
    values = np.asarray(values, dtype=float)
    out = np.sign(values).astype(np.int8)
    out[np.abs(values) < eps_h] = 0
    return out


def quality(p: PartitionSpec, x, eps_h: float = DEFAULT_EPS_H) -> SignVector:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError("state must be a 1-d vector")
    return tuple(int(s) for s in signs_of(p.values(x), eps_h))


def is_consistent(b: Sequence[int]) -> bool:
    return all(s != 0 for s in b)


@dataclass(frozen=True)
class CellLabel:
    signs: SignVector
    symbol: str = field(default="", compare=False)

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if not signs or any(s not in (-1, 1) for s in signs):
            raise InputError(f"cell signs must be nonzero +-1 entries, got {signs}")
        object.__setattr__(self, "signs", signs)

    def __str__(self):
        return self.symbol or format_signs(self.signs)


def format_signs(b: Sequence[int]) -> str:
    return "[" + " ".join(str(int(s)) for s in b) + "]"


class CellRegistry:
    """Bijection between discovered sign vectors and state symbols ``p1, p2, ...``.

    Symbols are handed out in order of first registration.  Inserts are
    serialized by a lock; lookups are plain dict reads.
    """

    def __init__(self, n_functionals: int, cells: Iterable[CellLabel] = ()):
        self.n_functionals = n_functionals
        self._by_signs: dict[SignVector, CellLabel] = {}
        self._by_symbol: dict[str, CellLabel] = {}
        self._lock = threading.Lock()
        for cell in cells:
            self._insert(cell)

    def _insert(self, cell: CellLabel) -> CellLabel:
        if len(cell.signs) != self.n_functionals:
            raise InputError(f"cell {cell} has {len(cell.signs)} signs, expected {self.n_functionals}")
        if cell.signs in self._by_signs or cell.symbol in self._by_symbol:
            raise InputError(f"cell {cell.symbol} {format_signs(cell.signs)} registered twice")
        self._by_signs[cell.signs] = cell
        self._by_symbol[cell.symbol] = cell
        return cell

    def register(self, signs: Sequence[int]) -> CellLabel:
        key = tuple(int(s) for s in signs)
        cell = self._by_signs.get(key)
        if cell is not None:
            return cell
        with self._lock:
            cell = self._by_signs.get(key)
            if cell is None:
                n = len(self._by_signs) + 1
                symbol = f"p{n}"
                while symbol in self._by_symbol:
                    n += 1
                    symbol = f"p{n}"
                cell = self._insert(CellLabel(key, symbol))
            return cell

    def get(self, signs: Sequence[int]) -> Optional[CellLabel]:
        return self._by_signs.get(tuple(int(s) for s in signs))

    def by_symbol(self, symbol: str) -> CellLabel:
        try:
            return self._by_symbol[symbol]
        except KeyError:
            raise InputError(f"unknown state symbol {symbol!r}") from None

    def __contains__(self, signs) -> bool:
        return tuple(signs) in self._by_signs

    def __iter__(self):
        return iter(list(self._by_signs.values()))

    def __len__(self):
        return len(self._by_signs)

    def copy(self) -> "CellRegistry":
        return CellRegistry(self.n_functionals, self)


def cell_of(p: PartitionSpec, reg: CellRegistry, x, eps_h: float = DEFAULT_EPS_H) -> CellLabel:
    b = quality(p, x, eps_h)
    if not is_consistent(b):
        on = [i + 1 for i, s in enumerate(b) if s == 0]
        names = ", ".join(f"h{i}" for i in on)
        raise BoundaryStateError(f"state {np.asarray(x, float).tolist()} lies on the kernel of {names}")
    return reg.register(b)


def adjacency(a, b) -> Optional[tuple[int, str]]:
    """Index (1-based) and direction of the single kernel separating two cells.

    Direction is ``"+"`` when crossing from ``a`` into ``b`` enters the
    positive halfspace.  Returns None unless exactly one component differs.
    """
    sa = a.signs if isinstance(a, CellLabel) else tuple(a)
    sb = b.signs if isinstance(b, CellLabel) else tuple(b)
    if len(sa) != len(sb):
        raise InputError("cells come from partitions of different size")
    diff = [i for i, (x, y) in enumerate(zip(sa, sb)) if x != y]
    if len(diff) != 1:
        return None
    i = diff[0]
    if sa[i] * sb[i] != -1:
        return None
    return i + 1, "+" if sb[i] > 0 else "-"


def enumerate_candidate_cells(p: PartitionSpec) -> list[SignVector]:
    """All 2^N consistent sign vectors, lexicographic with -1 before +1.

    These are candidates only: a sign pattern need not be realized by any
    state.
    """
    if p.size > MAX_ENUMERATION_N:
        raise CapacityError(f"refusing to enumerate 2^{p.size} sign vectors (limit N={MAX_ENUMERATION_N})")
    return list(itertools.product((-1, 1), repeat=p.size))


def flip(signs: Sequence[int], index: int) -> SignVector:
    """Signs with component ``index`` (1-based) negated."""
    out = list(signs)
    out[index - 1] = -out[index - 1]
    return tuple(out)
