"""Dyadic-cell sets on the d-dimensional torus.

A :class:`DyadicSet` is a finite union of half-open cells
``[0, 2^-l)^d + 2^-l * index`` stored as a sorted array of C-order flat
indices.  Every measure-theoretic quantity in the package (Lebesgue measure,
energies, contents, positive-cell counts) is computed exactly on this
representation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# per-dimension level caps; beyond d=3 the budget is 2^24 cells
MAX_LEVEL = {1: 24, 2: 12, 3: 8}


class ResourceCapError(RuntimeError):
    """Raised when a request would exceed the cell-count budget."""


def max_level(d: int) -> int:
    return MAX_LEVEL.get(d, 24 // d)


def check_level(d: int, level: int) -> None:
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if level < 0:
        raise ValueError(f"level must be >= 0, got {level}")
    if level > max_level(d):
        raise ResourceCapError(
            f"level {level} exceeds the cap {max_level(d)} for d={d}")


@dataclass(frozen=True)
class DyadicCell:
    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        n = 1 << self.level
        if any(not 0 <= i < n for i in self.index):
            raise ValueError(f"index {self.index} out of range at level {self.level}")

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0 ** -self.level

    @property
    def corner(self) -> np.ndarray:
        return np.asarray(self.index, dtype=float) * self.side


class DyadicSet:
    """Immutable union of level-``level`` dyadic cells of the ``dim``-torus."""

    __slots__ = ("dim", "level", "flat")

    def __init__(self, dim: int, level: int, flat=None, *, _trusted: bool = False):
        check_level(dim, level)
        if flat is None:
            flat = np.empty(0, dtype=np.int64)
        flat = np.asarray(flat, dtype=np.int64)
        if flat.ndim > 1 and not _trusted:
            raise ValueError("flat indices must be one-dimensional; use from_indices for tuples")
        flat = flat.ravel()
        if not _trusted:
            flat = np.unique(flat)
            if flat.size and (flat[0] < 0 or flat[-1] >= 1 << (level * dim)):
                raise ValueError("flat index out of range")
        flat.setflags(write=False)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "level", level)
        object.__setattr__(self, "flat", flat)

    def __setattr__(self, key, value):
        raise AttributeError("DyadicSet is immutable")

    # -- constructors ---------------------------------------------------
    @classmethod
    def empty(cls, dim: int, level: int) -> "DyadicSet":
        return cls(dim, level, _trusted=True)

    @classmethod
    def full(cls, dim: int, level: int) -> "DyadicSet":
        check_level(dim, level)
        return cls(dim, level, np.arange(1 << (level * dim), dtype=np.int64), _trusted=True)

    @classmethod
    def from_indices(cls, dim: int, level: int, indices) -> "DyadicSet":
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, dim)
        n = 1 << level
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError("index out of range")
        if idx.shape[0] == 0:
            return cls.empty(dim, level)
        flat = np.ravel_multi_index(tuple(idx.T), (n,) * dim)
        return cls(dim, level, flat)

    @classmethod
    def from_mask(cls, mask: np.ndarray, level: int | None = None) -> "DyadicSet":
        mask = np.asarray(mask, dtype=bool)
        d = mask.ndim
        n = mask.shape[0]
        if any(s != n for s in mask.shape) or n & (n - 1):
            raise ValueError("mask must be a cube with power-of-two side")
        lvl = n.bit_length() - 1
        if level is not None and level != lvl:
            raise ValueError("mask side does not match level")
        return cls(d, lvl, np.flatnonzero(mask.ravel()), _trusted=True)

    @classmethod
    def from_cells(cls, cells: Iterable[DyadicCell]) -> "DyadicSet":
        cells = list(cells)
        if not cells:
            raise ValueError("need at least one cell to infer dimension")
        lvl = max(c.level for c in cells)
        d = cells[0].dim
        parts = [cls.from_indices(d, c.level, [c.index]).refine(lvl) for c in cells]
        out = parts[0]
        for p in parts[1:]:
            out = out | p
        return out

    # -- basic views -----------------------------------------------------
    @property
    def side_count(self) -> int:
        return 1 << self.level

    @property
    def cell_volume(self) -> float:
        return 2.0 ** (-self.level * self.dim)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side_count,) * self.dim

    def __len__(self) -> int:
        return int(self.flat.size)

    def is_empty(self) -> bool:
        return self.flat.size == 0

    def indices(self) -> np.ndarray:
        """Integer index vectors, shape ``(len(self), dim)``."""
        if self.flat.size == 0:
            return np.empty((0, self.dim), dtype=np.int64)
        return np.stack(np.unravel_index(self.flat, self.shape), axis=1).astype(np.int64)

    def mask(self) -> np.ndarray:
        m = np.zeros(1 << (self.level * self.dim), dtype=bool)
        m[self.flat] = True
        return m.reshape(self.shape)

    def measure(self) -> float:
        return len(self) * self.cell_volume

    def cells(self) -> list[DyadicCell]:
        return [DyadicCell(self.level, tuple(int(v) for v in row)) for row in self.indices()]

    # -- level changes ----------------------------------------------------
    def refine(self, level: int) -> "DyadicSet":
        if level == self.level:
            return self
        if level < self.level:
            raise ValueError("refine() only goes to finer levels; use parents()")
        check_level(self.dim, level)
        k = level - self.level
        idx = self.indices() << k
        sub = np.stack(np.meshgrid(*([np.arange(1 << k)] * self.dim), indexing="ij"),
                       axis=-1).reshape(-1, self.dim)
        fine = (idx[:, None, :] + sub[None, :, :]).reshape(-1, self.dim)
        n = 1 << level
        flat = np.ravel_multi_index(tuple(fine.T), (n,) * self.dim) if fine.size else fine[:, 0]
        return DyadicSet(self.dim, level, np.sort(flat), _trusted=True)

    def parents(self, level: int) -> "DyadicSet":
        """Level-``level`` cells meeting this set in positive measure."""
        if level > self.level:
            return self.refine(level)
        if level == self.level:
            return self
        k = self.level - level
        idx = self.indices() >> k
        n = 1 << level
        if idx.shape[0] == 0:
            return DyadicSet.empty(self.dim, level)
        flat = np.ravel_multi_index(tuple(idx.T), (n,) * self.dim)
        return DyadicSet(self.dim, level, np.unique(flat), _trusted=True)

    def coarsest(self) -> "DyadicSet":
        """Equivalent set at the coarsest level that represents it exactly."""
        s = self
        while s.level > 0:
            p = s.parents(s.level - 1)
            if len(p) * (1 << s.dim) != len(s):
                break
            s = p
        return s

    # -- comparisons --------------------------------------------------------
    def _co(self, other: "DyadicSet") -> tuple["DyadicSet", "DyadicSet"]:
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        lvl = max(self.level, other.level)
        return self.refine(lvl), other.refine(lvl)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DyadicSet):
            return NotImplemented
        if self.dim != other.dim:
            return False
        a, b = self._co(other)
        return np.array_equal(a.flat, b.flat)

    def __hash__(self) -> int:
        c = self.coarsest()
        return hash((c.dim, c.level, c.flat.tobytes()))

    def issubset(self, other: "DyadicSet") -> bool:
        a, b = self._co(other)
        return bool(np.isin(a.flat, b.flat, assume_unique=True).all())

    __le__ = issubset

    def __repr__(self) -> str:
        return f"DyadicSet(dim={self.dim}, level={self.level}, cells={len(self)}, measure={self.measure():.6g})"

    # -- set algebra ------------------------------------------------------------
    def __or__(self, other: "DyadicSet") -> "DyadicSet":
        a, b = self._co(other)
        return DyadicSet(a.dim, a.level, np.union1d(a.flat, b.flat), _trusted=True)

    def __and__(self, other: "DyadicSet") -> "DyadicSet":
        a, b = self._co(other)
        return DyadicSet(a.dim, a.level, np.intersect1d(a.flat, b.flat, assume_unique=True),
                         _trusted=True)

    def __sub__(self, other: "DyadicSet") -> "DyadicSet":
        a, b = self._co(other)
        return DyadicSet(a.dim, a.level, np.setdiff1d(a.flat, b.flat, assume_unique=True),
                         _trusted=True)

    def complement(self) -> "DyadicSet":
        return DyadicSet.full(self.dim, self.level) - self

    def shift(self, offset: Sequence[int]) -> "DyadicSet":
        """Exact translation by ``offset`` cells (mod 2^level)."""
        offset = np.asarray(offset, dtype=np.int64).reshape(self.dim)
        idx = (self.indices() + offset) % self.side_count
        return DyadicSet.from_indices(self.dim, self.level, idx)


def union(*sets: DyadicSet) -> DyadicSet:
    out = sets[0]
    for s in sets[1:]:
        out = out | s
    return out


def intersect(*sets: DyadicSet) -> DyadicSet:
    out = sets[0]
    for s in sets[1:]:
        out = out & s
    return out


def snap(v, level: int) -> tuple[np.ndarray, float]:
    """Nearest grid shift for a torus vector and the Euclidean snap error."""
    v = np.mod(np.asarray(v, dtype=float).ravel(), 1.0)
    n = 1 << level
    k = np.rint(v * n).astype(np.int64)
    err = np.abs(v - k / n)
    err = np.minimum(err, 1.0 - err)
    return k % n, float(np.sqrt(np.sum(err ** 2)))


def translate(S: DyadicSet, v, with_error: bool = False):
    """Translate ``S`` by the torus vector ``v``, snapped to the grid of ``S``.

    The snap error is at most ``sqrt(d) * 2^-level / 2``; pass
    ``with_error=True`` to get ``(set, error)``.
    """
    k, err = snap(v, S.level)
    if k.size != S.dim:
        raise ValueError("dimension mismatch")
    out = S.shift(k)
    return (out, err) if with_error else out


def count_positive_cells(S: DyadicSet, level: int) -> int:
    """``N*_level(S)``: number of level cells meeting ``S`` in positive measure."""
    if level >= S.level:
        return len(S) << ((level - S.level) * S.dim)
    return len(S.parents(level))


def torus_distance(p, q) -> float | np.ndarray:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape[-1:] != q.shape[-1:]:
        raise ValueError("dimension mismatch")
    u = np.abs(np.mod(p - q, 1.0))
    u = np.minimum(u, 1.0 - u)
    return np.sqrt(np.sum(u * u, axis=-1))


# -- rasterizers -------------------------------------------------------------

def _circle_gap(c: float, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min and max circle distance from point ``c`` to arcs ``[lo, hi]``."""
    # distances to the arc endpoints and whether c lies on the arc
    c = c % 1.0
    rel_lo = (lo - c) % 1.0
    length = hi - lo
    inside = (rel_lo == 0) | (rel_lo + length >= 1.0)
    d_lo = np.minimum(rel_lo, 1.0 - rel_lo)
    rel_hi = (hi - c) % 1.0
    d_hi = np.minimum(rel_hi, 1.0 - rel_hi)
    dmin = np.where(inside, 0.0, np.minimum(d_lo, d_hi))
    # farthest point: antipode of c if it lies on the arc, else an endpoint
    anti = (c + 0.5) % 1.0
    rel_anti = (anti - lo) % 1.0
    dmax = np.where(rel_anti <= length, 0.5, np.maximum(d_lo, d_hi))
    return dmin, dmax


def _axis_candidates(c: float, r: float, level: int) -> np.ndarray:
    n = 1 << level
    lo = math.floor((c - r) * n) - 1
    hi = math.floor((c + r) * n) + 1
    if hi - lo + 1 >= n:
        return np.arange(n, dtype=np.int64)
    return np.unique(np.arange(lo, hi + 1, dtype=np.int64) % n)


def rasterize_ball(center, r: float, level: int, mode: str = "outer", d: int | None = None) -> DyadicSet:
    """Cells inside (``inner``) or meeting (``outer``) the open torus ball."""
    if r <= 0:
        raise ValueError("radius must be positive")
    if mode not in ("inner", "outer"):
        raise ValueError(f"unknown mode {mode!r}")
    center = np.atleast_1d(np.asarray(center, dtype=float)) % 1.0
    d = center.size if d is None else d
    check_level(d, level)
    n = 1 << level
    h = 1.0 / n
    if r >= math.sqrt(d) / 2:
        return DyadicSet.full(d, level)
    axes_min, axes_max, axes_idx = [], [], []
    for i in range(d):
        idx = _axis_candidates(center[i], r, level)
        dmin, dmax = _circle_gap(center[i], idx * h, (idx + 1) * h)
        axes_idx.append(idx)
        axes_min.append(dmin ** 2)
        axes_max.append(dmax ** 2)
    if mode == "outer":
        total = _outer_sum(axes_min)
        keep = total < r * r
    else:
        total = _outer_sum(axes_max)
        keep = total <= r * r
    grids = np.meshgrid(*axes_idx, indexing="ij")
    sel = [g[keep] for g in grids]
    if not sel[0].size:
        return DyadicSet.empty(d, level)
    flat = np.ravel_multi_index(tuple(sel), (n,) * d)
    return DyadicSet(d, level, flat)


def _outer_sum(parts: list[np.ndarray]) -> np.ndarray:
    total = parts[0]
    for p in parts[1:]:
        total = np.add.outer(total, p)
    return total


def rasterize_rectangle(corner, sides, level: int, mode: str = "outer") -> DyadicSet:
    """Axis-aligned box ``corner + [0, sides)`` on the torus."""
    corner = np.atleast_1d(np.asarray(corner, dtype=float)) % 1.0
    sides = np.atleast_1d(np.asarray(sides, dtype=float))
    if corner.shape != sides.shape:
        raise ValueError("corner and sides must have the same length")
    if np.any(sides <= 0) or np.any(sides > 1):
        raise ValueError("sides must lie in (0, 1]")
    if mode not in ("inner", "outer"):
        raise ValueError(f"unknown mode {mode!r}")
    d = corner.size
    check_level(d, level)
    n = 1 << level
    axes = []
    for c, s in zip(corner, sides):
        if s >= 1.0:
            axes.append(np.arange(n, dtype=np.int64))
            continue
        a, b = c * n, (c + s) * n
        if mode == "outer":
            lo, hi = math.floor(a), math.ceil(b) - 1
        else:
            lo, hi = math.ceil(a), math.floor(b) - 1
        if hi < lo:
            return DyadicSet.empty(d, level)
        if hi - lo + 1 >= n:
            axes.append(np.arange(n, dtype=np.int64))
        else:
            axes.append(np.arange(lo, hi + 1, dtype=np.int64) % n)
    grids = np.meshgrid(*axes, indexing="ij")
    flat = np.ravel_multi_index(tuple(g.ravel() for g in grids), (n,) * d)
    return DyadicSet(d, level, flat)


def rasterize_intervals(lo: np.ndarray, hi: np.ndarray, level: int, mode: str = "outer") -> DyadicSet:
    """Union of 1-d torus arcs ``[lo_k, hi_k)`` (``hi >= lo``; wraps mod 1)."""
    check_level(1, level)
    n = 1 << level
    lo = np.asarray(lo, dtype=float).ravel() * n
    hi = np.asarray(hi, dtype=float).ravel() * n
    if mode == "outer":
        a = np.floor(lo).astype(np.int64)
        b = np.ceil(hi).astype(np.int64)
    elif mode == "inner":
        a = np.ceil(lo).astype(np.int64)
        b = np.floor(hi).astype(np.int64)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    length = b - a
    if np.any(length >= n):
        return DyadicSet.full(1, level)
    ok = length > 0
    a, length = a[ok] % n, length[ok]
    diff = np.zeros(n + 1, dtype=np.int64)
    end = a + length
    wrap = end > n
    np.add.at(diff, a, 1)
    np.add.at(diff, np.where(wrap, n, end), -1)
    np.add.at(diff, np.zeros(int(wrap.sum()), dtype=np.int64), 1)
    np.add.at(diff, end[wrap] - n, -1)
    cover = np.cumsum(diff[:n]) > 0
    return DyadicSet(1, level, np.flatnonzero(cover), _trusted=True)


# -- example sets -------------------------------------------------------------

def svc_gap_ratios(stages: int) -> list[float]:
    """Relative gap ratios of the Smith-Volterra-Cantor set (removes 1/2 in total).

    Stage ``k`` removes an interval of length ``4^-k`` from the middle of each
    of the ``2^(k-1)`` remaining intervals.
    """
    ratios = []
    length = 1.0
    for k in range(1, stages + 1):
        gap = 4.0 ** -k
        ratios.append(gap / length)
        length = (length - gap) / 2
    return ratios


def geometric_gap_ratios(q: float, stages: int) -> list[float]:
    """Relative gap ratios ``q, q^2, ...``: stage ``k`` removes the fraction ``q^k``
    from the middle of every remaining interval."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    return [q ** k for k in range(1, stages + 1)]


def fat_cantor_intervals(gap_ratios: Sequence[float], min_gap: float = 0.0) -> list[tuple[float, float]]:
    """Retained intervals after applying the gap schedule to ``[0, 1]``.

    Stages whose gaps would be shorter than ``min_gap`` are not applied.
    """
    for g in gap_ratios:
        if not 0 <= g < 1:
            raise ValueError(f"gap ratio {g} must lie in [0, 1)")
    ivs = [(0.0, 1.0)]
    for g in gap_ratios:
        length = ivs[0][1] - ivs[0][0]
        if g == 0:
            continue
        if g * length < min_gap:
            break
        nxt = []
        for a, b in ivs:
            m, half = (a + b) / 2, g * (b - a) / 2
            nxt.append((a, m - half))
            nxt.append((m + half, b))
        ivs = nxt
    return ivs


def fat_cantor(gap_ratios: Sequence[float], level: int) -> DyadicSet:
    """Positive-measure Cantor set truncated at resolution ``2^-level`` (d=1).

    Gaps are removed outward, so every retained cell lies inside the
    retained intervals of the last applied stage.
    """
    if np.prod([1 - g for g in gap_ratios]) <= 0:
        raise ValueError("gap schedule has zero limiting measure")
    if sum(gap_ratios) == math.inf:
        raise ValueError("gap schedule is not summable")
    ivs = fat_cantor_intervals(gap_ratios, min_gap=2.0 ** -level)
    lo = np.array([a for a, _ in ivs])
    hi = np.array([b for _, b in ivs])
    out = rasterize_intervals(lo, hi, level, mode="inner")
    if out.is_empty():
        raise ValueError("gap schedule leaves nothing at this resolution")
    return out


def fat_cantor_product(gap_ratios: Sequence[float], level: int, d: int = 2) -> DyadicSet:
    """``d``-fold product of :func:`fat_cantor`."""
    line = fat_cantor(gap_ratios, level).mask()
    mask = line
    for _ in range(d - 1):
        mask = np.multiply.outer(mask, line)
    return DyadicSet.from_mask(mask, level)


def fat_cantor_measure(gap_ratios: Sequence[float]) -> float:
    return float(np.prod([1 - g for g in gap_ratios]))


def example_two_cubes(r1: float, r2: float, rho: float, n: int, level: int, d: int = 2,
                      q1_corner=None, q2_corner=None) -> DyadicSet:
    """``Q1 ∪ F_Q2``: a solid cube next to a cube split into ``2^(nd)``
    concentric ``rho``-shrunk subcubes.

    Default placement: ``Q2 = [0, r2)^d`` and ``Q1`` starting at 1/2 in the
    first coordinate.
    """
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    q2 = np.zeros(d) if q2_corner is None else np.asarray(q2_corner, dtype=float)
    q1 = np.full(d, 0.0) if q1_corner is None else np.asarray(q1_corner, dtype=float)
    if q1_corner is None:
        q1[0] = 0.5
    # disjointness on the torus, axis by axis
    overlap = True
    for i in range(d):
        a = (q1[i] - q2[i]) % 1.0
        if a >= r2 and a + r1 <= 1.0:
            overlap = False
    if overlap:
        raise ValueError("Q1 and Q2 overlap")
    A = rasterize_rectangle(q1, [r1] * d, level, mode="inner")
    m = 1 << n
    sub = r2 / m
    inner = rho * sub
    pad = (sub - inner) / 2
    grid = np.stack(np.meshgrid(*([np.arange(m)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    pieces = [A]
    for g in grid:
        corner = q2 + g * sub + pad
        piece = rasterize_rectangle(corner, [inner] * d, level, mode="inner")
        pieces.append(piece)
    return union(*pieces)


# -- serialization -------------------------------------------------------------

def dumps(S: DyadicSet) -> str:
    lines = [f"{S.dim} {S.level} {len(S)}"]
    lines.extend(" ".join(str(int(v)) for v in row) for row in S.indices())
    return "\n".join(lines) + "\n"


def loads(text: str) -> DyadicSet:
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    if not rows:
        raise ValueError("empty document")
    d, level, count = (int(v) for v in rows[0])
    body = rows[1:]
    if len(body) != count:
        raise ValueError(f"header says {count} cells, found {len(body)}")
    if count == 0:
        return DyadicSet.empty(d, level)
    idx = np.array(body, dtype=np.int64)
    if idx.shape[1] != d:
        raise ValueError("index vector length does not match dimension")
    return DyadicSet.from_indices(d, level, idx)
