"""Random covering sets on the torus: centers, displacements, stage unions,
nested truncations and dimension estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dyadic import (DyadicSet, check_level, count_positive_cells, fat_cantor_intervals,
                     max_level, rasterize_intervals, rasterize_rectangle, translate)
from .energy import DiscreteMeasure


class GeneratorEscapeError(ValueError):
    """A generator does not fit in the chart of the displacement family."""


def trial_seed(master: int, trial: int) -> int:
    """Documented split ``(master, trial) -> 64-bit seed`` via ``SeedSequence``."""
    ss = np.random.SeedSequence([int(master) & (2 ** 64 - 1), int(trial)])
    return int(ss.generate_state(1, np.uint64)[0])


# -- sampling -----------------------------------------------------------------

@dataclass
class SamplingDistribution:
    """``uniform`` on the torus or a cell-weighted ``density``."""

    kind: str = "uniform"
    d: int = 1
    density: DiscreteMeasure | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "density"):
            raise ValueError(f"unknown distribution {self.kind!r}")
        if self.kind == "density":
            if self.density is None:
                raise ValueError("density kind needs a DiscreteMeasure")
            if not math.isclose(self.density.total_mass, 1.0, rel_tol=1e-9):
                raise ValueError("density must have total mass 1")
            self.d = self.density.support.dim


def sample_centers(dist: SamplingDistribution, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. torus points, shape ``(n, d)``; pure function of the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if dist.kind == "uniform":
        return rng.random((n, dist.d))
    mu = dist.density
    cdf = np.cumsum(mu.weights)
    cdf /= cdf[-1]
    cells = np.searchsorted(cdf, rng.random(n), side="right")
    cells = np.minimum(cells, cdf.size - 1)
    idx = mu.support.indices()[cells]
    return (idx + rng.random((n, dist.d))) * 2.0 ** -mu.support.level


# -- displacement families ----------------------------------------------------------

@dataclass(frozen=True)
class DisplacementFamily:
    """``f(x, y) = x + y`` or ``x + y + eps sin(2 pi k x_i) sin(2 pi k y_i)``.

    The nonlinear map acts coordinatewise and is increasing in each argument,
    so images of boxes are boxes with mapped corners.
    """

    kind: str = "translation"
    eps: float = 0.0
    k: int = 1

    def __post_init__(self):
        if self.kind not in ("translation", "nonlinear"):
            raise ValueError(f"unknown displacement {self.kind!r}")
        if self.kind == "nonlinear":
            if int(self.k) != self.k or self.k < 1:
                raise ValueError("frequency k must be a positive integer")
            if not 0 <= self.contraction < 0.5:
                raise ValueError("need 2 pi k eps < 1/2")
            self._check_bound()

    @property
    def contraction(self) -> float:
        return 2 * math.pi * self.k * abs(self.eps) if self.kind == "nonlinear" else 0.0

    @property
    def C_u(self) -> float:
        c = self.contraction
        return (1 + c) / (1 - c)

    def _check_bound(self, samples: int = 257) -> None:
        t = np.linspace(0, 1, samples)
        X, Y = np.meshgrid(t, t, indexing="ij")
        for D in self.partials(X, Y):
            if np.max(np.abs(D)) > self.C_u + 1e-12 or np.max(1 / np.abs(D)) > self.C_u + 1e-12:
                raise ValueError("derivative bound violated on the sample grid")

    def partials(self, x, y):
        """``(d f_i / d x_i, d f_i / d y_i)`` (the Jacobians are diagonal)."""
        if self.kind == "translation":
            one = np.ones(np.broadcast(x, y).shape)
            return one, one
        a = 2 * math.pi * self.k
        dx = 1 + self.eps * a * np.cos(a * x) * np.sin(a * y)
        dy = 1 + self.eps * a * np.sin(a * x) * np.cos(a * y)
        return dx, dy

    def forward(self, x, y) -> np.ndarray:
        """Lifted (not reduced mod 1) value of ``f(x, y)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "translation":
            return x + y
        a = 2 * math.pi * self.k
        return x + y + self.eps * np.sin(a * x) * np.sin(a * y)

    def __call__(self, x, y) -> np.ndarray:
        return np.mod(self.forward(x, y), 1.0)

    def solve_x(self, z, y, tol: float = 1e-15, max_iter: int = 200) -> tuple[np.ndarray, np.ndarray]:
        """``x`` with ``f(x, y) = z`` by fixed-point iteration; returns ``(x, converged)``."""
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "translation":
            return np.mod(z - y, 1.0), np.ones(np.broadcast(z, y).shape, dtype=bool)
        a = 2 * math.pi * self.k
        sy = self.eps * np.sin(a * y)
        x = np.mod(z - y, 1.0)
        done = np.zeros(x.shape, dtype=bool)
        for _ in range(max_iter):
            nxt = np.mod(z - y - sy * np.sin(a * x), 1.0)
            step = np.abs(nxt - x)
            step = np.minimum(step, 1 - step)
            x = nxt
            done = step <= tol
            if done.all():
                break
        return x, done

    def solve_y(self, z, x, max_iter: int = 200) -> np.ndarray:
        """Lifted ``y`` near 0 with ``f(x, y) = z`` (``z - x`` taken in ``[-1/2, 1/2)``)."""
        u = np.mod(np.asarray(z, dtype=float) - np.asarray(x, dtype=float) + 0.5, 1.0) - 0.5
        if self.kind == "translation":
            return u
        a = 2 * math.pi * self.k
        sx = self.eps * np.sin(a * np.asarray(x, dtype=float))
        y = u
        for _ in range(max_iter):
            nxt = u - sx * np.sin(a * y)
            if np.max(np.abs(nxt - y)) <= 1e-15:
                y = nxt
                break
            y = nxt
        return y

    def box_image(self, x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact lifted image ``[f(x, lo), f(x, hi)]`` of the box ``[lo, hi]`` per coordinate."""
        return self.forward(x, lo), self.forward(x, hi)


# -- generator schedules -----------------------------------------------------------------

@dataclass
class GeneratorSchedule:
    """Deterministic generators ``A_n`` placed around the base point 0.

    ``ball``: radius ``c n^(-alpha/d)``.  ``rectangle``: sides
    ``(c n^-alpha, c2 n^-alpha2, ...)``.  ``fat_cantor_copy`` (d=1): the fat
    Cantor template scaled to diameter ``c n^-alpha``.  ``custom``: a callable
    ``n -> DyadicSet`` positioned with its cell ``0`` at the base point.
    """

    family: str = "ball"
    d: int = 1
    c: float = 1.0
    alpha: float = 2.0
    c2: float = 1.0
    alpha2: float = 2.0
    n_max: int = 100_000
    gap_ratios: tuple = ()
    custom: Callable[[int], DyadicSet] | None = None

    def __post_init__(self):
        if self.family not in ("ball", "rectangle", "fat_cantor_copy", "custom"):
            raise ValueError(f"unknown generator family {self.family!r}")
        if self.family == "fat_cantor_copy" and self.d != 1:
            raise ValueError("fat Cantor copies are one-dimensional")
        if self.family == "custom" and self.custom is None:
            raise ValueError("custom family needs a callable")
        if self.c <= 0:
            raise ValueError("size constant must be positive")

    def radius(self, n) -> np.ndarray:
        return self.c * np.asarray(n, dtype=float) ** (-self.alpha / self.d)

    def sides(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        a = np.minimum(self.c * n ** -self.alpha, 1.0)
        b = np.minimum(self.c2 * n ** -self.alpha2, 1.0)
        cols = [a] + [b] * (self.d - 1)
        return np.stack(cols, axis=-1)

    def diameter(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        if self.family == "ball":
            return np.minimum(2 * self.radius(n), math.sqrt(self.d))
        if self.family == "rectangle":
            return np.sqrt(np.sum(self.sides(n) ** 2, axis=-1))
        if self.family == "fat_cantor_copy":
            return np.minimum(self.c * n ** -self.alpha, 1.0)
        return np.array([_custom_diam(self.custom(int(k))) for k in np.atleast_1d(n)])

    def measure(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        if self.family == "ball":
            r = self.radius(n)
            return np.minimum(_ball_volume(self.d) * r ** self.d, 1.0)
        if self.family == "rectangle":
            return np.prod(self.sides(n), axis=-1)
        if self.family == "fat_cantor_copy":
            frac = float(np.prod([1 - g for g in self.gap_ratios]))
            return frac * self.diameter(n)
        return np.array([self.custom(int(k)).measure() for k in np.atleast_1d(n)])


def _ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _custom_diam(S: DyadicSet) -> float:
    idx = S.indices()
    if idx.size == 0:
        return 0.0
    span = idx.max(axis=0) - idx.min(axis=0) + 1
    return float(np.sqrt(np.sum(span ** 2.0))) * 2.0 ** -S.level


# -- rasterizing placed generators ------------------------------------------------------

def _interval_lists(centers, sched, disp, ks):
    """Lifted ``(lo, hi)`` arcs of ``f(x_k, A_k)`` for one-dimensional families."""
    x = centers[:, 0]
    if sched.family == "ball":
        r = sched.radius(ks)
        full = r >= 0.5
        lo, hi = disp.box_image(x, -r, r)
        lo = np.where(full, 0.0, lo)
        hi = np.where(full, 1.0, hi)
        return lo, hi
    if sched.family == "rectangle":
        a = sched.sides(ks)[:, 0]
        return disp.box_image(x, -a / 2, a / 2)
    if sched.family == "fat_cantor_copy":
        template = fat_cantor_intervals(sched.gap_ratios)
        t_lo = np.array([u for u, _ in template])
        t_hi = np.array([v for _, v in template])
        lam = sched.diameter(ks)
        ylo = (t_lo[None, :] - 0.5) * lam[:, None]
        yhi = (t_hi[None, :] - 0.5) * lam[:, None]
        lo, hi = disp.box_image(x[:, None], ylo, yhi)
        return lo.ravel(), hi.ravel()
    raise ValueError("interval lists only for analytic one-dimensional families")


def _placed_flat(x: np.ndarray, k: int, sched: GeneratorSchedule, disp: DisplacementFamily,
                 level: int) -> np.ndarray:
    """Outer raster (flat indices) of ``f(x, A_k)`` in dimension ``d >= 2``."""
    d = sched.d
    n = 1 << level
    if sched.family == "rectangle":
        s = sched.sides(k)
        lo, hi = disp.box_image(x, -s / 2, s / 2)
        return rasterize_rectangle(lo, np.minimum(hi - lo, 1.0), level).flat
    if sched.family == "custom":
        S = sched.custom(int(k))
        if disp.kind == "translation":
            return translate(S.refine(max(level, S.level)), x).parents(level).flat
        w = 2.0 ** -S.level
        idx = S.indices().astype(float)
        idx = np.where(idx >= (1 << S.level) / 2, idx - (1 << S.level), idx)
        out = []
        for row in idx:
            lo, hi = disp.box_image(x, row * w, (row + 1) * w)
            out.append(rasterize_rectangle(lo, hi - lo, level).flat)
        return np.unique(np.concatenate(out)) if out else np.empty(0, dtype=np.int64)
    # balls
    r = float(sched.radius(k))
    if r >= math.sqrt(d) / 2:
        return np.arange(n ** d, dtype=np.int64)
    if disp.kind == "translation":
        from .dyadic import rasterize_ball
        return rasterize_ball(x, r, level, "outer").flat
    if r >= 0.5:
        raise GeneratorEscapeError(
            f"ball radius {r:.4g} leaves the chart (-1/2, 1/2)^d under nonlinear displacement")
    # candidate cells inside the exact image of the bounding box, then a
    # preimage test at cell centers with a Lipschitz margin
    lo, hi = disp.box_image(x, -np.full(d, r), np.full(d, r))
    margin = disp.C_u * math.sqrt(d) * 2.0 ** -level
    box = rasterize_rectangle(lo, np.minimum(hi - lo, 1.0), level)
    centers = (box.indices() + 0.5) * 2.0 ** -level
    y = disp.solve_y(centers, x[None, :])
    keep = np.sqrt(np.sum(y * y, axis=1)) < r + margin
    return box.flat[keep]


def _expand(start: np.ndarray, length: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated ranges ``start[i] + arange(length[i])`` and their owner rows."""
    length = np.maximum(length, 0)
    rows = np.repeat(np.arange(start.size), length)
    offs = np.arange(rows.size) - np.repeat(np.cumsum(length) - length, length)
    return start[rows] + offs, rows


def _balls_flat_2d(x: np.ndarray, r: np.ndarray, owner: np.ndarray, level: int):
    """Outer rasters of many planar torus discs at once, scanned row by row."""
    n = 1 << level
    w = 1.0 / n
    r = np.minimum(r, math.sqrt(2) / 2 + w)
    a = np.floor((x[:, 0] - r) * n).astype(np.int64)
    b = np.ceil((x[:, 0] + r) * n).astype(np.int64)
    rows, ball = _expand(a, b - a)
    cx, cy, rr = x[ball, 0], x[ball, 1], r[ball]
    gx = np.maximum(np.maximum(rows * w - cx, cx - (rows + 1) * w), 0.0)
    hw = np.sqrt(np.maximum(rr * rr - gx * gx, 0.0))
    lo = np.floor((cy - hw) * n).astype(np.int64)
    hi = np.ceil((cy + hw) * n).astype(np.int64)
    length = np.where(gx < rr, np.minimum(hi - lo, n), 0)
    cols, row_of = _expand(lo, length)
    flat = (rows[row_of] % n) * n + cols % n
    return flat, owner[ball[row_of]]


def generator_rasters(centers: np.ndarray, sched: GeneratorSchedule, disp: DisplacementFamily,
                      ks: np.ndarray, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices covered by each placed generator and the generator index per entry."""
    check_level(sched.d, level)
    ks = np.asarray(ks, dtype=np.int64)
    if ks.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    n = 1 << level
    if sched.d == 1 and sched.family != "custom":
        lo, hi = _interval_lists(centers[ks - 1], sched, disp, ks)
        rep = lo.size // ks.size
        owner = np.repeat(ks, rep)
        a = np.floor(lo * n).astype(np.int64)
        b = np.ceil(hi * n).astype(np.int64)
        length = np.clip(b - a, 0, n)
        total = int(length.sum())
        starts = np.repeat(a, length)
        offs = np.arange(total) - np.repeat(np.cumsum(length) - length, length)
        return (starts + offs) % n, np.repeat(owner, length)
    if sched.d == 2 and sched.family == "ball" and disp.kind == "translation":
        return _balls_flat_2d(centers[ks - 1], sched.radius(ks), ks, level)
    flats, owners = [], []
    for k in ks:
        f = _placed_flat(centers[k - 1], int(k), sched, disp, level)
        flats.append(f)
        owners.append(np.full(f.size, k, dtype=np.int64))
    return np.concatenate(flats), np.concatenate(owners)


def stage_union(centers: np.ndarray, sched: GeneratorSchedule, disp: DisplacementFamily,
                block: tuple[int, int], level: int) -> DyadicSet:
    """Outer raster of ``union_{n1 < k <= n2} f(x_k, A_k)`` at ``level``."""
    n1, n2 = block
    if not 0 <= n1 <= n2 <= len(centers):
        raise ValueError(f"block {block} outside [0, {len(centers)}]")
    flat, _ = generator_rasters(centers, sched, disp, np.arange(n1 + 1, n2 + 1), level)
    return DyadicSet(sched.d, level, flat)


# -- nested truncations and box counting ----------------------------------------------------

@dataclass
class Chain:
    sets: list[DyadicSet]
    levels: list[int]
    blocks: list[tuple[int, int]]
    first_empty: int | None = None


def truncated_limsup(centers, sched, disp, blocks: Sequence[tuple[int, int]],
                     levels: Sequence[int]) -> Chain:
    """``E_J = intersection of the stage unions of blocks 1..J`` for every ``J``."""
    if len(blocks) != len(levels) or not blocks:
        raise ValueError("need one level per block")
    for (a, b), (c, e) in zip(blocks, blocks[1:]):
        if c < b:
            raise ValueError("blocks must be increasing")
    if any(l2 < l1 for l1, l2 in zip(levels, levels[1:])):
        raise ValueError("levels must be nondecreasing")
    sets, first_empty = [], None
    current = None
    for j, (blk, lvl) in enumerate(zip(blocks, levels)):
        U = stage_union(centers, sched, disp, blk, lvl)
        current = U if current is None else current & U
        if current.is_empty() and first_empty is None:
            first_empty = j
        sets.append(current)
    return Chain(sets, list(levels), [tuple(b) for b in blocks], first_empty)


@dataclass
class DimensionEstimate:
    value: float
    raw_slope: float
    scale_points: list  # (log 1/delta_j, log N_j)
    r_squared: float
    blocks: list = field(default_factory=list)
    local_slopes: list = field(default_factory=list)
    counts: list = field(default_factory=list)


def box_dimension_estimate(sets: Sequence[DyadicSet], levels: Sequence[int],
                           blocks: Sequence | None = None) -> DimensionEstimate:
    """Least-squares slope of ``log N*_{l_j}(S_j)`` against ``l_j log 2``.

    Sets with ``N* = 0`` contribute no scale point; fewer than three points
    (or fewer than two distinct levels) is an error.  The estimate is clamped
    to ``[0, d]``; the raw slope is kept.
    """
    if len(sets) != len(levels):
        raise ValueError("one level per set required")
    d = sets[0].dim if sets else 1
    counts = [count_positive_cells(S, int(l)) for S, l in zip(sets, levels)]
    pts = [(l * math.log(2), math.log(c)) for c, l in zip(counts, levels) if c > 0]
    if len(pts) < 3:
        raise ValueError(f"only {len(pts)} scale points; need at least 3")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.ptp(x) == 0:
        raise ValueError("scale points share a single level")
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    local = [float((y[i + 1] - y[i]) / (x[i + 1] - x[i])) if x[i + 1] != x[i] else float("nan")
             for i in range(len(x) - 1)]
    return DimensionEstimate(float(min(max(slope, 0.0), d)), float(slope),
                             [(float(a), float(b)) for a, b in pts], float(min(max(r2, 0.0), 1.0)),
                             list(blocks or []), local, counts)


def default_blocks(sched: GeneratorSchedule, rho: float = 4.0, level_cap: int | None = None,
                   n_max: int | None = None, min_size: int = 4) -> tuple[list, list]:
    """Geometric blocks anchored at the resolution limit.

    The last block ends at ``N_J``, the largest ``n <= n_max`` whose generator
    diameter is still at least ``2^-level_cap``; earlier ends are
    ``ceil(N_J / rho^(J-j))`` (kept while at least ``min_size``).  Each block is
    counted at the level matching its smallest generator diameter.
    """
    cap = max_level(sched.d) if level_cap is None else level_cap
    n_max = sched.n_max if n_max is None else n_max
    ns = np.arange(1, n_max + 1)
    diam = sched.diameter(ns)
    ok = np.flatnonzero(diam >= 2.0 ** -cap)
    if ok.size == 0:
        raise ValueError("every generator is below the resolution cap")
    NJ = int(ns[ok[-1]])
    ends = []
    j = 0
    while True:
        e = math.ceil(NJ / rho ** j)
        if e < min_size or (ends and e >= ends[-1]):
            break
        ends.append(e)
        j += 1
    ends = ends[::-1]
    blocks, levels = [], []
    prev = 0
    for e in ends:
        blocks.append((prev, e))
        lv = int(round(math.log2(1.0 / float(sched.diameter(e)))))
        levels.append(int(min(max(lv, 1), cap)))
        prev = e
    return blocks, levels


# -- packing saturation ------------------------------------------------------------------

@dataclass
class SaturationReport:
    ratio: float
    saturation_index: int | None
    count_F: int
    first_hits: np.ndarray  # per level-l cell of F: first covering index (or -1)
    curve: list  # (index, ratio) at log-spaced checkpoints


def packing_saturation_check(centers, sched, disp, F: DyadicSet, level: int, n: int,
                             n_max: int | None = None) -> SaturationReport:
    """``N*_l(F cap union_{i=n}^{n_max} f(x_i, A_i)) / N*_l(F)`` and when it reaches 1.

    A generator hits a level-``l`` cube ``Q`` when it meets ``F cap Q`` in
    positive measure; this is evaluated on the grid of ``F``.
    """
    if F.measure() == 0:
        raise ValueError("F must have positive measure")
    n_max = len(centers) if n_max is None else min(n_max, len(centers))
    Ff = F if F.level >= level else F.refine(level)
    parents = Ff.parents(level)
    countF = len(parents)
    INF = np.iinfo(np.int64).max
    first = np.full(len(Ff), INF, dtype=np.int64)
    if n <= n_max:
        ks = np.arange(n, n_max + 1)
        # chunk the generators to bound memory
        for c0 in range(0, ks.size, 4096):
            flat, owner = generator_rasters(centers, sched, disp, ks[c0:c0 + 4096], Ff.level)
            pos = np.searchsorted(Ff.flat, flat)
            pos = np.minimum(pos, len(Ff) - 1)
            hit = Ff.flat[pos] == flat
            np.minimum.at(first, pos[hit], owner[hit])
    idx = Ff.indices() >> (Ff.level - level)
    pflat = np.ravel_multi_index(tuple(idx.T), (1 << level,) * Ff.dim)
    ppos = np.searchsorted(parents.flat, pflat)
    per_parent = np.full(countF, INF, dtype=np.int64)
    np.minimum.at(per_parent, ppos, first)
    covered = per_parent < INF
    ratio = float(covered.mean())
    sat = int(per_parent.max()) if covered.all() else None
    checkpoints = np.unique(np.geomspace(max(n, 1), max(n_max, n), 40).astype(np.int64))
    curve = [(int(c), float(np.mean(per_parent <= c))) for c in checkpoints]
    hits = np.where(covered, per_parent, -1)
    return SaturationReport(ratio, sat, countF, hits, curve)


# -- inverse family and density interaction ---------------------------------------------------

@dataclass
class InverseReport:
    max_error: float
    max_inverse_derivative: float
    bound: float
    unconverged: int
    samples: int


def verify_inverse_family(disp: DisplacementFamily, samples: int, seed: int, d: int = 1,
                          h: float = 1e-5) -> InverseReport:
    """Recover ``x`` from ``z = f(x, y)`` and bound the inverse-family derivatives.

    The derivative of ``(z, y) -> X_z(y)`` is estimated by central differences
    and compared with ``C_u^2``.
    """
    rng = np.random.default_rng(seed)
    x = rng.random((samples, d))
    y = rng.random((samples, d))
    z = disp(x, y)
    xh, ok = disp.solve_x(z, y)
    err = np.abs(xh - x)
    err = np.minimum(err, 1 - err)
    # coordinatewise maps: derivative in y and in z per coordinate
    xp, _ = disp.solve_x(z, y + h)
    xm, _ = disp.solve_x(z, y - h)
    dy = _wrap(xp - xm) / (2 * h)
    zp, _ = disp.solve_x(z + h, y)
    zm, _ = disp.solve_x(z - h, y)
    dz = _wrap(zp - zm) / (2 * h)
    norm = float(max(np.max(np.abs(dy)), np.max(np.abs(dz))))
    return InverseReport(float(np.max(np.sqrt(np.sum(err ** 2, axis=1)))), norm,
                         disp.C_u ** 2, int(np.count_nonzero(~ok)), samples)


def _wrap(v):
    return np.mod(v + 0.5, 1.0) - 0.5


def _overlap_with_box(F: DyadicSet, lo: np.ndarray, hi: np.ndarray) -> float:
    """``L(F cap [lo, hi])`` for a lifted box (wraps mod 1), exact."""
    d = F.dim
    n = F.side_count
    w = 1.0 / n
    axes, weights = [], []
    for i in range(d):
        a, b = lo[i] * n, hi[i] * n
        cells = np.arange(math.floor(a), math.ceil(b))
        ov = (np.minimum(cells + 1, b) - np.maximum(cells, a)) * w
        axes.append(cells % n)
        weights.append(ov)
    grids = np.meshgrid(*axes, indexing="ij")
    wt = weights[0]
    for extra in weights[1:]:
        wt = np.multiply.outer(wt, extra)
    flat = np.ravel_multi_index(tuple(g.ravel() for g in grids), F.shape)
    pos = np.minimum(np.searchsorted(F.flat, flat), max(len(F) - 1, 0))
    inside = F.flat[pos] == flat if len(F) else np.zeros(flat.size, dtype=bool)
    return float(np.sum(wt.ravel()[inside]))


@dataclass
class InteractionReport:
    fraction: float
    stderr: float
    passes: bool
    samples: int
    vacuous: bool = False


def density_interaction_check(F: DyadicSet, disp: DisplacementFamily, E: DyadicSet, eps: float,
                              seed: int, samples: int = 2000) -> InteractionReport:
    """Monte Carlo share of ``x`` in ``F`` with ``L(F cap W_x(E)) >= (1-eps) L(W_x(E))``.

    ``W_x(E) = f(x, E)`` with ``E`` given around the base point 0 (cells with
    index above ``2^l/2`` are read as negative coordinates).  Images of cells
    are exact boxes, so the overlap ratio is exact for each sampled ``x``.
    """
    if E.measure() == 0:
        return InteractionReport(float("nan"), float("nan"), True, 0, vacuous=True)
    rng = np.random.default_rng(seed)
    idxF = F.indices()
    pick = rng.integers(0, len(F), samples)
    xs = (idxF[pick] + rng.random((samples, F.dim))) * 2.0 ** -F.level
    we = 2.0 ** -E.level
    ie = E.indices().astype(float)
    ie = np.where(ie >= (1 << E.level) / 2, ie - (1 << E.level), ie)
    if F.dim == 1:
        # L(F cap [0, u)) is piecewise linear in u; lifted to the real line by periodicity
        n = F.side_count
        cum = np.concatenate([[0.0], np.cumsum(F.mask().astype(float)) / n])
        grid = np.arange(n + 1) / n

        def mass_below(u):
            k = np.floor(u)
            return k * cum[-1] + np.interp(u - k, grid, cum)

        lo, hi = disp.box_image(xs[:, :1], ie[None, :, 0] * we, (ie[None, :, 0] + 1) * we)
        total = np.sum(hi - lo, axis=1)
        inside = np.sum(mass_below(hi) - mass_below(lo), axis=1)
        frac = float(np.mean(inside >= (1 - eps) * total - 1e-15))
        se = math.sqrt(max(frac * (1 - frac), 1e-12) / samples)
        return InteractionReport(frac, se, frac + 3 * se >= 1 - eps, samples)
    good = 0
    for x in xs:
        inside = total = 0.0
        for row in ie:
            lo, hi = disp.box_image(x, row * we, (row + 1) * we)
            total += float(np.prod(hi - lo))
            inside += _overlap_with_box(F, lo, hi)
        good += inside >= (1 - eps) * total
    frac = good / samples
    se = math.sqrt(max(frac * (1 - frac), 1e-12) / samples)
    return InteractionReport(frac, se, frac + 3 * se >= 1 - eps, samples)
