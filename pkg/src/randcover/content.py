"""Hausdorff-content upper bounds, the G functional and critical exponents.

* :func:`hausdorff_content_upper` is the exact dyadic net content, computed by
  dynamic programming on the dyadic tree.
* :func:`G_lower` is a certified lower bound on ``G_h(F) = sup g_h(F')`` over
  positive-measure subsets ``F'``: every candidate is a genuine subset.
* :func:`lem_leb_split` thins a set to a ``p`` fraction of its measure while
  keeping its energy below ``2 p^2 I_s(F)``, following the classical
  cube-by-cube construction.
* :func:`critical_exponent` locates the convergence/divergence boundary of a
  parametrized series by bisection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import fft

from .dyadic import DyadicSet, check_level, max_level
from .energy import (GaugeFunction, cropped_kernel, kernel_table, lookup,
                     set_energy)


# -- net content -------------------------------------------------------------

@dataclass
class NetCover:
    value: float
    cover: list[DyadicSet]  # one set of chosen cubes per level (possibly empty)

    def cubes(self) -> int:
        return sum(len(c) for c in self.cover)


def _as_gauge(h, d: int) -> GaugeFunction:
    if isinstance(h, GaugeFunction):
        return h
    return GaugeFunction.power(float(h), d)


def net_content(F: DyadicSet, h) -> NetCover:
    """Minimal ``sum h(diam Q)`` over covers of ``F`` by dyadic cubes.

    ``cost(Q) = min(h(sqrt(d) 2^-k), sum of children costs)``; on ties the
    coarser cube is kept.
    """
    d = F.dim
    h = _as_gauge(h, d)
    if F.is_empty():
        return NetCover(0.0, [DyadicSet.empty(d, k) for k in range(F.level + 1)])
    diam = lambda k: float(h(math.sqrt(d) * 2.0 ** -k))
    nodes = [None] * (F.level + 1)
    self_pick = [None] * (F.level + 1)
    flat = F.flat
    cost = np.full(flat.size, diam(F.level))
    nodes[F.level] = flat
    self_pick[F.level] = np.ones(flat.size, dtype=bool)
    for k in range(F.level - 1, -1, -1):
        idx = np.stack(np.unravel_index(nodes[k + 1], (1 << (k + 1),) * d), axis=1) >> 1
        parent = np.ravel_multi_index(tuple(idx.T), (1 << k,) * d)
        order = np.argsort(parent, kind="stable")
        ps = parent[order]
        uniq, start = np.unique(ps, return_index=True)
        child_sum = np.add.reduceat(cost[order], start)
        own = diam(k)
        pick = own <= child_sum
        cost = np.where(pick, own, child_sum)
        nodes[k] = uniq
        self_pick[k] = pick
    value = float(cost.sum())
    # walk down and collect the chosen cubes
    cover = []
    open_ = nodes[0]
    for k in range(F.level + 1):
        here = np.isin(nodes[k], open_, assume_unique=True)
        chosen = nodes[k][here & self_pick[k]]
        cover.append(DyadicSet(d, k, chosen, _trusted=True))
        if k < F.level:
            rest = nodes[k][here & ~self_pick[k]]
            idx = np.stack(np.unravel_index(nodes[k + 1], (1 << (k + 1),) * d), axis=1) >> 1
            parent = np.ravel_multi_index(tuple(idx.T), (1 << k,) * d)
            open_ = nodes[k + 1][np.isin(parent, rest)]
    return NetCover(value, cover)


def hausdorff_content_upper(F: DyadicSet, h) -> float:
    """Dyadic net content of ``F`` (an upper bound on ``H^h_inf(F)``)."""
    return net_content(F, h).value


# -- batched block energies ------------------------------------------------------

def _block_patterns(F: DyadicSet, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct restrictions of ``F`` to level-``k`` cubes.

    Returns ``(patterns, owner, inverse)``: ``patterns[j]`` is a boolean block
    of side ``2^(L-k)``, ``owner[j]`` the flat index of one cube having it and
    ``inverse`` maps every occupied cube to its pattern.
    """
    d, L = F.dim, F.level
    m = 1 << (L - k)
    nq = 1 << k
    idx = F.indices()
    q = idx >> (L - k)
    u = idx & (m - 1)
    qflat = np.ravel_multi_index(tuple(q.T), (nq,) * d)
    uflat = np.ravel_multi_index(tuple(u.T), (m,) * d)
    occupied, qpos = np.unique(qflat, return_inverse=True)
    masks = np.zeros((occupied.size, m ** d), dtype=bool)
    masks[qpos, uflat] = True
    packed = np.packbits(masks, axis=1)
    _, first, inverse = np.unique(packed, axis=0, return_index=True, return_inverse=True)
    return masks[first].reshape((first.size,) + (m,) * d), occupied[first], inverse.ravel()


def block_energies(patterns: np.ndarray, level: int, h: GaugeFunction,
                   budget: int = 1 << 22) -> np.ndarray:
    """Energies of a batch of boolean blocks at ``level`` (block side <= N/2)."""
    P = patterns.shape[0]
    d = patterns.ndim - 1
    m = patterns.shape[1]
    if m > (1 << level) // 2 and level >= 1:
        raise ValueError("block larger than half the torus")
    table = kernel_table(d, max(level, 2), h) if level >= 2 else None
    if table is None:
        # levels 0, 1: refine by two and recurse on the finer grid
        k = 2 - level
        fine = patterns
        for ax in range(1, d + 1):
            fine = np.repeat(fine, 1 << k, axis=ax)
        return block_energies(fine, 2, h, budget)
    size = fft.next_fast_len(2 * m - 1, real=True)
    shape = (size,) * d
    kern = cropped_kernel(table, (m,) * d, shape)
    out = np.empty(P)
    per = max(1, budget // (size ** d))
    axes = tuple(range(1, d + 1))
    for a in range(0, P, per):
        chunk = patterns[a:a + per].astype(float)
        fg = fft.rfftn(chunk, s=shape, axes=axes)
        corr = fft.irfftn(fg * np.conj(fg), s=shape, axes=axes)
        out[a:a + per] = np.tensordot(corr, kern, axes=d)
    return out


# -- lem-Leb splitting -------------------------------------------------------------

@dataclass
class LebSplit:
    subset: DyadicSet
    p: float
    p_achieved: float
    n: int
    sep: int
    near_energy: float
    energy: float
    criterion_met: bool
    level: int

    @property
    def near_ratio(self) -> float:
        return self.near_energy / self.energy if self.energy else 0.0


def separation(d: int, s: float) -> int:
    """Smallest integer ``l`` with ``(1 + 2 sqrt(d)/l)^s < 3/2``."""
    if s <= 0:
        return 1
    l = max(1, math.floor(2 * math.sqrt(d) / (1.5 ** (1 / s) - 1)))
    while (1 + 2 * math.sqrt(d) / l) ** s >= 1.5:
        l += 1
    return l


def _cube_gap(delta: np.ndarray, nq: int) -> np.ndarray:
    """Torus distance (in cube units) between cubes whose indices differ by ``delta``."""
    a = np.abs(delta) % nq
    a = np.minimum(a, nq - a)
    gap = np.maximum(a - 1, 0).astype(float)
    return np.sqrt(np.sum(gap * gap, axis=-1))


def near_energy(F: DyadicSet, n: int, sep: int, h: GaugeFunction) -> float:
    """Energy of ``F`` restricted to pairs of level-``n`` cubes at distance
    below ``sep * 2^-n`` (the quantity controlled in the splitting step)."""
    d = F.dim
    if n >= F.level:
        return _near_energy_fine(F, n, sep, h)
    L = F.level
    nq = 1 << n
    m = 1 << (L - n)
    table = kernel_table(d, L, h)
    N = 1 << L
    mask = F.mask()
    # blocks[q..., u...]
    shp = []
    for _ in range(d):
        shp += [nq, m]
    blocks = mask.reshape(shp).transpose(list(range(0, 2 * d, 2)) + list(range(1, 2 * d, 2)))
    size = fft.next_fast_len(2 * m - 1, real=True)
    inner = tuple(range(d, 2 * d))
    fb = fft.rfftn(blocks.astype(float), s=(size,) * d, axes=inner)
    # cube offsets that are near (mod nq)
    rng = np.arange(-(sep + 1), sep + 2)
    cand = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), axis=-1).reshape(-1, d) % nq
    cand = np.unique(cand, axis=0)
    cand = cand[_cube_gap(cand, nq) < sep]
    u = np.arange(size)
    u = np.where(u < size - u, u, u - size)  # signed in-block offsets
    grids = np.meshgrid(*([u] * d), indexing="ij")
    valid = np.ones((size,) * d, dtype=bool)
    for g in grids:
        valid &= np.abs(g) < m
    total = 0.0
    for delta in cand:
        shifted = np.roll(fb, shift=tuple(-int(v) for v in delta), axis=tuple(range(d)))
        cross = np.sum(np.conj(fb) * shifted, axis=tuple(range(d)))
        corr = fft.irfftn(cross, s=(size,) * d)
        offs = np.stack([m * int(delta[i]) + grids[i] for i in range(d)], axis=-1)
        kv = lookup(table, offs, N)
        total += float(np.sum(np.where(valid, corr * kv, 0.0)))
    return total


def shifted_overlap(F: DyadicSet, offsets: np.ndarray) -> np.ndarray:
    """``#(F cap (F - o))`` in cells, for each integer offset ``o`` (mod 2^level)."""
    n = F.side_count
    offsets = np.atleast_2d(offsets)
    out = np.empty(offsets.shape[0], dtype=np.int64)
    if n ** F.dim <= 1 << 22:
        mask = F.mask()
        for j, o in enumerate(offsets):
            out[j] = int(np.count_nonzero(mask & np.roll(mask, tuple(-int(v) for v in o),
                                                         axis=tuple(range(F.dim)))))
        return out
    idx = F.indices()
    for j, o in enumerate(offsets):
        sh = np.ravel_multi_index(tuple(((idx - o) % n).T), F.shape)
        out[j] = int(np.count_nonzero(np.isin(sh, F.flat, assume_unique=True)))
    return out


def _near_energy_fine(F: DyadicSet, n: int, sep: int, h: GaugeFunction) -> float:
    """Near energy when the cube level ``n`` is at or below the cell size.

    The autocorrelation of ``F`` refined by ``M = 2^(n-L)`` is a tensor
    interpolation of the coarse one: for ``o = M a + b`` with ``0 <= b < M``
    it equals ``sum_eps C(a + eps) prod_i (M - b_i if eps_i = 0 else b_i)``.
    """
    d, L = F.dim, F.level
    if n < 2:
        # at most two cubes per axis: every pair of cubes touches
        return set_energy(F, h)
    M = 1 << (n - L)
    N = 1 << n
    rng = np.arange(-(sep + 1), sep + 2)
    offs = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), axis=-1).reshape(-1, d)
    offs = np.unique(offs % N, axis=0)
    offs = offs[_cube_gap(offs, N) < sep]
    a = np.floor_divide(offs, M)
    b = offs - a * M
    eps = np.array(list(np.ndindex(*([2] * d))))
    need = np.unique((a[:, None, :] + eps[None, :, :]).reshape(-1, d), axis=0)
    coarse = dict(zip(map(tuple, need), shifted_overlap(F, need)))
    corr = np.zeros(offs.shape[0])
    for e in eps:
        wt = np.prod(np.where(e[None, :] == 0, M - b, b), axis=1).astype(float)
        vals = np.array([coarse[tuple(v)] for v in a + e], dtype=float)
        corr += wt * vals
    table = kernel_table(d, n, h)
    return float(np.sum(corr * lookup(table, offs, N)))


def _morton(idx: np.ndarray, bits: int) -> np.ndarray:
    d = idx.shape[1]
    code = np.zeros(idx.shape[0], dtype=np.int64)
    for b in range(bits):
        for i in range(d):
            code |= ((idx[:, i] >> b) & 1) << (b * d + (d - 1 - i))
    return code


def _retain(F: DyadicSet, n: int, p: float) -> DyadicSet:
    """Keep a ``p`` fraction of the cells in each level-``n`` cube, evenly spread.

    Per-cube targets are rounded with a global largest-remainder rule so the
    total is within half a cell of ``p * len(F)``.
    """
    d, L = F.dim, F.level
    idx = F.indices()
    q = idx >> (L - n)
    qflat = np.ravel_multi_index(tuple(q.T), (1 << n,) * d)
    local = _morton(idx & ((1 << (L - n)) - 1), L - n)
    order = np.lexsort((local, qflat))
    qs = qflat[order]
    cubes, start, counts = np.unique(qs, return_index=True, return_counts=True)
    target = p * counts
    base = np.floor(target).astype(np.int64)
    extra = int(round(p * len(F))) - int(base.sum())
    if extra > 0:
        frac = target - base
        top = np.argsort(-frac, kind="stable")[:extra]
        base[top] += 1
    # evenly spaced ranks floor((j + 1/2) c / t) inside every cube
    t_rep = np.repeat(base, base)
    c_rep = np.repeat(counts, base)
    s_rep = np.repeat(start, base)
    j = np.arange(t_rep.size) - np.repeat(np.cumsum(base) - base, base)
    sel = order[s_rep + ((2 * j + 1) * c_rep) // (2 * t_rep)]
    return DyadicSet(d, L, np.sort(F.flat[sel]), _trusted=True)


def lem_leb_split_report(F: DyadicSet, p: float, s=None, *, gauge: GaugeFunction | None = None,
                         n_max: int | None = None) -> LebSplit:
    """Thin ``F`` to measure ``p L(F)`` with energy at most ``2 p^2 I(F)``.

    The grid level ``n`` is the coarsest one whose near-diagonal energy is
    below ``p^2 I(F) / 2``.  The output lives ``ceil(log2(1/p)/d)`` levels
    below ``max(L, n)`` so that for dyadic ``p`` every level-``n`` cube keeps
    exactly a ``p`` fraction of its cells; otherwise per-cube targets are
    rounded with a global largest-remainder rule.  ``n_max`` limits the search
    (the criterion is then reported as not met).
    """
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if F.measure() == 0:
        raise ValueError("F must have positive measure")
    d = F.dim
    if gauge is None:
        if s is None:
            raise ValueError("give an exponent s or a gauge")
        gauge = GaugeFunction.power(s, d)
        s_eff = float(s)
    else:
        s_eff = gauge.s if gauge.is_power() else float(d)
    if gauge.diverges(d):
        raise ValueError("exponent must be below the dimension")
    energy = set_energy(F, gauge)
    sep = separation(d, s_eff)
    if p == 1:
        return LebSplit(F, 1.0, 1.0, 0, sep, energy, energy, True, F.level)
    cap = max_level(d)
    extra = max(0, math.ceil(math.log2(1 / p) / d - 1e-12))
    if F.level + extra > cap:
        extra = cap - F.level
    hi = cap - extra if n_max is None else min(cap - extra, n_max)
    goal = 0.5 * p * p * energy
    n_start = max(1, math.ceil(math.log2(2 * (sep + 2))))
    chosen, ne = None, math.inf
    for n in range(n_start, max(hi, n_start) + 1):
        ne = near_energy(F, n, sep, gauge)
        last = n
        if ne < goal:
            chosen = n
            break
    met = chosen is not None
    if chosen is None:
        chosen = last
    level = min(cap, max(F.level, chosen) + extra)
    sub = _retain(F.refine(level), min(chosen, level), p)
    p_ach = sub.measure() / F.measure()
    return LebSplit(sub, p, p_ach, chosen, sep, ne, energy, met, level)


def lem_leb_split(F: DyadicSet, p: float, s: float) -> DyadicSet:
    """Subset with ``L(F1) ~ p L(F)`` and ``I_s(F1) <= 2 p^2 I_s(F)``."""
    return lem_leb_split_report(F, p, s).subset


# -- G lower bound ------------------------------------------------------------------

@dataclass(frozen=True)
class GLowerConfig:
    """Candidate families for :func:`G_lower`."""

    cube_levels: bool = True
    thin_ps: tuple = (0.5, 0.25, 0.125)
    thin_top: int = 3
    thin_extra_levels: int = 2
    budget: int = 1 << 22


@dataclass
class GLowerResult:
    value: float
    witness: DyadicSet
    source: str
    candidates: int


def G_lower(F: DyadicSet, h, strategy: GLowerConfig | None = None) -> GLowerResult:
    """Certified lower bound on ``G_h(F)`` with a maximizing witness subset."""
    cfg = strategy or GLowerConfig()
    d = F.dim
    h = _as_gauge(h, d)
    if F.is_empty():
        return GLowerResult(0.0, F, "empty", 0)
    if h.diverges(d):
        return GLowerResult(0.0, F, "divergent kernel", 0)
    vol = F.cell_volume
    pool = []  # (g, label, constructor)
    e_full = set_energy(F, h)
    pool.append((F.measure() ** 2 / e_full, "F", lambda: F))
    count = 1
    if cfg.cube_levels:
        for k in range(1, F.level + 1):
            pats, owner, _ = _block_patterns(F, k)
            energies = block_energies(pats, F.level, h, cfg.budget)
            mass = pats.reshape(pats.shape[0], -1).sum(axis=1) * vol
            g = mass * mass / energies
            count += pats.shape[0]
            order = np.argsort(-g)[:max(cfg.thin_top, 1)]
            for j in order:
                q = int(owner[j])
                pool.append((float(g[j]), f"cube level {k}",
                             (lambda k=k, q=q: F & DyadicSet(d, k, [q], _trusted=True))))
    pool.sort(key=lambda t: -t[0])
    best = pool[0]
    if cfg.thin_ps:
        seen = []
        for gval, label, make in pool:
            if len(seen) >= cfg.thin_top:
                break
            base = make()
            if any(base == other for other in seen):
                continue
            seen.append(base)
            if base.measure() == 0:
                continue
            for p in cfg.thin_ps:
                try:
                    rep = lem_leb_split_report(base, p, gauge=h,
                                               n_max=base.level + cfg.thin_extra_levels)
                except Exception:
                    continue
                sub = rep.subset
                if sub.is_empty():
                    continue
                count += 1
                gv = sub.measure() ** 2 / set_energy(sub, h)
                if gv > best[0]:
                    best = (gv, f"thinning p={p} of {label}", lambda sub=sub: sub)
    return GLowerResult(float(best[0]), best[2](), best[1], count)


def g_ratio_two_cubes(A: DyadicSet, h) -> float:
    from .energy import g_value
    return G_lower(A, h).value / g_value(A, _as_gauge(h, A.dim))


# -- critical exponents ---------------------------------------------------------------

class AmbiguityError(RuntimeError):
    """Divergence classification is not monotone in t."""

    def __init__(self, message: str, table: list):
        super().__init__(message)
        self.table = table


@dataclass
class SeriesSchedule:
    """Terms ``a_n(t)``; ``evaluator(n_array, t)`` must be vectorized in ``n``."""

    evaluator: Callable[[np.ndarray, float], np.ndarray]
    n_max: int = 100_000
    t_lo: float = 0.0
    t_hi: float = 1.0
    tol: float = 0.01
    threshold: float | str = "harmonic"
    grid: int = 11


@dataclass
class ExponentResult:
    value: float
    table: list = field(default_factory=list)  # rows (t, divergent, slope, threshold)
    convention: str = ""


def _fit_points(n_max: int, k: int = 24) -> np.ndarray:
    return np.unique(np.geomspace(max(n_max // 4, 1), n_max, k).astype(np.int64))


def log_sum_slope(terms: np.ndarray, n_max: int) -> float:
    """Least-squares slope of ``log S_N`` against ``log N`` over ``[n_max/4, n_max]``."""
    S = np.cumsum(terms)
    Ns = _fit_points(n_max)
    y = np.log(np.maximum(S[Ns - 1], np.finfo(float).tiny))
    x = np.log(Ns)
    if x.size < 2 or S[-1] == 0:
        return 0.0
    return float(np.polyfit(x, y, 1)[0])


def harmonic_threshold(n_max: int) -> float:
    """Slope of the borderline series ``sum 1/n`` on the same fit window."""
    n = np.arange(1, n_max + 1, dtype=float)
    return log_sum_slope(1.0 / n, n_max)


def classify(sched: SeriesSchedule, t: float) -> tuple[bool, float, float]:
    n = np.arange(1, sched.n_max + 1, dtype=float)
    terms = np.asarray(sched.evaluator(n, t), dtype=float)
    if np.any(terms < 0):
        raise ValueError("series terms must be nonnegative")
    slope = log_sum_slope(terms, sched.n_max)
    thr = harmonic_threshold(sched.n_max) if sched.threshold == "harmonic" else float(sched.threshold)
    return slope > thr, slope, thr


def critical_exponent_report(sched: SeriesSchedule) -> ExponentResult:
    """Bisection for the boundary between divergent (small t) and convergent t.

    All-divergent returns ``t_hi`` (``inf of the empty set``); all-convergent
    returns ``t_lo``.  A coarse grid is classified first and any non-monotone
    pattern raises :class:`AmbiguityError`.
    """
    ts = np.linspace(sched.t_lo, sched.t_hi, max(sched.grid, 2))
    table = []
    for t in ts:
        div, slope, thr = classify(sched, float(t))
        table.append((float(t), div, slope, thr))
    flags = [row[1] for row in table]
    first_conv = next((i for i, f in enumerate(flags) if not f), len(flags))
    if any(flags[first_conv:]):
        raise AmbiguityError("divergence classification is not monotone in t", table)
    if first_conv == len(flags):
        return ExponentResult(sched.t_hi, table, "all divergent")
    if first_conv == 0:
        return ExponentResult(sched.t_lo, table, "all convergent")
    lo, hi = float(ts[first_conv - 1]), float(ts[first_conv])
    while hi - lo > sched.tol:
        mid = 0.5 * (lo + hi)
        div, slope, thr = classify(sched, mid)
        table.append((mid, div, slope, thr))
        if div:
            lo = mid
        else:
            hi = mid
    return ExponentResult(0.5 * (lo + hi), table, "bisection")


def critical_exponent(sched: SeriesSchedule) -> float:
    return critical_exponent_report(sched).value


def power_law_schedule(alpha: float, c: float = 1.0, **kw) -> SeriesSchedule:
    """``a_n(t) = (c n^-alpha)^t``, the t-content of balls of diameter ``c n^-alpha`` (d=1)."""
    return SeriesSchedule(lambda n, t: (c * n ** -alpha) ** t, **kw)


def values_schedule(values_at: Callable[[np.ndarray, float], np.ndarray], **kw) -> SeriesSchedule:
    return SeriesSchedule(values_at, **kw)
