"""Minimal regular energy ``Gamma_s(E)`` over cell-weighted probability densities.

The discrete problem is ``min w^T A w`` over the probability simplex on the
cells of ``E``, with ``A_ab = K(b - a) / vol^2`` the pair energy of density-one
cells.  It is solved by the away-step Frank-Wolfe method with exact line
search.  ``A`` is never stored: columns are read off the translation-invariant
kernel table and the initial gradient is a single FFT convolution, so memory
is ``O(m)`` for ``m`` cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft

from .content import hausdorff_content_upper
from .dyadic import DyadicSet
from .energy import (DiscreteMeasure, GaugeFunction, _local_layout, cropped_kernel,
                     full_kernel, kernel_table, lookup, measure_energy)

MAX_CELLS = 1 << 14


@dataclass
class GammaResult:
    value: float
    minimizer: DiscreteMeasure | None
    iterations: int
    duality_gap: float
    converged: bool = True

    @property
    def weights(self) -> np.ndarray:
        return self.minimizer.weights if self.minimizer is not None else np.empty(0)


def kernel_apply(S: DyadicSet, values: np.ndarray, h: GaugeFunction) -> np.ndarray:
    """``(sum_b K(b - a) v_b)`` for every cell ``a`` of ``S``."""
    d, n = S.dim, S.side_count
    table = kernel_table(d, S.level, h)
    idx = S.indices()
    layout = _local_layout(idx, n)
    if layout is None:
        grid = np.zeros(S.shape)
        grid[tuple(idx.T)] = values
        kern = full_kernel(d, S.level, h)
        conv = fft.irfftn(fft.rfftn(grid) * fft.rfftn(kern), s=grid.shape)
        return conv[tuple(idx.T)]
    loc, ext = layout
    shape = [fft.next_fast_len(2 * e - 1, real=True) for e in ext]
    grid = np.zeros(shape)
    grid[tuple(loc.T)] = values
    kern = cropped_kernel(table, ext, shape)
    conv = fft.irfftn(fft.rfftn(grid) * fft.rfftn(kern), s=shape)
    return conv[tuple(loc.T)]


def gamma(E: DyadicSet, s, iters: int = 20_000, rel_tol: float = 1e-7,
          certify: float = 1e-4, w0: np.ndarray | None = None) -> GammaResult:
    """Upper bound on ``Gamma_s(E)`` by away-step Frank-Wolfe.

    ``s`` is an exponent or a :class:`GaugeFunction`.  The run stops when the
    Frank-Wolfe gap drops below ``rel_tol * value``; the result is flagged
    unconverged when the final gap is not below ``certify * value``.
    """
    d = E.dim
    h = s if isinstance(s, GaugeFunction) else GaugeFunction.power(float(s), d)
    if h.is_power() and not 0 < h.s < d:
        raise ValueError("exponent must satisfy 0 < s < d")
    if E.is_empty():
        return GammaResult(math.inf, None, 0, 0.0, True)
    if E.level < 2:
        E = E.refine(2)
    m = len(E)
    if m > MAX_CELLS:
        raise ValueError(f"{m} cells exceeds the solver cap {MAX_CELLS}; coarsen E")
    vol2 = E.cell_volume ** 2
    table = kernel_table(d, E.level, h)
    n = E.side_count
    idx = E.indices()
    diag = float(table[(0,) * d]) / vol2

    def column(j: int) -> np.ndarray:
        return lookup(table, idx - idx[j], n) / vol2

    w = np.full(m, 1.0 / m) if w0 is None else np.asarray(w0, dtype=float).copy()
    w /= w.sum()
    Aw = kernel_apply(E, w, h) / vol2
    f = float(w @ Aw)
    gap = math.inf
    it = 0
    for it in range(1, iters + 1):
        g = Aw  # half-gradient
        s_i = int(np.argmin(g))
        active = np.flatnonzero(w > 0)
        v_i = int(active[np.argmax(g[active])])
        gap = 2.0 * (f - g[s_i])
        if gap <= rel_tol * f:
            break
        away_gap = 2.0 * (g[v_i] - f)
        if gap >= away_gap:
            col = column(s_i)
            dA = g[s_i] - f                      # d^T A w, d = e_s - w
            dAd = diag - 2.0 * g[s_i] + f
            gmax = 1.0
            gam = gmax if dAd <= 0 else min(gmax, max(0.0, -dA / dAd))
            w *= 1.0 - gam
            w[s_i] += gam
            Aw = (1.0 - gam) * Aw + gam * col
        else:
            col = column(v_i)
            dA = f - g[v_i]                      # d = w - e_v
            dAd = f - 2.0 * g[v_i] + diag
            wv = w[v_i]
            gmax = wv / (1.0 - wv) if wv < 1 else math.inf
            gam = gmax if dAd <= 0 else min(gmax, max(0.0, -dA / dAd))
            w *= 1.0 + gam
            w[v_i] -= gam
            if gam == gmax:
                w[v_i] = 0.0
            Aw = (1.0 + gam) * Aw - gam * col
        f = f + 2.0 * gam * dA + gam * gam * dAd
        np.maximum(w, 0.0, out=w)
    # exact value of the returned measure
    w /= w.sum()
    mu = DiscreteMeasure(E, w)
    value = measure_energy(mu, h)
    Aw = kernel_apply(E, w, h) / vol2
    gap = max(0.0, 2.0 * (float(w @ Aw) - float(Aw.min())))
    return GammaResult(value, mu, it, gap, gap < certify * value)


def gamma_stability(E: DyadicSet, F: DyadicSet, s, **kw) -> float:
    """``gamma(F) - gamma(E)``; small when ``L(E \\ F)`` is small."""
    return gamma(F, s, **kw).value - gamma(E, s, **kw).value


@dataclass
class ContentLower:
    value: float
    gammas: list = field(default_factory=list)
    converged: bool = True
    caveat: str = ("bound from discrete cell-weighted minimizers; "
                   "each value is an upper bound on Gamma_s up to discretization")


def content_lower_from_gamma(chain: Sequence[DyadicSet], s, **kw) -> ContentLower:
    """``1 / max_n gamma(E_n)``: a lower bound on the s-content of the intersection."""
    chain = list(chain)
    if not chain:
        raise ValueError("empty chain")
    for a, b in zip(chain, chain[1:]):
        if not b.issubset(a):
            raise ValueError("chain is not decreasing")
    results = [gamma(E, s, **kw) for E in chain]
    c = max(r.value for r in results)
    return ContentLower(0.0 if math.isinf(c) else 1.0 / c, [r.value for r in results],
                        all(r.converged for r in results))


def dense_matrix(E: DyadicSet, s) -> np.ndarray:
    """Explicit ``A`` (small sets only; used by oracles and diagnostics)."""
    d = E.dim
    h = s if isinstance(s, GaugeFunction) else GaugeFunction.power(float(s), d)
    if E.level < 2:
        E = E.refine(2)
    idx = E.indices()
    table = kernel_table(d, E.level, h)
    diff = idx[None, :, :] - idx[:, None, :]
    return lookup(table, diff, E.side_count) / E.cell_volume ** 2
