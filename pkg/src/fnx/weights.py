"""Admissible 2-microlocal weight sequences and their numerical certification.

A sequence ``(w_j)`` is admissible with parameters ``alpha, alpha1 <= alpha2`` if

1. ``w_j(x) <= C w_j(y) (1 + 2^j |x - y|)^alpha`` and
2. ``2^alpha1 w_j(x) <= w_{j+1}(x) <= 2^alpha2 w_j(x)``.

On a finite lattice every ratio in (1) is finite, so boundedness in ``j`` is
judged by the growth of ``c_j(alpha) = max_{x,y} w_j(x) / (w_j(y)(1+2^j|x-y|)^alpha)``
over the finest levels.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .expdsl import ScalarField, lattice
from .geometry import DEFAULT_WORKING_BOX

__all__ = [
    "WeightError",
    "WeightSequence",
    "Certificate",
    "weight_from_smoothness",
    "weight_from_function",
    "certify_admissible",
    "ALPHA_LATTICE",
]

ALPHA_LATTICE = np.arange(0, 33) * 0.25
GROWTH_TOLERANCE = 0.125
_REL_TOL = 1e-12


class WeightError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WeightSequence:
    jmax: int
    evaluator: Callable
    alpha: float
    alpha1: float
    alpha2: float
    Cw: float
    source: str = ""

    def __call__(self, j: int, *coords):
        return np.asarray(self.evaluator(j, *coords), dtype=float)

    def on_grid(self, j: int, grid) -> np.ndarray:
        return np.broadcast_to(self(j, *grid.mesh()), grid.dims)

    def log2_on_grid(self, j: int, grid) -> np.ndarray:
        return np.log2(self.on_grid(j, grid))


@dataclass(frozen=True)
class Certificate:
    alpha: float
    Cw: float
    passed: bool
    condition2: bool
    alpha1: float
    alpha2: float
    growth: float
    witness: tuple | None = None
    samples: int = 0

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "Cw": self.Cw,
            "passed": self.passed,
            "condition2": self.condition2,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "growth": self.growth,
            "witness": None if self.witness is None else [float(v) for v in self.witness[0]] + [int(self.witness[1])],
            "samples": self.samples,
        }


def _box(dim, box):
    if box is None:
        return [DEFAULT_WORKING_BOX] * dim
    return [tuple(map(float, b)) for b in box]


def weight_from_smoothness(s: ScalarField, jmax: int = 8, box=None, samples: int = 33) -> WeightSequence:
    """``w_j(x) = 2^{j s(x)}`` with ``alpha1, alpha2`` the sampled range of ``s``."""
    if jmax < 1:
        raise WeightError("jmax must be >= 1")
    box = _box(s.dim, box)
    vals = np.asarray(s(*lattice(box, samples)), dtype=float)
    lo, hi = float(vals.min()), float(vals.max())
    if not np.isfinite(vals).all() or hi - lo > 1e6 or max(abs(lo), abs(hi)) > 1e6:
        raise WeightError(f"smoothness field {s.source!r} is unbounded on the box")

    def evaluator(j, *coords):
        return np.exp2(j * np.asarray(s(*coords), dtype=float))

    w = WeightSequence(jmax, evaluator, 0.0, lo, hi, 1.0, s.source)
    cert = certify_admissible(w, box, samples, dim=s.dim)
    return replace(w, alpha=cert.alpha, Cw=cert.Cw)


def weight_from_function(evaluator: Callable, dim: int, jmax: int = 8, box=None,
                         samples: int = 33, source: str = "") -> WeightSequence:
    """Wrap an arbitrary positive ``(j, *coords) -> w_j`` and certify it."""
    box = _box(dim, box)
    w = WeightSequence(jmax, evaluator, 0.0, 0.0, 0.0, 1.0, source)
    a1, a2 = _level_ratio_range(w, lattice(box, samples))
    w = replace(w, alpha1=a1, alpha2=a2)
    cert = certify_admissible(w, box, samples, dim=dim)
    return replace(w, alpha=cert.alpha, Cw=cert.Cw)


def _level_ratio_range(w, mesh):
    ratios = [np.log2(w(j + 1, *mesh) / w(j, *mesh)) for j in range(w.jmax)]
    r = np.stack([np.broadcast_to(x, mesh[0].shape) for x in ratios])
    return float(r.min()), float(r.max())


def _pair_max(logw, pts, j, alphas, chunk=512):
    """``max_{x,y} log2 w_j(x) - log2 w_j(y) - alpha log2(1 + 2^j |x-y|)`` per alpha."""
    best = np.full(len(alphas), -np.inf)
    for k in range(0, len(pts), chunk):
        d = np.sqrt(((pts[k:k + chunk, None, :] - pts[None, :, :]) ** 2).sum(-1))
        lw = logw[k:k + chunk, None] - logw[None, :]
        dl = np.log2(1.0 + 2.0**j * d)
        for i, a in enumerate(alphas):
            best[i] = max(best[i], float((lw - a * dl).max()))
    return best


def certify_admissible(w: WeightSequence, box=None, samples: int = 33, alpha: float | None = None,
                       dim: int | None = None, levels_for_growth: int = 3) -> Certificate:
    """Check conditions (1) and (2) on a lattice with ``samples`` nodes per axis.

    Without a declared ``alpha`` the smallest value on :data:`ALPHA_LATTICE`
    whose ``log2 c_j(alpha)`` grows by at most ``GROWTH_TOLERANCE`` per level
    over the last ``levels_for_growth`` levels is reported.
    """
    if samples < 16:
        raise WeightError("certification needs at least 16 samples per axis")
    if dim is None:
        dim = len(box) if box is not None else 2
    box = _box(dim, box)
    mesh = lattice(box, samples)
    pts = np.stack([m.ravel() for m in mesh], axis=-1)

    # condition (2), checked at every sampled (x, j)
    cond2 = True
    witness = None
    for j in range(w.jmax):
        wj = np.broadcast_to(w(j, *mesh), mesh[0].shape).ravel()
        wn = np.broadcast_to(w(j + 1, *mesh), mesh[0].shape).ravel()
        if not (wj > 0).all() or not (wn > 0).all():
            bad = int(np.argmin(np.minimum(wj, wn)))
            return Certificate(np.nan, np.inf, False, False, w.alpha1, w.alpha2, np.inf, (pts[bad], j), samples)
        lo = 2.0**w.alpha1 * wj * (1 - _REL_TOL)
        hi = 2.0**w.alpha2 * wj * (1 + _REL_TOL)
        bad = np.flatnonzero((wn < lo) | (wn > hi))
        if bad.size and cond2:
            cond2 = False
            witness = (pts[bad[0]], j)

    alphas = ALPHA_LATTICE if alpha is None else np.array([float(alpha)])
    table = np.empty((w.jmax + 1, len(alphas)))
    for j in range(w.jmax + 1):
        logw = np.log2(np.broadcast_to(w(j, *mesh), mesh[0].shape).ravel())
        table[j] = _pair_max(logw, pts, j, alphas)
    tail = table[-(levels_for_growth + 1):]
    growth = np.diff(tail, axis=0).max(axis=0)
    ok = growth <= GROWTH_TOLERANCE
    if ok.any():
        k = int(np.argmax(ok))
        chosen, cw, g = float(alphas[k]), float(2.0 ** table[:, k].max()), float(growth[k])
    else:
        k = len(alphas) - 1
        chosen, cw, g = float(alphas[k]), np.inf, float(growth[k])
    passed = bool(cond2 and ok.any())
    return Certificate(chosen, cw, passed, cond2, w.alpha1, w.alpha2, g, witness, samples)
