"""Variable-exponent modulars, Luxemburg norms and the mixed norms
``l_q(L_p)`` and ``L_p(l_q)`` on grids.

All root finding is done on ``log(lambda)`` against ``log(modular)``, which is
strictly decreasing and never overflows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import betainc, betaincinv, gammaln, logsumexp

from .expdsl import INFINITE_THRESHOLD, ScalarField
from .gridcore import GridError, GridFunction, centered_grid, convolve

__all__ = [
    "SOLVER_RTOL",
    "random_sequence",
    "hardy_constants",
    "mollifier_constants",
    "BracketingError",
    "ExponentError",
    "MixedNormSpec",
    "FunctionSequence",
    "exponent_values",
    "modular_lp",
    "luxemburg",
    "norm_lq_of_Lp",
    "norm_Lp_of_lq",
    "mixed_norm",
    "hardy_transform",
    "eta_kernel",
    "eta_mollify",
]

_LOG_LO = math.log(1e-300)
_XTOL = 1e-13
# relative accuracy of every Luxemburg norm (the solve runs in log lambda)
SOLVER_RTOL = _XTOL


class BracketingError(RuntimeError):
    pass


class ExponentError(ValueError):
    pass


def exponent_values(p, grid: GridFunction) -> np.ndarray:
    """Exponent sampled at the cell centres; accepts a field, a number or an array."""
    if isinstance(p, ScalarField):
        if p.dim != grid.ndim:
            raise ExponentError(f"exponent has dim {p.dim}, grid has {grid.ndim}")
        vals = np.asarray(p(*grid.mesh()), dtype=float)
    elif np.isscalar(p):
        vals = np.full(grid.dims, float(p))
    else:
        vals = np.asarray(p, dtype=float)
        if vals.shape != grid.dims:
            raise ExponentError("exponent array does not match the grid")
    vals = np.where(vals > INFINITE_THRESHOLD, np.inf, vals)
    return vals


def _is_constant(p) -> bool:
    return np.isscalar(p) or (isinstance(p, ScalarField) and p.is_constant)


@dataclass
class _Cells:
    """Nonzero cells of one function inside the mask, in log form."""

    logf: np.ndarray
    p: np.ndarray
    log_vol: float

    @classmethod
    def build(cls, values, p, mask, vol):
        a = np.abs(np.asarray(values))
        sel = a > 0
        if mask is not None:
            sel &= mask
        pv = p[sel]
        if pv.size and not (pv > 0).all():
            raise ExponentError("exponent must be positive on the integration set")
        return cls(np.log(a[sel]), pv, math.log(vol))

    @property
    def empty(self):
        return self.logf.size == 0


def _log_modular(logf, p, log_vol, shift):
    """``log rho_p(f / e^shift)`` from log-magnitudes; ``p = inf`` gives the sup term."""
    fin = np.isfinite(p)
    parts = []
    if fin.any():
        parts.append(logsumexp(p[fin] * (logf[fin] - shift)) + log_vol)
    if (~fin).any():
        parts.append(float((logf[~fin] - shift).max()))
    if not parts:
        return -np.inf
    return float(np.logaddexp.reduce(parts))


def _solve_decreasing(func: Callable[[float], float], guess: float, step: float = 1.0,
                      lo_limit: float = _LOG_LO, trace=None) -> float:
    """Root of a decreasing function of one variable, bracketed outward from ``guess``."""
    def g(u):
        v = func(u)
        if trace is not None:
            trace.append((u, v))
        return v

    a, b = guess - step, guess + step
    fa, fb = g(a), g(b)
    while fa < 0:
        b, fb = a, fa
        step *= 2
        a = max(a - step, lo_limit) if a > lo_limit else a - step
        if a < lo_limit - 1e-9 or (a == lo_limit and g(a) < 0):
            raise BracketingError("modular stays below 1 down to lambda = 1e-300")
        fa = g(a)
    while fb > 0:
        a, fa = b, fb
        step *= 2
        b = b + step
        if step > 1e4:
            raise BracketingError("could not bracket the modular from above")
        fb = g(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    return brentq(g, a, b, xtol=_XTOL, rtol=4 * np.finfo(float).eps)


def _lux_log(cells: _Cells, trace=None) -> float:
    """``log`` of the Luxemburg norm; ``-inf`` for the zero function."""
    if cells.empty:
        return -np.inf
    guess = float(cells.logf.max())
    return _solve_decreasing(
        lambda u: _log_modular(cells.logf, cells.p, cells.log_vol, u), guess, trace=trace
    )


def modular_lp(f: GridFunction, p, mask=None) -> float:
    """``int |f|^p`` over finite-exponent cells plus ``max |f|`` over ``p = inf`` cells."""
    pv = exponent_values(p, f)
    cells = _Cells.build(f.values, pv, mask, f.cell_volume)
    if cells.empty:
        return 0.0
    return float(np.exp(_log_modular(cells.logf, cells.p, cells.log_vol, 0.0)))


def luxemburg(f: GridFunction, p, mask=None, trace: list | None = None) -> float:
    """``inf{lambda > 0 : rho_p(f / lambda) <= 1}``.

    ``trace`` (optional list) receives the ``(log lambda, log rho)`` pairs
    visited by the root finder.
    """
    pv = exponent_values(p, f)
    cells = _Cells.build(f.values, pv, mask, f.cell_volume)
    return float(np.exp(_lux_log(cells, trace)))


# -- mixed norms -----------------------------------------------------------------


@dataclass
class FunctionSequence:
    entries: list

    def __post_init__(self):
        self.entries = list(self.entries)
        if not self.entries:
            raise GridError("a function sequence needs at least one entry")
        g0 = self.entries[0]
        for g in self.entries[1:]:
            if not g0.same_grid(g):
                raise GridError("sequence entries must share one grid")

    @property
    def grid(self) -> GridFunction:
        return self.entries[0]

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    def map(self, fn) -> "FunctionSequence":
        return FunctionSequence([fn(k, g) for k, g in enumerate(self.entries)])

    def scaled(self, c) -> "FunctionSequence":
        return FunctionSequence([g * c for g in self.entries])


@dataclass
class MixedNormSpec:
    """Exponents plus the order of the mixed norm.

    ``order`` is ``"lq_of_Lp"`` (Besov type) or ``"Lp_of_lq"`` (Triebel-Lizorkin type).
    """

    p: object
    q: object
    order: str = "lq_of_Lp"
    domain_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.order not in ("lq_of_Lp", "Lp_of_lq"):
            raise ValueError(f"unknown mixed norm order {self.order!r}")

    def with_mask(self, mask) -> "MixedNormSpec":
        return MixedNormSpec(self.p, self.q, self.order, mask)

    def exponents(self, grid: GridFunction):
        pv = exponent_values(self.p, grid)
        qv = exponent_values(self.q, grid)
        sel = self.domain_mask if self.domain_mask is not None else np.ones(grid.dims, bool)
        if not (pv[sel] > 0).all() or not (qv[sel] > 0).all():
            raise ExponentError("mixed norms need p^- > 0 and q^- > 0 on the working set")
        return pv, qv


def _inner_general(logf, p, q, log_vol, m, guess=None):
    """``log lambda_nu`` with ``rho_p(f / (mu lambda^{1/q})) = 1`` and ``log mu = m``."""
    invq = np.where(np.isfinite(q), 1.0 / q, 0.0)
    finp = np.isfinite(p)

    def log_rho(v):
        parts = []
        if finp.any():
            parts.append(logsumexp(p[finp] * (logf[finp] - m - invq[finp] * v)) + log_vol)
        if (~finp).any():
            parts.append(float((logf[~finp] - m - invq[~finp] * v).max()))
        return float(np.logaddexp.reduce(parts))

    stuck = invq == 0
    if stuck.any():
        rest = log_rho_fixed(logf[stuck], p[stuck], log_vol, m)
        if rest > 0:
            return np.inf
        if stuck.all():
            return -np.inf
    if guess is None:
        qbar = float(np.median(q[~stuck]))
        guess = qbar * (float(logf.max()) - m)
    return _solve_decreasing(log_rho, guess, lo_limit=-1e6)


def log_rho_fixed(logf, p, log_vol, m):
    return _log_modular(logf, p, log_vol, m)


def _inner_simple(logf, p, q, log_vol, m, guess=None):
    """Same quantity via ``|| |f/mu|^q | L_{p/q} ||`` (valid for ``q^+ < inf``)."""
    cells = _Cells(q * (logf - m), p / q, log_vol)
    if guess is None:
        return _lux_log(cells)
    return _solve_decreasing(
        lambda u: _log_modular(cells.logf, cells.p, cells.log_vol, u), guess, lo_limit=-1e6
    )


def _sequence_cells(seq: FunctionSequence, pv, qv, mask):
    out = []
    vol = seq.grid.cell_volume
    for g in seq.entries:
        a = np.abs(np.asarray(g.values))
        sel = a > 0
        if mask is not None:
            sel &= mask
        if sel.any():
            out.append((np.log(a[sel]), pv[sel], qv[sel], math.log(vol)))
    return out


def norm_lq_of_Lp(seq: FunctionSequence, spec: MixedNormSpec, form: str = "auto") -> float:
    """Luxemburg norm of the sequence in ``l_q(L_p)``.

    ``form`` selects the inner modular: ``"general"`` (inf over lambda_nu),
    ``"simple"`` (the ``L_{p/q}`` expression, needs ``q^+ < inf``) or ``"auto"``.
    """
    pv, qv = spec.exponents(seq.grid)
    mask = spec.domain_mask
    items = _sequence_cells(seq, pv, qv, mask)
    if not items:
        return 0.0
    sel = mask if mask is not None else np.ones(seq.grid.dims, bool)
    qmax = float(qv[sel].max())
    if form == "auto":
        form = "simple" if np.isfinite(qmax) else "general"
    if form == "simple" and not np.isfinite(qmax):
        raise ExponentError("the simplified inner modular needs q^+ < inf")
    inner = _inner_simple if form == "simple" else _inner_general

    if _is_constant(spec.q) and np.isfinite(qmax):
        q0 = qmax
        logs = [inner(lf, p, q, lv, 0.0) for lf, p, q, lv in items]
        return float(np.exp(logsumexp(logs) / q0))

    guesses = [None] * len(items)

    def outer(m):
        logs = []
        for k, (lf, p, q, lv) in enumerate(items):
            val = inner(lf, p, q, lv, m, guesses[k])
            if np.isfinite(val):
                guesses[k] = val
            logs.append(val)
        logs = np.asarray(logs)
        if np.isposinf(logs).any():
            return np.inf
        return float(logsumexp(logs))

    guess = max(float(lf.max()) for lf, *_ in items)
    return float(np.exp(_solve_decreasing(outer, guess, lo_limit=-1e6)))


def norm_Lp_of_lq(seq: FunctionSequence, spec: MixedNormSpec) -> float:
    """``|| (sum_nu |f_nu|^q)^{1/q} | L_p ||`` with ``sup_nu`` where ``q = inf``."""
    pv, qv = spec.exponents(seq.grid)
    stack = np.abs(np.stack([np.asarray(g.values) for g in seq.entries]))
    with np.errstate(divide="ignore"):
        logs = np.log(stack)
    fin = np.isfinite(qv)
    logg = np.empty(seq.grid.dims)
    qsafe = np.where(fin, qv, 1.0)
    logg[fin] = (logsumexp(qsafe[None] * logs, axis=0) / qsafe)[fin]
    logg[~fin] = logs.max(axis=0)[~fin]
    g = np.exp(logg)
    return luxemburg(seq.grid.with_values(g), pv, spec.domain_mask)


def mixed_norm(seq: FunctionSequence, spec: MixedNormSpec) -> float:
    if spec.order == "lq_of_Lp":
        return norm_lq_of_Lp(seq, spec)
    return norm_Lp_of_lq(seq, spec)


# -- the two workhorse transforms --------------------------------------------------


def hardy_transform(seq: FunctionSequence, delta: float) -> FunctionSequence:
    """``H_l = sum_j 2^{-|j-l| delta} h_j`` over the available ``j``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    stack = np.stack([np.asarray(g.values) for g in seq.entries])
    idx = np.arange(len(seq))
    weights = 2.0 ** (-np.abs(idx[:, None] - idx[None, :]) * delta)
    mixed = np.tensordot(weights, stack, axes=(1, 0))
    return FunctionSequence([seq.grid.with_values(v) for v in mixed])


def _sphere_area(n: int) -> float:
    return 2.0 * math.pi ** (n / 2) / math.exp(gammaln(n / 2))


def eta_kernel(n: int, nu: int, m: float, spacing: float, reach: float,
               tail: float = 1e-10):
    """``2^{n nu} (1 + 2^nu |x|)^{-m}`` on a lattice, truncated where the tail
    mass drops below ``tail`` (or at ``reach``), rescaled to the exact mass of
    the truncated continuous kernel.

    Returns ``(kernel, info)``; ``info`` holds the analytic and sampled masses.
    """
    if not m > n:
        raise ValueError(f"eta_{{nu,m}} needs m > n (got m={m}, n={n})")
    beta = math.exp(gammaln(n) + gammaln(m - n) - gammaln(m))
    t_tail = float(betaincinv(n, m - n, 1.0 - tail))
    radius = min(t_tail / (1.0 - t_tail) * 2.0**-nu, reach)
    u = 2.0**nu * radius
    exact = _sphere_area(n) * beta * float(betainc(n, m - n, u / (1.0 + u)))
    k = int(math.floor(radius / spacing))
    ax = np.arange(-k, k + 1) * spacing
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    r = np.sqrt(sum(c**2 for c in mesh))
    vals = np.where(r <= radius, 2.0 ** (n * nu) * (1.0 + 2.0**nu * r) ** (-m), 0.0)
    sampled = float(vals.sum() * spacing**n)
    vals = vals * (exact / sampled)
    info = {"radius": radius, "exact_mass": exact, "sampled_mass": sampled,
            "full_mass": _sphere_area(n) * beta}
    return centered_grid(vals, spacing), info


def eta_mollify(seq: FunctionSequence, m: float) -> FunctionSequence:
    grid = seq.grid
    n = grid.ndim
    if not m > n:
        raise ValueError(f"eta_{{nu,m}} needs m > n (got m={m}, n={n})")
    reach = math.sqrt(sum((d * grid.spacing) ** 2 for d in grid.dims))
    out = []
    for nu, g in enumerate(seq.entries):
        kern, _ = eta_kernel(n, nu, m, grid.spacing, reach)
        out.append(convolve(g, kern, check_overflow=False))
    return FunctionSequence(out)


# -- empirical constants of the two sequence inequalities ---------------------------------


def random_sequence(grid: GridFunction, levels: int, rng: np.random.Generator,
                    bumps: int = 6) -> FunctionSequence:
    """Nonnegative test sequence: entry ``nu`` is a sum of Gaussian bumps of
    width about ``2^-nu`` placed in the inner half of the box, with a random
    amplitude per level."""
    mesh = grid.mesh()
    lo = np.array([b[0] for b in grid.box])
    hi = np.array([b[1] for b in grid.box])
    mid, half = (lo + hi) / 2, (hi - lo) / 4
    out = []
    for nu in range(levels):
        vals = np.zeros(grid.dims)
        width = 2.0**-nu * 0.25
        for _ in range(bumps):
            c = mid + half * rng.uniform(-1, 1, grid.ndim)
            r2 = sum((m - ci) ** 2 for m, ci in zip(mesh, c))
            vals = vals + rng.uniform(0.5, 1.0) * np.exp(-r2 / (2 * max(width, grid.spacing) ** 2))
        out.append(grid.with_values(rng.uniform(0.5, 1.0) * vals))
    return FunctionSequence(out)


def _ratios(transform, spec: MixedNormSpec, grid: GridFunction, levels: int, count: int, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        seq = random_sequence(grid, levels, rng)
        out.append(mixed_norm(transform(seq), spec) / mixed_norm(seq, spec))
    return out


def hardy_constants(spec: MixedNormSpec, delta: float, grid: GridFunction, levels: int = 7,
                    count: int = 20, seed: int = 0) -> list[float]:
    """``||H|| / ||h||`` for ``count`` random sequences; the max is the empirical constant."""
    return _ratios(lambda seq: hardy_transform(seq, delta), spec, grid, levels, count, seed)


def mollifier_constants(spec: MixedNormSpec, m: float, grid: GridFunction, levels: int = 7,
                        count: int = 20, seed: int = 0) -> list[float]:
    """``||(f_nu * eta_{nu,m})|| / ||(f_nu)||`` for ``count`` random sequences."""
    return _ratios(lambda seq: eta_mollify(seq, m), spec, grid, levels, count, seed)
