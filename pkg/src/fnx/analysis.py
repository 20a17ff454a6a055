"""Peetre maximal functions and the four computable norms.

* :func:`norm_fourier_rn` -- Littlewood-Paley pieces by an FFT multiplier,
* :func:`norm_localmeans_rn` -- local means ``Phi_k * f`` and their Peetre maximal functions,
* :func:`intrinsic_norm_peetre`, :func:`intrinsic_norm_localmeans` -- the same
  on a special Lipschitz domain, using values of ``f`` on the domain only.
"""
from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import fft as sfft

from .expdsl import ScalarField, estimate_log_holder, reciprocal
from .geometry import DEFAULT_WORKING_BOX, Domain, restrict
from .gridcore import GridError, GridFunction, convolve
from .kernels import KernelSystem
from .maximal import peetre_sup
from .varspaces import FunctionSequence, MixedNormSpec, exponent_values, luxemburg, mixed_norm
from .weights import WeightSequence

__all__ = [
    "HypothesisError",
    "KernelLeakageError",
    "AnalysisParams",
    "NormReport",
    "exponent_constants",
    "required_a",
    "check_hypotheses",
    "peetre_maximal_rn",
    "peetre_maximal_domain",
    "dyadic_multiplier",
    "littlewood_paley_pieces",
    "local_means",
    "norm_fourier_rn",
    "norm_localmeans_rn",
    "intrinsic_norm_peetre",
    "intrinsic_norm_localmeans",
    "rtrick_ratios",
]


class HypothesisError(ValueError):
    """A configuration outside the range where the characterisations hold.

    ``required`` maps the offending parameter to the minimum it must exceed.
    """

    def __init__(self, message: str, required: dict):
        self.required = dict(required)
        super().__init__(message)


class KernelLeakageError(RuntimeError):
    pass


@dataclass(frozen=True)
class AnalysisParams:
    a: float
    space: str = "B"
    jmax: int = 8
    r: float | None = None

    def __post_init__(self):
        if self.space not in ("B", "F"):
            raise ValueError("space must be 'B' or 'F'")
        if not self.a > 0:
            raise ValueError("the Peetre exponent a must be positive")

    @property
    def order(self) -> str:
        return "lq_of_Lp" if self.space == "B" else "Lp_of_lq"


@dataclass
class NormReport:
    value: float
    per_scale: list
    truncation_j: int
    grid_h: float
    params: dict
    peetre: float | None = None
    kind: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


# -- hypotheses -----------------------------------------------------------------------


@functools.lru_cache(maxsize=64)
def _clog_reciprocal(q_source: str, dim: int, box: tuple, samples: int) -> float:
    from .expdsl import parse_scalar_field

    q = parse_scalar_field(q_source, dim)
    if q.is_constant:
        return 0.0
    return estimate_log_holder(reciprocal(q), [box] * dim, samples).clog


def exponent_constants(spec: MixedNormSpec, grid: GridFunction, box=DEFAULT_WORKING_BOX,
                       samples: int = 33) -> dict:
    """Sampled ``p^-``, ``q^-`` and ``c_log(1/q)`` for the hypothesis bounds."""
    pv, qv = spec.exponents(grid)
    sel = spec.domain_mask if spec.domain_mask is not None else np.ones(grid.dims, bool)
    if isinstance(spec.q, ScalarField):
        clog = _clog_reciprocal(spec.q.source, spec.q.dim, tuple(box), samples)
    else:
        clog = 0.0
    return {"p_minus": float(pv[sel].min()), "q_minus": float(qv[sel].min()), "clog_inv_q": clog}


def required_a(space: str, n: int, consts: dict, alpha: float) -> float:
    if space == "B":
        return (n + consts["clog_inv_q"]) / consts["p_minus"] + alpha
    return n / min(consts["p_minus"], consts["q_minus"]) + alpha


def check_hypotheses(params: AnalysisParams, spec: MixedNormSpec, w: WeightSequence,
                     grid: GridFunction, system: KernelSystem | None = None) -> dict:
    """Raise :class:`HypothesisError` unless ``a`` and ``L_phi`` clear their bounds."""
    consts = exponent_constants(spec, grid)
    need = required_a(params.space, grid.ndim, consts, w.alpha)
    if not params.a > need:
        raise HypothesisError(f"required a > {need:.6g} (got a = {params.a:g})", {"a": need})
    if params.space == "F":
        pv, qv = spec.exponents(grid)
        if not (np.isfinite(pv).all() and np.isfinite(qv).all()):
            raise HypothesisError("the F scale needs p^+ < inf and q^+ < inf", {"p_plus": np.inf})
    if system is not None and not system.L_phi > w.alpha2:
        raise HypothesisError(
            f"required L_phi > {w.alpha2:.6g} (got {system.L_phi})", {"L_phi": w.alpha2}
        )
    consts["required_a"] = need
    return consts


# -- maximal functions ------------------------------------------------------------------


def peetre_maximal_rn(f: GridFunction, system: KernelSystem, k: int, a: float) -> GridFunction:
    """``sup_y |(Phi_k * f)(y)| / (1 + 2^k |x - y|)^a`` over the grid."""
    phi = system.phi_level(k)
    if phi is None:
        return f.with_values(np.zeros(f.dims))
    piece = convolve(f, phi, check_overflow=False)
    return piece.with_values(peetre_sup(piece.values, f.spacing, 2.0**k, a))


def _assert_cone_support(kernel: GridFunction, aperture: float):
    pts = kernel.points()
    nz = (kernel.values != 0).ravel()
    xn = pts[..., -1]
    ok = xn <= 1e-12 * kernel.spacing
    if kernel.ndim > 1:
        lateral = np.sqrt((pts[..., :-1] ** 2).sum(-1))
        ok &= aperture * lateral <= -xn + 1e-9 * kernel.spacing
    if (nz & ~ok).any():
        raise KernelLeakageError("kernel has samples outside the closed cone -K")


def _domain_piece(f: GridFunction, d: Domain, system: KernelSystem, k: int) -> GridFunction | None:
    phi = system.phi_level(k)
    if phi is None:
        return None
    _assert_cone_support(phi, d.lipschitz_A)
    mask = d.mask(f)
    g = convolve(restrict(f, d), phi, check_overflow=False)
    return g.with_values(np.where(mask, g.values, 0.0))


def peetre_maximal_domain(f: GridFunction, system: KernelSystem, k: int, a: float, d: Domain,
                          everywhere: bool = False) -> GridFunction:
    """``sup_{y in Omega} |(Phi_k * f)(y)| / (1 + 2^k |x - y|)^a``.

    Values are returned on the Omega cells (zero elsewhere) unless
    ``everywhere`` is set, in which case every grid cell ``x`` is evaluated.
    """
    g = _domain_piece(f, d, system, k)
    if g is None:
        return f.with_values(np.zeros(f.dims))
    out = peetre_sup(g.values, f.spacing, 2.0**k, a)
    if not everywhere:
        out = np.where(d.mask(f), out, 0.0)
    return g.with_values(out)


# -- Fourier decomposition ----------------------------------------------------------


def _smooth_transition(t):
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def dyadic_multiplier(radius, j: int):
    """``phi_j(xi)``: ``phi_0 = 1`` on ``|xi| <= 1`` and ``0`` beyond 2, ``phi_j = phi_0(2^-j .) - phi_0(2^{1-j} .)``."""
    def start(rad):
        return 1.0 - _smooth_transition(np.asarray(rad) - 1.0)

    radius = np.asarray(radius, dtype=float)
    if j == 0:
        return start(radius)
    return start(radius * 2.0**-j) - start(radius * 2.0 ** (1 - j))


def littlewood_paley_pieces(f: GridFunction, jmax: int) -> list[GridFunction]:
    """``(phi_j f^)^vee`` for ``j = 0..jmax`` (angular frequencies, zero padding 2x)."""
    nyquist = math.pi / f.spacing
    if 2.0 ** (jmax - 1) > nyquist:
        raise GridError(f"level {jmax} starts beyond the grid Nyquist frequency {nyquist:.4g}")
    shape = tuple(2 * s for s in f.dims)
    axes = tuple(range(f.ndim))
    spec = sfft.fftn(np.asarray(f.values, dtype=complex), shape, axes=axes)
    freqs = [2 * np.pi * sfft.fftfreq(s, f.spacing) for s in shape]
    mesh = np.meshgrid(*freqs, indexing="ij", sparse=True)
    radius = np.sqrt(sum(m**2 for m in mesh))
    crop = tuple(slice(0, s) for s in f.dims)
    out = []
    for j in range(jmax + 1):
        piece = sfft.ifftn(spec * dyadic_multiplier(radius, j), axes=axes)[crop]
        out.append(f.with_values(np.real(piece) if np.isrealobj(f.values) else piece))
    return out


# -- norm assembly -------------------------------------------------------------------


def _weighted(seq_values, w: WeightSequence, grid: GridFunction):
    entries = []
    for j, v in enumerate(seq_values):
        entries.append(grid.with_values(np.abs(v) * w.on_grid(j, grid)))
    return FunctionSequence(entries)


def _per_scale(seq: FunctionSequence, spec: MixedNormSpec) -> list:
    out = []
    for j, g in enumerate(seq.entries):
        if not np.any(g.values):
            out.append((j, 0.0))
            continue
        out.append((j, luxemburg(g, spec.p, spec.domain_mask)))
    return out


def _spec_for(spec: MixedNormSpec, params: AnalysisParams, mask=None) -> MixedNormSpec:
    return MixedNormSpec(spec.p, spec.q, params.order, mask)


def _echo(params: AnalysisParams, spec: MixedNormSpec, w: WeightSequence, extra=None) -> dict:
    out = {
        "a": params.a,
        "space": params.space,
        "jmax": params.jmax,
        "p": getattr(spec.p, "source", spec.p),
        "q": getattr(spec.q, "source", spec.q),
        "weight": w.source,
        "alpha": w.alpha,
    }
    if extra:
        out.update(extra)
    return out


def norm_fourier_rn(f: GridFunction, spec: MixedNormSpec, w: WeightSequence,
                    params: AnalysisParams) -> NormReport:
    s = _spec_for(spec, params)
    if params.space == "F":
        pv, qv = s.exponents(f)
        if not (np.isfinite(pv).all() and np.isfinite(qv).all()):
            raise HypothesisError("the F scale needs p^+ < inf and q^+ < inf", {"p_plus": np.inf})
    pieces = littlewood_paley_pieces(f, params.jmax)
    seq = _weighted([p.values for p in pieces], w, f)
    return NormReport(
        value=mixed_norm(seq, s),
        per_scale=_per_scale(seq, s),
        truncation_j=params.jmax,
        grid_h=f.spacing,
        params=_echo(params, spec, w),
        kind="fourier",
    )


def local_means(f: GridFunction, system: KernelSystem, jmax: int) -> list[np.ndarray]:
    out = []
    for k in range(jmax + 1):
        phi = system.phi_level(k)
        if phi is None:
            out.append(np.zeros(f.dims))
        else:
            out.append(convolve(f, phi, check_overflow=False).values)
    return out


def _peetre_stack(pieces, spacing, a):
    return [peetre_sup(v, spacing, 2.0**k, a) if np.any(v) else np.zeros_like(v)
            for k, v in enumerate(pieces)]


def norm_localmeans_rn(f: GridFunction, system: KernelSystem, spec: MixedNormSpec, w: WeightSequence,
                       params: AnalysisParams, check: bool = True) -> NormReport:
    """Local-means norm; ``value`` uses ``|Phi_k * f|``, ``peetre`` the maximal functions."""
    s = _spec_for(spec, params)
    consts = check_hypotheses(params, s, w, f, system) if check else {}
    pieces = local_means(f, system, params.jmax)
    seq = _weighted(pieces, w, f)
    peetre = _weighted(_peetre_stack(pieces, f.spacing, params.a), w, f)
    return NormReport(
        value=mixed_norm(seq, s),
        per_scale=_per_scale(seq, s),
        truncation_j=params.jmax,
        grid_h=f.spacing,
        params=_echo(params, spec, w, consts),
        peetre=mixed_norm(peetre, s),
        kind="localmeans",
    )


def _domain_pieces(f, d, system, jmax):
    out = []
    for k in range(jmax + 1):
        g = _domain_piece(f, d, system, k)
        out.append(np.zeros(f.dims) if g is None else g.values)
    return out


def intrinsic_norm_peetre(f: GridFunction, d: Domain, system: KernelSystem, spec: MixedNormSpec,
                          w: WeightSequence, params: AnalysisParams, check: bool = True) -> NormReport:
    """Mixed norm over Omega of ``w_k (Phi_k^* f)_a^Omega``; ``f`` is read on Omega only."""
    mask = d.mask(f)
    s = _spec_for(spec, params, mask)
    consts = check_hypotheses(params, s, w, f, system) if check else {}
    pieces = _domain_pieces(f, d, system, params.jmax)
    maxed = [np.where(mask, v, 0.0) for v in _peetre_stack(pieces, f.spacing, params.a)]
    seq = _weighted(maxed, w, f)
    value = mixed_norm(seq, s)
    return NormReport(
        value=value,
        per_scale=_per_scale(seq, s),
        truncation_j=params.jmax,
        grid_h=f.spacing,
        params=_echo(params, spec, w, consts),
        peetre=value,
        kind="intrinsic-peetre",
    )


def intrinsic_norm_localmeans(f: GridFunction, d: Domain, system: KernelSystem, spec: MixedNormSpec,
                              w: WeightSequence, params: AnalysisParams, check: bool = True) -> NormReport:
    """Mixed norm over Omega of ``w_k |Phi_k * f|``."""
    mask = d.mask(f)
    s = _spec_for(spec, params, mask)
    if check:
        if not system.L_phi > w.alpha2:
            raise HypothesisError(f"required L_phi > {w.alpha2:.6g}", {"L_phi": w.alpha2})
    pieces = _domain_pieces(f, d, system, params.jmax)
    seq = _weighted(pieces, w, f)
    return NormReport(
        value=mixed_norm(seq, s),
        per_scale=_per_scale(seq, s),
        truncation_j=params.jmax,
        grid_h=f.spacing,
        params=_echo(params, spec, w),
        kind="intrinsic-localmeans",
    )


def rtrick_ratios(f: GridFunction, d: Domain, system: KernelSystem, a: float, r: float,
                  points_per_level: int = 40, seed: int = 0, L_psi: float | None = None) -> list:
    """Ratios ``|(Phi_j*f)(x)|^r / RHS(x)`` of the pointwise r-trick inequality at
    random Omega cells, where

    ``RHS = sum_{k>=j} 2^{(j-k) L_psi r} 2^{kn} int_Omega |(Phi_k*f)(y)|^r (1+2^j|x-y|)^{-ar} dy``.
    """
    L_psi = system.L_psi_target if L_psi is None else L_psi
    rng = np.random.default_rng(seed)
    mask = d.mask(f)
    pieces = _domain_pieces(f, d, system, system.jmax)
    active = [k for k, v in enumerate(pieces) if np.any(v)]
    pts = f.points()[mask.ravel()]
    n, vol = f.ndim, f.cell_volume
    powered = {k: np.abs(pieces[k][mask]) ** r for k in active}
    out = []
    for j in active:
        lhs_all = np.abs(pieces[j][mask]) ** r
        cand = np.flatnonzero(lhs_all > 1e-12 * lhs_all.max()) if lhs_all.max() > 0 else []
        if len(cand) == 0:
            continue
        pick = rng.choice(cand, size=min(points_per_level, len(cand)), replace=False)
        for idx in pick:
            x = pts[idx]
            dist = np.sqrt(((pts - x) ** 2).sum(-1))
            decay = (1.0 + 2.0**j * dist) ** (-a * r)
            rhs = 0.0
            for k in active:
                if k < j:
                    continue
                rhs += 2.0 ** ((j - k) * L_psi * r) * 2.0 ** (k * n) * float((powered[k] * decay).sum()) * vol
            out.append((j, float(lhs_all[idx] / rhs)))
    return out
