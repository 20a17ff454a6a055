"""The extension operator ``Ef = sum_j Psi_j * (Phi_j * f)_Omega`` and the
studies that measure it: restriction, boundedness, envelope estimates and
uniformity across exponent configurations.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import (
    AnalysisParams,
    HypothesisError,
    _domain_pieces,
    exponent_constants,
    intrinsic_norm_peetre,
    norm_localmeans_rn,
)
from .geometry import Domain, restrict
from .gridcore import GridError, GridFunction, convolve
from .kernels import KernelSystem
from .maximal import peetre_sup
from .varspaces import FunctionSequence, MixedNormSpec, mixed_norm
from .weights import WeightSequence

__all__ = [
    "Envelope",
    "ExtensionReport",
    "envelope",
    "x_norm",
    "extension_requirements",
    "check_extension_hypotheses",
    "extension_terms",
    "extend",
    "restriction_residuals",
    "boundedness_study",
    "estimate_constants",
    "bridge_ratio",
    "UniformityRow",
    "uniformity_study",
    "bands_overlap",
]


@dataclass(frozen=True)
class Envelope:
    levels: tuple
    a: float

    def as_sequence(self) -> FunctionSequence:
        return FunctionSequence(list(self.levels))


def envelope(seq: FunctionSequence, a: float) -> Envelope:
    """``G^j(x) = sup_y |g^j(y)| / (1 + 2^j |x - y|)^a`` on the grid."""
    if not a > 0:
        raise ValueError("a must be positive")
    out = []
    for j, g in enumerate(seq.entries):
        vals = peetre_sup(g.values, g.spacing, 2.0**j, a) if np.any(g.values) else np.zeros(g.dims)
        out.append(g.with_values(vals))
    return Envelope(tuple(out), float(a))


def x_norm(env: Envelope, w: WeightSequence, spec: MixedNormSpec) -> float:
    """Norm of the sequence ``(w_j G^j)`` in ``l_q(L_p)`` or ``L_p(l_q)``."""
    entries = [g.with_values(g.values * w.on_grid(j, g)) for j, g in enumerate(env.levels)]
    return mixed_norm(FunctionSequence(entries), spec)


# -- hypotheses -----------------------------------------------------------------------


def extension_requirements(consts: dict, n: int, a: float, w: WeightSequence) -> dict:
    """Minimal moment orders for the target space (strict inequalities)."""
    need_psi = max(
        (n + consts["clog_inv_q"]) / min(consts["p_minus"], consts["q_minus"]) + w.alpha - w.alpha1,
        a - w.alpha1,
    )
    return {"L_psi": float(need_psi), "L_phi": float(w.alpha2)}


def check_extension_hypotheses(system: KernelSystem, spec: MixedNormSpec, w: WeightSequence,
                               params: AnalysisParams, grid: GridFunction) -> dict:
    consts = exponent_constants(spec, grid)
    need = extension_requirements(consts, grid.ndim, params.a, w)
    short = {}
    if not system.L_psi_target > need["L_psi"]:
        short["L_psi"] = need["L_psi"]
    if not system.L_phi_target > need["L_phi"]:
        short["L_phi"] = need["L_phi"]
    if short:
        parts = ", ".join(f"required {k} > {v:.6g}" for k, v in short.items())
        raise HypothesisError(parts, short)
    return need


# -- the operator ---------------------------------------------------------------------


def _check_cone(system: KernelSystem, d: Domain):
    if not math.isclose(system.aperture, d.lipschitz_A, rel_tol=1e-12) or system.dim != d.dim:
        raise GridError("kernel cone does not match the domain (aperture or dimension)")


def extension_terms(f: GridFunction, d: Domain, system: KernelSystem, J: int) -> list[GridFunction]:
    """``g^j = (Phi_j * f)_Omega`` for ``j = 0..J``: local means on Omega, zero outside."""
    _check_cone(system, d)
    if J > system.jmax:
        raise ValueError("J exceeds jmax")
    return [f.with_values(v) for v in _domain_pieces(f, d, system, J)]


def extend(f: GridFunction, d: Domain, system: KernelSystem, J: int | None = None) -> GridFunction:
    """``sum_{j<=J} Psi_j * (Phi_j * f)_Omega``; only the Omega values of ``f`` are read."""
    J = system.jmax if J is None else J
    total = np.zeros(f.dims)
    for j, g in enumerate(extension_terms(f, d, system, J)):
        psi = system.psi_level(j)
        if psi is None or not np.any(g.values):
            continue
        total = total + convolve(g, psi, check_overflow=False).values
    return f.with_values(total)


def restriction_residuals(f: GridFunction, d: Domain, system: KernelSystem, J: int | None = None,
                          Ef: GridFunction | None = None) -> dict:
    """Relative sup errors of ``Ef - f`` on Omega, split at distance
    ``2 * 2^-J * support_radius`` from the boundary, plus the exact-interior
    identity ``Ef - sum Psi_j*Phi_j*f``."""
    J = system.jmax if J is None else J
    Ef = extend(f, d, system, J) if Ef is None else Ef
    mask = d.mask(f)
    scale = float(np.abs(f.values[mask]).max()) if mask.any() else 0.0
    if scale == 0:
        return {"interior": 0.0, "near_boundary": 0.0, "exact_interior": 0.0, "threshold": 0.0}
    dist = d.boundary_distance(f) / math.sqrt(1.0 + d.lipschitz_A**2)
    threshold = 2.0 * 2.0**-J * system.support_radius
    inner = mask & (dist > threshold)
    outer = mask & ~inner
    err = np.abs(Ef.values - f.values)
    exact = np.abs(Ef.values - _reproduced(restrict(f, d), system, J))
    return {
        "interior": float(err[inner].max()) / scale if inner.any() else 0.0,
        "near_boundary": float(err[outer].max()) / scale if outer.any() else 0.0,
        "exact_interior": float(exact[inner].max()) / scale if inner.any() else 0.0,
        "threshold": threshold,
    }


def _reproduced(f: GridFunction, system: KernelSystem, J: int) -> np.ndarray:
    """``sum_j Psi_j * Phi_j * f`` with the same box-sized convolutions as :func:`extend`."""
    total = np.zeros(f.dims)
    for j in range(J + 1):
        phi, psi = system.phi_level(j), system.psi_level(j)
        if phi is None:
            break
        total = total + convolve(convolve(f, phi, check_overflow=False), psi, check_overflow=False).values
    return total


@dataclass
class ExtensionReport:
    name: str
    restriction_residual: float
    boundary_residual: float
    exact_interior_residual: float
    norm_ratio: float
    extension_norm: float
    intrinsic_norm: float
    truncation_j: int
    tail_estimate: float
    per_scale: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def boundedness_study(family, d: Domain, system: KernelSystem, spec: MixedNormSpec, w: WeightSequence,
                      params: AnalysisParams, names=None, check: bool = True) -> list[ExtensionReport]:
    """``||Ef|| / ||f||_intrinsic`` for each family member.

    ``||Ef||`` is the local-means norm on the whole grid, ``||f||`` the
    intrinsic Peetre norm on Omega.
    """
    if not family:
        return []
    if check:
        check_extension_hypotheses(system, spec, w, params, family[0])
    delta = min(system.L_psi_target - params.a + w.alpha1, system.L_phi_target - w.alpha2)
    reports = []
    for k, f in enumerate(family):
        J = min(params.jmax, system.jmax)
        Ef = extend(f, d, system, J)
        res = restriction_residuals(f, d, system, J, Ef)
        ext = norm_localmeans_rn(Ef, system, spec, w, params, check=check)
        intr = intrinsic_norm_peetre(f, d, system, spec, w, params, check=check)
        lead = max((c for _, c in ext.per_scale), default=0.0)
        reports.append(
            ExtensionReport(
                name=names[k] if names else f"f{k}",
                restriction_residual=res["interior"],
                boundary_residual=res["near_boundary"],
                exact_interior_residual=res["exact_interior"],
                norm_ratio=ext.value / intr.value if intr.value > 0 else float("nan"),
                extension_norm=ext.value,
                intrinsic_norm=intr.value,
                truncation_j=J,
                tail_estimate=lead * 2.0 ** (-(J + 1) * delta) if delta > 0 else float("inf"),
                per_scale=ext.per_scale,
            )
        )
    return reports


# -- the estimates of the boundedness proof -----------------------------------------------


def estimate_constants(system: KernelSystem, w: WeightSequence, a: float, grid: GridFunction,
                       sequences: int = 4, seed: int = 0, points: int = 200) -> list[float]:
    """Empirical constants ``c`` in

    ``w_l(x) |Phi_l * Psi_j * g^j (x)| <= c w_j(x) 2^{-|j-l| delta} G^j(x)``

    for random sequences ``g^j``; one constant (max over ``j, l, x``) per sequence.
    """
    delta = min(system.L_psi_target - a + w.alpha1, system.L_phi_target - w.alpha2)
    rng = np.random.default_rng(seed)
    levels = system.active_levels()
    out = []
    for _ in range(sequences):
        worst = 0.0
        picks = rng.choice(grid.values.size, size=points, replace=False)
        for j in levels:
            raw = rng.standard_normal(grid.dims) * _window(grid)
            g = grid.with_values(raw)
            G = peetre_sup(raw, grid.spacing, 2.0**j, a).ravel()[picks]
            pj = convolve(g, system.psi_level(j), check_overflow=False)
            wj = w.on_grid(j, grid).ravel()[picks]
            for l in levels:
                lhs = np.abs(convolve(pj, system.phi_level(l), check_overflow=False).values).ravel()[picks]
                lhs = lhs * w.on_grid(l, grid).ravel()[picks]
                rhs = wj * 2.0 ** (-abs(j - l) * delta) * G
                ok = rhs > 0
                if ok.any():
                    worst = max(worst, float((lhs[ok] / rhs[ok]).max()))
        out.append(worst)
    return out


def _window(grid: GridFunction):
    """Smooth taper keeping random test sequences away from the box edge."""
    mesh = grid.mesh()
    lo = [b[0] for b in grid.box]
    hi = [b[1] for b in grid.box]
    out = np.ones(grid.dims)
    for m, a, b in zip(mesh, lo, hi):
        t = (m - a) / (b - a)
        out = out * np.clip(np.sin(np.pi * t), 0, None) ** 2
    return out


def bridge_ratio(f: GridFunction, d: Domain, system: KernelSystem, spec: MixedNormSpec,
                 w: WeightSequence, params: AnalysisParams) -> float:
    """``||(Phi_j * f)_Omega||_X / intrinsic Peetre norm``; ``X`` uses envelopes over all cells."""
    terms = extension_terms(f, d, system, min(params.jmax, system.jmax))
    env = envelope(FunctionSequence(terms), params.a)
    s = MixedNormSpec(spec.p, spec.q, params.order)
    intr = intrinsic_norm_peetre(f, d, system, spec, w, params, check=False)
    return x_norm(env, w, s) / intr.value


# -- uniformity across configurations ----------------------------------------------------


@dataclass
class UniformityRow:
    config: str
    L: int
    accepted: bool
    required: dict
    band: tuple | None = None
    ratios: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def bands_overlap(bands, widen: float = 0.25) -> bool:
    """Whether all bands ``[lo, hi]`` share a point after widening each by ``widen``."""
    bands = [b for b in bands if b is not None]
    if not bands:
        return False
    lo = max(b[0] * (1 - widen) for b in bands)
    hi = min(b[1] * (1 + widen) for b in bands)
    return lo <= hi


def uniformity_study(configs, systems, family, d: Domain, names=None) -> list[UniformityRow]:
    """Run :func:`boundedness_study` for every ``(config, system)`` pair.

    ``configs`` is a list of ``(label, spec, weight, params)``; a system whose
    moment orders fall short of a config's requirements is recorded as
    out of reach instead of being run.
    """
    rows = []
    for label, spec, w, params in configs:
        for system in systems:
            consts = exponent_constants(spec, family[0])
            need = extension_requirements(consts, family[0].ndim, params.a, w)
            ok = system.L_psi_target > need["L_psi"] and system.L_phi_target > need["L_phi"]
            row = UniformityRow(label, system.L_psi_target, ok, need)
            if ok:
                reps = boundedness_study(family, d, system, spec, w, params, names)
                ratios = [r.norm_ratio for r in reps]
                row.ratios = ratios
                row.band = (float(min(ratios)), float(max(ratios)))
            rows.append(row)
    return rows
