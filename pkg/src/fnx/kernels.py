"""Cone-supported kernel systems with vanishing moments and an exact
discrete Calderón reproducing identity.

Every level kernel ``D_j`` is built directly on the lattice ``h Z^n``: a
polynomial times a smooth bump supported in ``(-K) ∩ B(0, r 2^-j)``, with the
polynomial chosen so that the *discrete* moments are exactly
``h^n sum x^beta D_j = delta_{beta,0}`` for ``|beta| < L``. Levels too small
for the grid fall back to the discrete identity. From these

    Phi_0 = D_0,       Phi_j = D_j - D_{j-1},
    Psi_0 = R(D_0),    Psi_j = Q(D_j, D_{j-1}),

where ``P(u) = 1 - (1-u)^M (1 + M u)``, ``R = P/u`` and
``Q(u, v) = (P(u) - P(v)) / (u - v)`` are polynomials evaluated in the
convolution algebra. Then ``sum_{j<=J} Psi_j * Phi_j = P(D_J)`` exactly, and
``Psi`` inherits ``(M-1) L`` vanishing moments from the ``Phi`` family.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy.signal import fftconvolve

from .geometry import Cone
from .gridcore import (
    MOMENT_ORDER_CAP,
    GridError,
    GridFunction,
    UnderResolvedError,
    centered_grid,
    convolve,
    multi_indices,
    read_grid,
    write_grid,
)

__all__ = [
    "KernelError",
    "ConeKernel",
    "KernelSystem",
    "cone_bump",
    "gram_kernel",
    "construct_phi0",
    "derive_phi",
    "construct_psi",
    "build_system",
    "well_resolved_depth",
    "tauberian_check",
    "calderon_sum",
    "calderon_residual",
    "universal_system",
    "moment_residuals",
    "verified_moment_order",
    "support_violation",
    "psi_level_radius",
    "interaction_integrals",
    "decay_slopes",
    "write_bundle",
    "read_bundle",
]

GRAM_COND_LIMIT = 1e12
MIN_CELLS = 4
WELL_RESOLVED_CELLS = 16
MOMENT_RTOL = 1e-7
APEX_HOLE = 0.3


class KernelError(RuntimeError):
    pass


def _profile(u):
    """``exp(1/(u^2 - 1))`` on ``|u| < 1``, zero elsewhere."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(1.0 / (u[inside] ** 2 - 1.0))
    return out


def cone_bump(coords, rho: float, A: float):
    """Smooth bump supported in ``(-K) ∩ B(0, rho)`` with ``-K = {|x'| < -x_n / A}``.

    Radial factor ``psi(|x|/rho) exp(-APEX_HOLE rho/|x|)`` (flat at the apex,
    concentrated near it, which keeps the moment-corrected kernels small)
    times an angular factor ``psi(A|x'| / -x_n)`` vanishing on the cone wall.
    """
    coords = [np.asarray(c, dtype=float) for c in coords]
    xn = coords[-1]
    radius = np.sqrt(sum(c**2 for c in coords))
    below = xn < 0
    safe = np.where(radius > 0, radius, 1.0)
    out = _profile(radius / rho) * np.where(radius > 0, np.exp(-APEX_HOLE * rho / safe), 0.0)
    if len(coords) > 1:
        lateral = np.sqrt(sum(c**2 for c in coords[:-1]))
        ratio = np.zeros_like(xn)
        ratio[below] = A * lateral[below] / (-xn[below])
        out = out * _profile(ratio)
    return np.where(below, out, 0.0)


def _offsets(cells: int, n: int, h: float):
    ax = np.arange(-cells, cells + 1) * h
    return np.meshgrid(*([ax] * n), indexing="ij")


@dataclass(frozen=True, eq=False)
class ConeKernel:
    """A polynomial times :func:`cone_bump`, normalised on the lattice.

    ``density`` holds the kernel values at the lattice offsets; the lattice
    weights ``h^n * density`` sum to one and have vanishing moments of
    orders ``1 .. L-1``.
    """

    dim: int
    spacing: float
    radius: float
    aperture: float
    order: int
    coeffs: np.ndarray
    density: np.ndarray
    gram_condition: float

    @property
    def grid(self) -> GridFunction:
        return centered_grid(self.density, self.spacing)

    @property
    def mass(self) -> np.ndarray:
        return self.density * self.spacing**self.dim

    def evaluate(self, *coords):
        """The underlying continuous function ``P(x) b(x)``."""
        scaled = [np.asarray(c, dtype=float) / self.radius for c in coords]
        poly = np.zeros(np.broadcast_shapes(*(s.shape for s in scaled)))
        for c, beta in zip(self.coeffs, multi_indices(self.dim, self.order)):
            term = np.ones_like(poly)
            for s, b in zip(scaled, beta.components):
                if b:
                    term = term * s**b
            poly = poly + c * term
        return poly * cone_bump(coords, self.radius, self.aperture)


def gram_kernel(spacing: float, radius: float, A: float, L: int, dim: int) -> ConeKernel:
    """Solve the moment Gram system for one level on the lattice ``spacing Z^dim``."""
    if L < 1:
        raise ValueError("moment order L must be >= 1")
    if radius / spacing < MIN_CELLS:
        raise UnderResolvedError(
            f"radius {radius:g} spans {radius / spacing:.2f} cells; need {MIN_CELLS}"
        )
    cells = int(math.ceil(radius / spacing))
    coords = _offsets(cells, dim, spacing)
    bump = cone_bump(coords, radius, A)
    support = bump > 0
    weights = bump[support] * spacing**dim
    scaled = [c[support] / radius for c in coords]
    betas = multi_indices(dim, L)
    mons = np.empty((len(betas), weights.size))
    for k, beta in enumerate(betas):
        term = np.ones(weights.size)
        for s, b in zip(scaled, beta.components):
            if b:
                term = term * s**b
        mons[k] = term
    gram = (mons * weights) @ mons.T
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > GRAM_COND_LIMIT:
        raise UnderResolvedError(
            f"Gram matrix condition {cond:.3g} exceeds {GRAM_COND_LIMIT:g} "
            f"(radius {radius:g}, spacing {spacing:g}, L={L})"
        )
    rhs = np.zeros(len(betas))
    rhs[0] = 1.0
    coeffs = np.linalg.solve(gram, rhs)
    density = np.zeros(bump.shape)
    density[support] = (coeffs @ mons) * bump[support]
    return ConeKernel(dim, spacing, radius, A, L, coeffs, density, cond)


def construct_phi0(cone: Cone, L: int, radius: float, spacing: float) -> ConeKernel:
    """``Phi_0`` with ``int Phi_0 = 1`` and vanishing moments ``1 <= |beta| < L``."""
    if cone.sign != -1:
        raise KernelError("kernels live in the reflected cone -K (sign -1)")
    try:
        return gram_kernel(spacing, radius, cone.aperture_A, L, cone.dim)
    except UnderResolvedError as exc:
        raise KernelError(str(exc)) from None


def derive_phi(phi0: ConeKernel) -> GridFunction:
    """``Phi = Phi_0 - 2^-n Phi_0(./2)``; the coarse copy is re-solved on the lattice
    so that ``sum Phi_j`` telescopes exactly."""
    coarse = gram_kernel(phi0.spacing, 2.0 * phi0.radius, phi0.aperture, phi0.order, phi0.dim)
    return _as_grid(_sub(phi0.mass, coarse.mass), phi0.spacing, phi0.dim)


# -- convolution-algebra helpers on mass arrays (odd, centred) ---------------------


def _embed(a: np.ndarray, cells: int) -> np.ndarray:
    """Centre ``a`` inside a ``(2 cells + 1)^n`` array."""
    out = np.zeros((2 * cells + 1,) * a.ndim, dtype=a.dtype)
    half = [s // 2 for s in a.shape]
    out[tuple(slice(cells - h_, cells + h_ + 1) for h_ in half)] = a
    return out


def _sub(a, b):
    cells = max(max(a.shape), max(b.shape)) // 2
    return _embed(a, cells) - _embed(b, cells)


def _delta(n: int) -> np.ndarray:
    return np.ones((1,) * n)


def _as_grid(mass: np.ndarray, spacing: float, dim: int) -> GridFunction:
    return centered_grid(mass / spacing**dim, spacing)


def _support_mask(cells: int, dim: int, radius_cells: float, A: float) -> np.ndarray:
    """Closed ``(-K) ∩ B(0, radius)`` on integer offsets."""
    idx = np.meshgrid(*([np.arange(-cells, cells + 1)] * dim), indexing="ij")
    xn = idx[-1]
    inside = (sum(i.astype(float) ** 2 for i in idx) <= (radius_cells + 1e-9) ** 2) & (xn <= 0)
    if dim > 1:
        lateral = np.sqrt(sum(i.astype(float) ** 2 for i in idx[:-1]))
        inside &= A * lateral <= -xn + 1e-9
    return inside


class _Spectral:
    """Products of centred mass arrays via one shared FFT size."""

    def __init__(self, cells: int, dim: int):
        self.cells = cells
        self.dim = dim
        self.size = sfft.next_fast_len(2 * cells + 1, real=True)
        self.shape = (self.size,) * dim
        self.axes = tuple(range(dim))

    def forward(self, mass: np.ndarray) -> np.ndarray:
        half = mass.shape[0] // 2
        buf = np.zeros(self.shape)
        buf[tuple(slice(0, s) for s in mass.shape)] = mass
        buf = np.roll(buf, shift=(-half,) * self.dim, axis=self.axes)
        return sfft.rfftn(buf, axes=self.axes)

    def backward(self, spec: np.ndarray, radius_cells: float, A: float) -> np.ndarray:
        buf = sfft.irfftn(spec, self.shape, axes=self.axes)
        buf = np.roll(buf, shift=(self.cells,) * self.dim, axis=self.axes)
        out = buf[tuple(slice(0, 2 * self.cells + 1) for _ in range(self.dim))].copy()
        out[~_support_mask(self.cells, self.dim, radius_cells, A)] = 0.0
        return out


def _complete_homogeneous(s, t, k):
    """``h_k(s, t) = sum_{i=0}^k s^i t^(k-i)``; ``h_0 = 1``."""
    t_pows = [np.ones_like(t)]
    for _ in range(k):
        t_pows.append(t_pows[-1] * t)
    total = np.zeros_like(s)
    s_pow = np.ones_like(s)
    for i in range(k + 1):
        total = total + s_pow * t_pows[k - i]
        s_pow = s_pow * s
    return total


def _psi_pair_spectrum(fine_hat, coarse_hat, M):
    """``Q(u, v) = (1 + M) h_{M-1}(s, t) - M h_M(s, t)`` with ``s = 1-u``, ``t = 1-v``."""
    s = 1.0 - fine_hat
    t = 1.0 - coarse_hat
    return (1 + M) * _complete_homogeneous(s, t, M - 1) - M * _complete_homogeneous(s, t, M)


def _psi_start_spectrum(hat, M):
    """``R(u) = P(u) / u = sum_{k<M} s^k - M s^M`` with ``s = 1-u``."""
    s = 1.0 - hat
    total = np.zeros_like(s)
    p = np.ones_like(s)
    for _ in range(M):
        total = total + p
        p = p * s
    return total - M * p


def _multiplier_degree(L_phi: int, L_psi: int) -> int:
    return int(math.ceil(L_psi / L_phi)) + 1


def _psi_kernel(fine, coarse, M, dim, A, radius_cells):
    """Mass array of ``Q(fine, coarse)`` (or ``R(fine)`` when ``coarse`` is None)."""
    cells = int(math.ceil(radius_cells))
    sp = _Spectral(cells, dim)
    fine_hat = sp.forward(fine)
    if coarse is None:
        spec = _psi_start_spectrum(fine_hat, M)
    else:
        spec = _psi_pair_spectrum(fine_hat, sp.forward(coarse), M)
    return sp.backward(spec, radius_cells, A)


def construct_psi(phi0: ConeKernel, phi: GridFunction | None, L_psi: int):
    """Dual start function and generator for the family generated by ``phi0``.

    Returns ``(psi0, psi)`` as grid functions with ``Psi_0 * Phi_0 + sum_j Psi_j * Phi_j``
    telescoping to ``P(D_J)``. ``phi`` is accepted for symmetry; the
    construction only needs the coarse level, which is rebuilt from ``phi0``.
    """
    if L_psi < 1:
        raise ValueError("L_psi must be >= 1")
    M = _multiplier_degree(phi0.order, L_psi)
    coarse = gram_kernel(phi0.spacing, 2.0 * phi0.radius, phi0.aperture, phi0.order, phi0.dim)
    h, n, A = phi0.spacing, phi0.dim, phi0.aperture
    psi0 = _psi_kernel(phi0.mass, None, M, n, A, M * phi0.radius / h)
    psi = _psi_kernel(phi0.mass, coarse.mass, M, n, A, M * coarse.radius / h)
    return _as_grid(psi0, h, n), _as_grid(psi, h, n)


# -- moments -------------------------------------------------------------------------


def moment_residuals(kernel: GridFunction, L: int, radius: float) -> dict:
    """``|int x^beta K| / (||K||_1 radius^|beta|)`` for ``|beta| < L`` (``beta = 0`` raw)."""
    L = min(L, MOMENT_ORDER_CAP + 1)
    mesh = kernel.mesh()
    vals = kernel.values * kernel.cell_volume
    l1 = float(np.abs(vals).sum())
    out = {}
    for beta in multi_indices(kernel.ndim, L):
        w = np.ones(kernel.dims)
        for c, b in zip(mesh, beta.components):
            if b:
                w = w * (c / radius) ** b
        out[beta.components] = float(abs((w * vals).sum())) / l1
    return out


def support_violation(kernel: GridFunction, radius: float, A: float) -> float:
    """Largest ``|K|`` outside the closed ``(-K) ∩ B(0, radius)``; zero by construction."""
    cells = kernel.dims[0] // 2
    inside = _support_mask(cells, kernel.ndim, radius / kernel.spacing, A)
    outside = np.abs(kernel.values)[~inside]
    return float(outside.max()) if outside.size else 0.0


def psi_level_radius(system: "KernelSystem", j: int) -> float:
    """Support radius of ``Psi_j``."""
    M = system.multiplier_degree
    return M * system.radius if j == 0 else 2.0 * M * system.radius * 2.0**-j


def verified_moment_order(kernel: GridFunction, radius: float, rtol: float = MOMENT_RTOL,
                          skip_zeroth: bool = False) -> int:
    """Largest ``L`` with every moment ``|beta| < L`` below ``rtol`` (relative)."""
    res = moment_residuals(kernel, MOMENT_ORDER_CAP + 1, radius)
    L = 0
    for order in range(MOMENT_ORDER_CAP + 1):
        vals = [v for b, v in res.items() if sum(b) == order]
        if order == 0 and skip_zeroth:
            L = 1
            continue
        if max(vals) > rtol:
            break
        L = order + 1
    return L


# -- the system ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelSystem:
    """Level kernels ``Phi_j``, ``Psi_j`` (``j = 0 .. jmax``) on a shared lattice.

    Levels past ``resolved_levels + 1`` are identically zero: there the
    reproducing sum has already reached the identity on the grid.
    """

    dim: int
    spacing: float
    radius: float
    aperture: float
    L_phi_target: int
    L_psi_target: int
    jmax: int
    multiplier_degree: int
    resolved_levels: int
    phi_levels: tuple
    psi_levels: tuple
    phi_generator: GridFunction
    psi_generator: GridFunction
    L_phi: int
    L_psi: int
    tauber_epsilon: float
    config_hash: str
    gram_conditions: tuple = ()

    @property
    def cone(self) -> Cone:
        return Cone(self.aperture, self.dim, -1)

    @property
    def phi0(self) -> GridFunction:
        return self.phi_levels[0]

    @property
    def psi0(self) -> GridFunction:
        return self.psi_levels[0]

    @property
    def phi(self) -> GridFunction:
        return self.phi_generator

    @property
    def psi(self) -> GridFunction:
        return self.psi_generator

    @property
    def support_radius(self) -> float:
        """Radius of the ball containing every kernel of the system."""
        return 2.0 * self.multiplier_degree * self.radius

    def active_levels(self) -> list[int]:
        return [j for j in range(self.jmax + 1) if self.phi_level(j) is not None]

    def phi_level(self, j: int) -> GridFunction | None:
        return self.phi_levels[j] if j < len(self.phi_levels) else None

    def psi_level(self, j: int) -> GridFunction | None:
        return self.psi_levels[j] if j < len(self.psi_levels) else None

    def level_radius(self, j: int) -> float:
        """Support radius of ``Phi_j``."""
        return self.radius * 2.0 ** (1 - j) if j >= 1 else self.radius

    def manifest(self) -> dict:
        return {
            "dim": self.dim,
            "spacing": self.spacing,
            "radius": self.radius,
            "aperture": self.aperture,
            "L_phi_target": self.L_phi_target,
            "L_psi_target": self.L_psi_target,
            "L_phi": self.L_phi,
            "L_psi": self.L_psi,
            "jmax": self.jmax,
            "multiplier_degree": self.multiplier_degree,
            "resolved_levels": self.resolved_levels,
            "tauber_epsilon": self.tauber_epsilon,
            "config_hash": self.config_hash,
        }


def well_resolved_depth(spacing: float, radius: float, cells: float = WELL_RESOLVED_CELLS) -> int:
    """Deepest level whose kernel radius still spans ``cells`` lattice steps."""
    return max(0, int(math.floor(math.log2(radius / (spacing * cells)))))


def _config_hash(**params) -> str:
    text = json.dumps(params, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def build_system(
    dim: int = 2,
    spacing: float = 3.0 / 256,
    radius: float = 0.25,
    aperture: float = 1.0,
    L_phi: int = 4,
    L_psi: int = 6,
    jmax: int = 8,
    depth: int | None = None,
) -> KernelSystem:
    """Build the full two-family system on the lattice ``spacing Z^dim``.

    ``depth`` caps the number of Gram-solved levels past ``D_0`` (default: as
    many as the lattice resolves). A fixed depth gives the same operator on
    every grid fine enough to resolve it, which is what refinement studies
    compare. The level after the last solved one closes the reproducing sum.
    """
    if L_phi < 1 or L_psi < 1:
        raise ValueError("moment orders must be >= 1")
    if jmax < 1:
        raise ValueError("jmax must be >= 1")
    h, n, A = float(spacing), int(dim), float(aperture)
    M = _multiplier_degree(L_phi, L_psi)
    phi0 = construct_phi0(Cone(A, n, -1), L_phi, radius, h)
    coarse = gram_kernel(h, 2.0 * radius, A, L_phi, n)

    levels = [phi0]
    last = jmax if depth is None else min(jmax, depth)
    for j in range(1, last + 1):
        try:
            levels.append(gram_kernel(h, radius * 2.0**-j, A, L_phi, n))
        except UnderResolvedError:
            break
    resolved = len(levels) - 1
    if depth is not None and resolved < min(jmax, depth):
        raise KernelError(f"depth {depth} is not resolved at spacing {h:g} (only {resolved})")
    masses = [coarse.mass] + [k.mass for k in levels]
    if resolved < jmax:
        masses.append(_delta(n))

    phi_levels, psi_levels = [], []
    for j in range(0, min(resolved + 1, jmax) + 1):
        fine, crs = masses[j + 1], masses[j]
        if j == 0:
            phi_m = fine
            psi_m = _psi_kernel(fine, None, M, n, A, M * radius / h)
        else:
            phi_m = _sub(fine, crs)
            psi_m = _psi_kernel(fine, crs, M, n, A, M * 2.0 * radius * 2.0**-j / h)
        phi_levels.append(_as_grid(phi_m, h, n))
        psi_levels.append(_as_grid(psi_m, h, n))

    phi_gen = _as_grid(_sub(phi0.mass, coarse.mass), h, n)
    psi_gen = _as_grid(_psi_kernel(phi0.mass, coarse.mass, M, n, A, M * 2.0 * radius / h), h, n)
    L_phi_ver = verified_moment_order(phi_gen, 2.0 * radius)
    L_psi_ver = verified_moment_order(psi_gen, 2.0 * M * radius)
    if L_phi_ver < L_phi or L_psi_ver < L_psi:
        raise KernelError(
            f"moment verification failed: L_phi {L_phi_ver} (target {L_phi}), "
            f"L_psi {L_psi_ver} (target {L_psi})"
        )
    partial = KernelSystem(
        dim=n, spacing=h, radius=float(radius), aperture=A,
        L_phi_target=L_phi, L_psi_target=L_psi, jmax=jmax,
        multiplier_degree=M, resolved_levels=resolved,
        phi_levels=tuple(phi_levels), psi_levels=tuple(psi_levels),
        phi_generator=phi_gen, psi_generator=psi_gen,
        L_phi=L_phi_ver, L_psi=L_psi_ver, tauber_epsilon=float("nan"),
        config_hash=_config_hash(dim=n, spacing=h, radius=radius, aperture=A,
                                 L_phi=L_phi, L_psi=L_psi, jmax=jmax, depth=depth),
        gram_conditions=tuple(k.gram_condition for k in levels),
    )
    eps = tauberian_check(partial)
    return _replace(partial, tauber_epsilon=eps)


def _replace(system: KernelSystem, **changes) -> KernelSystem:
    from dataclasses import replace

    return replace(system, **changes)


# -- Tauberian conditions ----------------------------------------------------------


def _directions(dim: int, count: int = 64) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = np.linspace(0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    rng = np.random.default_rng(12345)
    d = rng.standard_normal((count * 4, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _radial_spectrum(kernel: GridFunction, radii: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """``min over directions of |K^(xi)|`` for each radius (angular frequency)."""
    pts = kernel.points().reshape(-1, kernel.ndim)
    vals = (kernel.values * kernel.cell_volume).ravel()
    keep = vals != 0
    pts, vals = pts[keep], vals[keep]
    out = np.empty(len(radii))
    proj = dirs @ pts.T
    for k, rad in enumerate(radii):
        phase = rad * proj
        re = np.cos(phase) @ vals
        im = np.sin(phase) @ vals
        out[k] = np.sqrt(re**2 + im**2).min()
    return out


def tauberian_check(system: KernelSystem, epsilon_grid=None, threshold: float = 1e-3) -> float:
    """Largest sampled ``eps`` with ``|Phi_0^| > threshold`` on ``|xi| < eps`` and
    ``|Phi_1^| > threshold`` on ``eps/2 < |xi| < 2 eps``.

    "Nonzero" is read as exceeding ``threshold`` (``Phi_0^(0) = 1``).
    """
    if epsilon_grid is None:
        epsilon_grid = np.geomspace(0.05 / system.radius, 0.5 * np.pi / system.spacing, 160)
    eps = np.asarray(epsilon_grid, dtype=float)
    phi0 = system.phi_level(0)
    phi1 = system.phi_level(1)
    if abs(phi0.integral()) <= threshold:
        raise KernelError("Phi_0 has (numerically) zero mean: no Tauberian radius exists")
    dirs = _directions(system.dim)
    radii = np.unique(np.concatenate([[0.0], eps, eps / 2, 2 * eps]))
    rad_fine = np.linspace(0, radii.max(), 1200)
    grid_r = np.unique(np.concatenate([radii, rad_fine]))
    s0 = _radial_spectrum(phi0, grid_r, dirs)
    s1 = _radial_spectrum(phi1, grid_r, dirs) if phi1 is not None else np.ones_like(grid_r)
    best = None
    for e in eps:
        ok0 = s0[grid_r < e].min() > threshold
        band = (grid_r > e / 2) & (grid_r < 2 * e)
        ok1 = s1[band].min() > threshold if band.any() else True
        if ok0 and ok1:
            best = e
    if best is None:
        raise KernelError(
            "no positive Tauberian radius found on the sampled grid "
            f"(the radius spans {system.radius / system.spacing:.1f} cells; use a finer grid)"
        )
    return float(best)


# -- reproducing formula -------------------------------------------------------------


def calderon_sum(system: KernelSystem, f: GridFunction, J: int) -> GridFunction:
    """``sum_{j=0}^J Psi_j * Phi_j * f`` in a fixed summation order.

    ``f`` is read as zero outside its box. The intermediate ``Phi_j * f`` is
    kept on a grid padded by the reach of ``Psi_j``, so no part of it that
    ``Psi_j`` can see is cut off at the box edge.
    """
    _check_grid(system, f)
    pad = int(math.ceil(max(psi_level_radius(system, j) for j in range(len(system.psi_levels))) / f.spacing))
    big = GridFunction(np.pad(f.values, pad), tuple(o - pad * f.spacing for o in f.origin), f.spacing)
    total = np.zeros(big.dims)
    for j in range(min(J, system.jmax) + 1):
        phi, psi = system.phi_level(j), system.psi_level(j)
        if phi is None:
            break
        piece = convolve(convolve(big, phi, check_overflow=False), psi, check_overflow=False)
        total = total + piece.values
    inner = tuple(slice(pad, pad + n) for n in f.dims)
    return f.with_values(total[inner])


def _check_grid(system, f):
    if f.ndim != system.dim or not math.isclose(f.spacing, system.spacing, rel_tol=1e-12):
        raise GridError("function grid does not match the kernel lattice")


def calderon_residual(system: KernelSystem, f: GridFunction, J: int, margin: float | None = None) -> float:
    """``||sum_{j<=J} Psi_j*Phi_j*f - f||_inf / ||f||_inf`` on the interior box."""
    if J > system.jmax:
        raise ValueError("J exceeds jmax")
    fmax = float(np.abs(f.values).max())
    if fmax == 0:
        raise ValueError("calderon_residual needs a nonzero f")
    margin = system.radius if margin is None else margin
    diff = np.abs(calderon_sum(system, f, J).values - f.values)
    m = int(math.ceil(margin / f.spacing))
    inner = tuple(slice(m, s - m) for s in f.dims)
    return float(diff[inner].max()) / fmax


def universal_system(Lmax: int, **params) -> list[KernelSystem]:
    """Systems with ``L_phi = L_psi = L`` for ``L = 1 .. Lmax`` on a shared cone and radius."""
    if not 1 <= Lmax <= 8:
        raise ValueError("Lmax must lie in 1..8")
    params = {k: v for k, v in params.items() if k not in ("L_phi", "L_psi")}
    workers = int(os.environ.get("FNX_THREADS", "1") or 1)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [pool.submit(build_system, L_phi=L, L_psi=L, **params) for L in range(1, Lmax + 1)]
        return [f.result() for f in futures]


# -- kernel interactions ------------------------------------------------------------


def interaction_integrals(system: KernelSystem, a: float, levels=None) -> np.ndarray:
    """``I[j, l] = int |(Phi_l * Psi_j)(z)| (1 + 2^j |z|)^a dz`` over active levels."""
    if levels is None:
        levels = system.active_levels()
    h, n = system.spacing, system.dim
    out = np.zeros((len(levels), len(levels)))
    for a_idx, j in enumerate(levels):
        psi = system.psi_level(j)
        for b_idx, l in enumerate(levels):
            phi = system.phi_level(l)
            if psi is None or phi is None:
                continue
            prod = fftconvolve(psi.values * h**n, phi.values * h**n)
            cells = prod.shape[0] // 2
            off = _offsets(cells, n, h)
            dist = np.sqrt(sum(c**2 for c in off))
            out[a_idx, b_idx] = float((np.abs(prod) * (1.0 + 2.0**j * dist) ** a).sum())
    return out


def decay_slopes(system: KernelSystem, I: np.ndarray, a: float, levels=None, offset: int | None = None) -> dict:
    """Fitted ``log2 I[j, l]`` slopes against ``|j - l|`` on both sides of the diagonal.

    Only pairs with ``|j - l| >= offset`` enter the fit; the default
    ``ceil(log2(2M))`` is the level gap past which the support of ``Psi_j``
    (radius ``2 M r 2^-j``) fits inside the scale of the coarser kernel, so
    Taylor decay is actually in force. Slopes are per level in ``log2`` units;
    predictions are ``-(L_psi - a)`` below the diagonal and ``-L_phi`` above.
    """
    if levels is None:
        levels = list(range(I.shape[0]))
    if offset is None:
        offset = int(math.ceil(math.log2(2 * system.multiplier_degree)))
    out = {"offset": offset}
    for key, side, predicted in (("psi_side", 1, -(system.L_psi_target - a)),
                                 ("phi_side", -1, -float(system.L_phi_target))):
        x, y = [], []
        for ia, j in enumerate(levels):
            for ib, l in enumerate(levels):
                gap = (j - l) * side
                if gap >= offset:
                    x.append(gap)
                    y.append(math.log2(I[ia, ib]) if I[ia, ib] > 0 else -np.inf)
        if len(set(x)) < 2:
            raise ValueError(f"not enough levels for a fit with offset {offset}")
        y = np.asarray(y)
        if np.isneginf(y).any():
            fitted = -np.inf
        else:
            fitted = float(np.polyfit(x, y, 1)[0])
        out[key] = {"fitted": fitted, "predicted": float(predicted), "pairs": len(x),
                    "ok": bool(fitted <= 0.85 * predicted)}
    return out


# -- bundle IO -------------------------------------------------------------------------


def write_bundle(system: KernelSystem, directory) -> Path:
    """Grid files per kernel plus ``manifest.txt`` (``key = value`` lines)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for j, (phi, psi) in enumerate(zip(system.phi_levels, system.psi_levels)):
        write_grid(d / f"phi_{j}.fnxg", phi)
        write_grid(d / f"psi_{j}.fnxg", psi)
    write_grid(d / "phi_generator.fnxg", system.phi_generator)
    write_grid(d / "psi_generator.fnxg", system.psi_generator)
    man = system.manifest()
    man["levels"] = len(system.phi_levels)
    lines = [f"{k} = {man[k]!r}" if isinstance(man[k], float) else f"{k} = {man[k]}" for k in sorted(man)]
    (d / "manifest.txt").write_text("\n".join(lines) + "\n")
    return d


def read_bundle(directory) -> KernelSystem:
    d = Path(directory)
    man = {}
    for line in (d / "manifest.txt").read_text().splitlines():
        if line.strip():
            k, v = (s.strip() for s in line.split("=", 1))
            man[k] = v
    ints = ("dim", "L_phi_target", "L_psi_target", "L_phi", "L_psi", "jmax",
            "multiplier_degree", "resolved_levels", "levels")
    floats = ("spacing", "radius", "aperture", "tauber_epsilon")
    vals = {k: int(man[k]) for k in ints}
    vals.update({k: float(man[k]) for k in floats})
    nlev = vals.pop("levels")
    return KernelSystem(
        phi_levels=tuple(read_grid(d / f"phi_{j}.fnxg") for j in range(nlev)),
        psi_levels=tuple(read_grid(d / f"psi_{j}.fnxg") for j in range(nlev)),
        phi_generator=read_grid(d / "phi_generator.fnxg"),
        psi_generator=read_grid(d / "psi_generator.fnxg"),
        config_hash=man["config_hash"],
        **vals,
    )
