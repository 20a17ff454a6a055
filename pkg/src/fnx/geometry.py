"""Special Lipschitz domains above a graph, their cones, and reflection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expdsl import ScalarField, lattice, parse_scalar_field
from .gridcore import GridError, GridFunction

__all__ = [
    "DomainError",
    "Cone",
    "Domain",
    "make_domain",
    "domain_from_config",
    "contains",
    "cone_contains",
    "reflect",
    "zero_extend",
    "restrict",
    "DEFAULT_WORKING_BOX",
]

DEFAULT_WORKING_BOX = (-1.5, 1.5)
_LIPSCHITZ_SLACK = 1e-9


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Cone:
    """``K = {|x'| < x_n / A}`` for sign +1 and ``-K`` for sign -1."""

    aperture_A: float
    dim: int
    sign: int = 1

    def __post_init__(self):
        if not self.aperture_A > 0:
            raise DomainError("cone aperture must be positive")
        if self.sign not in (1, -1):
            raise DomainError("sign must be +1 or -1")

    def contains(self, x, closed: bool = False):
        return cone_contains(self, x, closed=closed)

    def reflected(self) -> "Cone":
        return Cone(self.aperture_A, self.dim, -self.sign)


def cone_contains(c: Cone, x, closed: bool = False):
    """Membership in the open cone (or its closure); vectorised over leading axes."""
    x = np.asarray(x, dtype=float) * c.sign
    if x.shape[-1] != c.dim:
        raise DomainError(f"point of dim {x.shape[-1]} tested against a {c.dim}-d cone")
    tail = x[..., -1] / c.aperture_A
    lateral = np.sqrt((x[..., :-1] ** 2).sum(-1))
    if closed:
        return lateral <= tail
    return lateral < tail


@dataclass(frozen=True, eq=False)
class Domain:
    """``Omega = {x_n > omega(x')}`` with ``|omega(x') - omega(y')| <= A |x' - y'|``."""

    omega: ScalarField
    lipschitz_A: float
    dim: int
    _masks: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def cone(self) -> Cone:
        return Cone(self.lipschitz_A, self.dim, 1)

    def boundary(self, xprime):
        """``omega`` at the lateral coordinates (last axis of ``xprime``)."""
        xprime = np.asarray(xprime, dtype=float)
        if self.dim == 1:
            return np.full(xprime.shape[:-1], float(self.omega(0.0)))
        return np.asarray(self.omega(*(xprime[..., k] for k in range(self.dim - 1))))

    def mask(self, grid: GridFunction) -> np.ndarray:
        """Cells whose centre lies in Omega; cached per grid geometry."""
        if grid.ndim != self.dim:
            raise GridError(f"grid is {grid.ndim}-d, domain is {self.dim}-d")
        key = (grid.dims, grid.origin, grid.spacing)
        m = self._masks.get(key)
        if m is None:
            mesh = grid.mesh()
            if self.dim == 1:
                bound = float(self.omega(0.0))
            else:
                bound = self.omega(*mesh[:-1])
            m = mesh[-1] > bound
            m.setflags(write=False)
            self._masks[key] = m
        return m

    def boundary_distance(self, grid: GridFunction) -> np.ndarray:
        """Vertical distance ``|x_n - omega(x')|`` at the cell centres.

        A lower bound for the Euclidean distance scaled by ``1/sqrt(1+A^2)``.
        """
        mesh = grid.mesh()
        bound = float(self.omega(0.0)) if self.dim == 1 else self.omega(*mesh[:-1])
        return np.abs(mesh[-1] - bound)


def make_domain(
    omega: ScalarField | str,
    A: float,
    dim: int,
    box=DEFAULT_WORKING_BOX,
    samples: int = 64,
) -> Domain:
    """Build and validate a domain; the Lipschitz quotient is sampled on a lattice."""
    if dim < 1:
        raise DomainError("dim must be >= 1")
    if not A > 0:
        raise DomainError("Lipschitz constant A must be positive")
    lateral = max(dim - 1, 1)
    if isinstance(omega, str):
        omega = parse_scalar_field(omega, lateral)
    if omega.dim != lateral:
        raise DomainError(f"omega must be a field in {lateral} variable(s), got {omega.dim}")
    if dim == 1:
        if not omega.is_constant:
            raise DomainError("in one dimension the boundary is a single point")
        return Domain(omega, float(A), 1)
    lo, hi = box
    grids = lattice([(lo, hi)] * lateral, samples)
    vals = np.asarray(omega(*grids), dtype=float).ravel()
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    off = d > 0
    quotient = np.abs(vals[:, None] - vals[None, :])[off] / d[off]
    qmax = float(quotient.max()) if quotient.size else 0.0
    if qmax > A + _LIPSCHITZ_SLACK:
        raise DomainError(f"sampled Lipschitz quotient {qmax:.6g} exceeds A = {A:g}")
    return Domain(omega, float(A), dim)


def domain_from_config(cfg: dict, box=DEFAULT_WORKING_BOX) -> Domain:
    return make_domain(str(cfg["omega_expr"]), float(cfg["lipschitz_A"]), int(cfg["dim"]), box)


def contains(d: Domain, x) -> bool | np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d.dim:
        raise DomainError(f"point of dim {x.shape[-1]} tested against a {d.dim}-d domain")
    inside = x[..., -1] > d.boundary(x[..., :-1])
    return bool(inside) if inside.ndim == 0 else inside


def reflect(d: Domain, x) -> np.ndarray:
    """``(x', 2 omega(x') - x_n)``: the mirror image across the graph."""
    x = np.array(x, dtype=float)
    x[..., -1] = 2.0 * d.boundary(x[..., :-1]) - x[..., -1]
    return x


def restrict(g: GridFunction, d: Domain) -> GridFunction:
    """Canonical representative of ``g|_Omega``: zero on cells outside Omega."""
    return g.with_values(np.where(d.mask(g), g.values, 0))


def zero_extend(f: GridFunction, d: Domain) -> GridFunction:
    """Extension by zero of a function known on the Omega cells of its grid."""
    return f.with_values(np.where(d.mask(f), f.values, 0))
