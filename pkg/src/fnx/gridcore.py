"""Uniform cell-centred grids, midpoint quadrature and linear convolution."""
from __future__ import annotations

import itertools
import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import fft as sfft
from scipy.ndimage import map_coordinates

__all__ = [
    "GridError",
    "UnderResolvedError",
    "SupportOverflowWarning",
    "GridFunction",
    "MultiIndex",
    "multi_indices",
    "sample",
    "centered_grid",
    "convolve",
    "convolve_direct",
    "moment",
    "dyadic_dilate",
    "write_grid",
    "read_grid",
    "export_csv",
    "MOMENT_ORDER_CAP",
]

MOMENT_ORDER_CAP = 12
_MAGIC = b"FNXG"


class GridError(ValueError):
    pass


class UnderResolvedError(GridError):
    pass


class SupportOverflowWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a function at the cell centres ``origin + (i + 1/2) h``."""

    values: np.ndarray
    origin: tuple[float, ...]
    spacing: float

    def __post_init__(self):
        vals = np.array(self.values, copy=True)
        if not np.iscomplexobj(vals):
            vals = vals.astype(float)
        if vals.ndim == 0:
            raise GridError("grid functions need at least one axis")
        origin = tuple(float(o) for o in np.atleast_1d(self.origin))
        if len(origin) != vals.ndim:
            raise GridError(f"origin has {len(origin)} entries for a {vals.ndim}-d array")
        if not self.spacing > 0:
            raise GridError("spacing must be positive")
        if not np.isfinite(vals).all():
            raise GridError("grid values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.ndim

    @property
    def box(self) -> list[tuple[float, float]]:
        return [(o, o + n * self.spacing) for o, n in zip(self.origin, self.dims)]

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + (np.arange(self.dims[k]) + 0.5) * self.spacing

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*(self.axis(k) for k in range(self.ndim)), indexing="ij")

    def points(self) -> np.ndarray:
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def same_grid(self, other: "GridFunction") -> bool:
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and np.allclose(self.origin, other.origin, rtol=0, atol=1e-12 * self.spacing)
        )

    def with_values(self, values) -> "GridFunction":
        values = np.asarray(values)
        if values.shape != self.dims:
            raise GridError(f"shape {values.shape} does not match grid {self.dims}")
        return GridFunction(values, self.origin, self.spacing)

    @property
    def is_lattice(self) -> bool:
        """True when the cell centres sit on ``h * Z^n`` (kernel grids)."""
        s = (np.asarray(self.origin) + 0.5 * self.spacing) / self.spacing
        return bool(np.all(np.abs(s - np.round(s)) < 1e-9))

    def integral(self) -> float:
        return complex(self.values.sum() * self.cell_volume) if np.iscomplexobj(
            self.values
        ) else float(self.values.sum() * self.cell_volume)

    def sup(self) -> float:
        return float(np.abs(self.values).max())

    def __add__(self, other):
        _require_same(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _require_same(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def _require_same(f: GridFunction, g: GridFunction):
    if not f.same_grid(g):
        raise GridError("grid functions live on different grids")


@dataclass(frozen=True, order=True)
class MultiIndex:
    components: tuple[int, ...]

    def __post_init__(self):
        comps = tuple(int(c) for c in self.components)
        if any(c < 0 for c in comps):
            raise ValueError("multi-index components must be nonnegative")
        object.__setattr__(self, "components", comps)

    @property
    def order(self) -> int:
        return sum(self.components)

    def __len__(self):
        return len(self.components)


def multi_indices(n: int, below: int) -> list[MultiIndex]:
    """All multi-indices in ``n`` variables with ``|beta| < below``, graded order."""
    out = []
    for total in range(max(below, 0)):
        for comp in itertools.product(range(total + 1), repeat=n):
            if sum(comp) == total:
                out.append(MultiIndex(comp))
    return out


def _grid_for_box(box, dims):
    box = [(float(lo), float(hi)) for lo, hi in box]
    dims = tuple(int(d) for d in np.atleast_1d(dims))
    if len(dims) == 1 and len(box) > 1:
        dims = dims * len(box)
    if len(dims) != len(box):
        raise GridError("box and dims disagree on dimension")
    if any(d < 2 for d in dims):
        raise GridError("need at least 2 cells per axis")
    widths = [(hi - lo) / d for (lo, hi), d in zip(box, dims)]
    if not np.allclose(widths, widths[0], rtol=1e-12):
        raise GridError("cells must be square: equal spacing on every axis")
    return tuple(lo for lo, _ in box), widths[0], dims


def sample(func: Callable, box, dims) -> GridFunction:
    """Evaluate ``func(x1, ..., xn)`` at the cell centres of ``box``."""
    origin, h, dims = _grid_for_box(box, dims)
    axes = [o + (np.arange(d) + 0.5) * h for o, d in zip(origin, dims)]
    mesh = np.meshgrid(*axes, indexing="ij")
    vals = np.broadcast_to(np.asarray(func(*mesh)), dims)
    return GridFunction(vals, origin, h)


def centered_grid(values, spacing: float) -> GridFunction:
    """Wrap an odd-shaped array as a kernel whose middle cell is centred at 0."""
    values = np.asarray(values)
    if any(s % 2 == 0 for s in values.shape):
        raise GridError("kernel arrays need odd extents")
    origin = tuple(-(s // 2 + 0.5) * spacing for s in values.shape)
    return GridFunction(values, origin, spacing)


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def _fft_full(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    full = tuple(x + y - 1 for x, y in zip(a.shape, b.shape))
    shape = tuple(_next_pow2(s) for s in full)
    axes = tuple(range(a.ndim))
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        out = sfft.ifftn(sfft.fftn(a, shape, axes=axes) * sfft.fftn(b, shape, axes=axes), axes=axes)
    else:
        out = sfft.irfftn(sfft.rfftn(a, shape, axes=axes) * sfft.rfftn(b, shape, axes=axes), shape, axes=axes)
    return out[tuple(slice(0, s) for s in full)]


def _shift_index(f: GridFunction, g: GridFunction) -> tuple[int, ...]:
    if f.ndim != g.ndim or f.spacing != g.spacing:
        raise GridError("convolution needs equal dimension and spacing")
    if not g.is_lattice:
        raise GridError("second factor must have its cell centres on the lattice h*Z^n")
    return tuple(int(round((o + 0.5 * g.spacing) / g.spacing)) for o in g.origin)


def _place(full: np.ndarray, shift, out_shape) -> np.ndarray:
    """Pick ``out[i] = full[i - shift]`` with zeros where that index is absent."""
    out = np.zeros(out_shape, dtype=full.dtype)
    src, dst = [], []
    for s, n_full, n_out in zip(shift, full.shape, out_shape):
        lo = max(0, s)
        hi = min(n_out, n_full + s)
        if hi <= lo:
            return out
        dst.append(slice(lo, hi))
        src.append(slice(lo - s, hi - s))
    out[tuple(dst)] = full[tuple(src)]
    return out


def convolve(f: GridFunction, g: GridFunction, check_overflow: bool = True) -> GridFunction:
    """Linear convolution ``(f*g)(x_i) = h^n sum_j f[j] g(x_i - y_j)`` on f's grid.

    ``g`` must have its nodes on ``h*Z^n``: a kernel grid, or any grid whose
    cell centres include 0. Zero padding to a power of two keeps it acyclic.
    """
    shift = _shift_index(f, g)
    full = _fft_full(f.values, g.values) * f.cell_volume
    out = _place(full, shift, f.dims)
    if check_overflow:
        _overflow_check(full, out)
    return f.with_values(out)


def _overflow_check(full: np.ndarray, kept: np.ndarray):
    total = np.abs(full).sum()
    if total == 0:
        return
    edge = 0.0
    for axis in range(kept.ndim):
        if kept.shape[axis] < 2:
            continue
        edge += np.abs(np.take(kept, [0, -1], axis=axis)).sum()
    lost = total - np.abs(kept).sum()
    if edge > 1e-12 * total or lost > 1e-12 * total:
        warnings.warn(
            "convolution mass reaches the edge of the output grid", SupportOverflowWarning, stacklevel=3
        )


def convolve_direct(f: GridFunction, g: GridFunction) -> GridFunction:
    """Direct-summation oracle for :func:`convolve`."""
    shift = _shift_index(f, g)
    a, b = f.values, g.values
    full_shape = tuple(x + y - 1 for x, y in zip(a.shape, b.shape))
    dtype = np.result_type(a, b)
    full = np.zeros(full_shape, dtype=dtype)
    for idx in zip(*np.nonzero(b)):
        sl = tuple(slice(k, k + n) for k, n in zip(idx, a.shape))
        full[sl] += b[idx] * a
    return f.with_values(_place(full * f.cell_volume, shift, f.dims))


def moment(f: GridFunction, beta) -> float:
    """Midpoint value of ``int x^beta f(x) dx``."""
    beta = beta if isinstance(beta, MultiIndex) else MultiIndex(tuple(np.atleast_1d(beta)))
    if len(beta) != f.ndim:
        raise ValueError("multi-index length must match the grid dimension")
    if beta.order > MOMENT_ORDER_CAP:
        raise ValueError(f"moment order {beta.order} exceeds cap {MOMENT_ORDER_CAP}")
    weight = np.ones(f.dims)
    for k, b in enumerate(beta.components):
        if b:
            shape = [1] * f.ndim
            shape[k] = -1
            weight = weight * (f.axis(k) ** b).reshape(shape)
    return float(np.real((weight * f.values).sum()) * f.cell_volume)


def _support_diameter(f: GridFunction) -> float:
    nz = np.nonzero(f.values)
    if len(nz[0]) == 0:
        return 0.0
    ext = [(idx.max() - idx.min() + 1) for idx in nz]
    return max(ext) * f.spacing


def dyadic_dilate(kernel, j: int, min_cells: int = 4) -> GridFunction:
    """``2^{jn} Phi(2^j x)`` resampled on the kernel's own grid.

    ``kernel`` is a :class:`GridFunction` or any object with ``grid`` and an
    analytic ``evaluate(*coords)``; analytic kernels are resampled exactly,
    plain grids by cubic interpolation.
    """
    if j < 0:
        raise ValueError("j must be nonnegative")
    grid = kernel if isinstance(kernel, GridFunction) else kernel.grid
    if j == 0:
        return grid
    n = grid.ndim
    diameter = _support_diameter(grid) * 2.0**-j
    if diameter < min_cells * grid.spacing:
        raise UnderResolvedError(
            f"dilation j={j} leaves {diameter / grid.spacing:.2f} cells across the support"
        )
    scale = 2.0**j
    mesh = grid.mesh()
    if hasattr(kernel, "evaluate"):
        vals = kernel.evaluate(*(scale * m for m in mesh))
    else:
        coords = [
            (scale * m - o) / grid.spacing - 0.5 for m, o in zip(mesh, grid.origin)
        ]
        vals = map_coordinates(grid.values, coords, order=3, mode="constant", cval=0.0)
    return grid.with_values(scale**n * np.asarray(vals))


# -- file formats ----------------------------------------------------------------


def write_grid(path, f: GridFunction) -> None:
    """Binary grid file: magic, version, ndim, complex flag, axes, row-major f64."""
    iscomplex = np.iscomplexobj(f.values)
    buf = bytearray(_MAGIC)
    buf += struct.pack("<IBB", 1, f.ndim, int(iscomplex))
    for k in range(f.ndim):
        buf += struct.pack("<Qdd", f.dims[k], f.origin[k], f.spacing)
    if iscomplex:
        data = np.ascontiguousarray(f.values, dtype="<c16")
    else:
        data = np.ascontiguousarray(f.values, dtype="<f8")
    buf += data.tobytes(order="C")
    Path(path).write_bytes(bytes(buf))


def read_grid(path) -> GridFunction:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise GridError(f"{path}: not a grid file")
    version, ndim, iscomplex = struct.unpack_from("<IBB", raw, 4)
    if version != 1:
        raise GridError(f"{path}: unsupported version {version}")
    pos = 10
    dims, origin, spacings = [], [], []
    for _ in range(ndim):
        count, o, h = struct.unpack_from("<Qdd", raw, pos)
        pos += 24
        dims.append(count)
        origin.append(o)
        spacings.append(h)
    if len(set(spacings)) != 1:
        raise GridError(f"{path}: axes have different spacings")
    dtype = "<c16" if iscomplex else "<f8"
    vals = np.frombuffer(raw, dtype=dtype, offset=pos, count=int(np.prod(dims)))
    return GridFunction(vals.reshape(dims), tuple(origin), spacings[0])


def export_csv(path, f: GridFunction) -> None:
    if f.ndim != 1:
        raise GridError("CSV export is only defined for 1-d grids")
    lines = ["x,value"]
    lines += [f"{x!r},{v!r}" for x, v in zip(f.axis(0), np.real(f.values))]
    Path(path).write_text("\n".join(lines) + "\n")
