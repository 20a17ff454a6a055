"""Grid suprema ``sup_y |g(y)| / (1 + t|x - y|)^a`` (Peetre-type maximal functions).

The fast path is a branch-and-bound search over a max-pyramid: a block whose
maximum, discounted by its nearest distance to ``x``, cannot beat the current
best is skipped. The result equals the brute-force grid maximum exactly.
"""
from __future__ import annotations

import numba as nb
import numpy as np

__all__ = ["peetre_sup", "peetre_brute", "peetre_at_points"]


def _build_pyramid(v: np.ndarray):
    s0, s1 = v.shape
    p0 = 1 << int(np.ceil(np.log2(max(s0, 1))))
    p1 = 1 << int(np.ceil(np.log2(max(s1, 1))))
    base = np.zeros((p0, p1))
    base[:s0, :s1] = v
    levels = [base]
    while levels[-1].shape != (1, 1):
        a = levels[-1]
        if a.shape[0] > 1:
            a = np.maximum(a[0::2, :], a[1::2, :])
        if a.shape[1] > 1:
            a = np.maximum(a[:, 0::2], a[:, 1::2])
        levels.append(a)
    shapes = np.array([lv.shape for lv in levels], dtype=np.int64)
    offs = np.zeros(len(levels) + 1, dtype=np.int64)
    offs[1:] = np.cumsum([lv.size for lv in levels])
    flat = np.concatenate([lv.ravel() for lv in levels])
    return flat, shapes, offs, p0, p1


@nb.njit(cache=True)
def _sup2d(flat, shapes, offs, p0, p1, s0, s1, h, t, a):
    nl = shapes.shape[0]
    out = np.zeros((s0, s1))
    cap = 4 * nl + 8
    st_l = np.empty(cap, np.int64)
    st_i = np.empty(cap, np.int64)
    st_j = np.empty(cap, np.int64)
    bi_prev = 0
    bj_prev = 0
    for i in range(s0):
        for j in range(s1):
            best = flat[i * p1 + j]
            bi = i
            bj = j
            # warm start from the previous cell's maximiser
            d = h * np.sqrt((i - bi_prev) ** 2 + (j - bj_prev) ** 2)
            cand = flat[bi_prev * p1 + bj_prev] * np.exp(-a * np.log1p(t * d))
            if cand > best:
                best = cand
                bi = bi_prev
                bj = bj_prev
            st_l[0] = nl - 1
            st_i[0] = 0
            st_j[0] = 0
            sp = 1
            while sp > 0:
                sp -= 1
                lv = st_l[sp]
                ii = st_i[sp]
                jj = st_j[sp]
                c0 = shapes[lv, 0]
                c1 = shapes[lv, 1]
                b0 = p0 // c0
                b1 = p1 // c1
                lo0 = ii * b0
                hi0 = lo0 + b0 - 1
                lo1 = jj * b1
                hi1 = lo1 + b1 - 1
                d0 = 0
                if i < lo0:
                    d0 = lo0 - i
                elif i > hi0:
                    d0 = i - hi0
                d1 = 0
                if j < lo1:
                    d1 = lo1 - j
                elif j > hi1:
                    d1 = j - hi1
                m = flat[offs[lv] + ii * c1 + jj]
                if m <= best:
                    continue
                bound = m * np.exp(-a * np.log1p(t * h * np.sqrt(d0 * d0 + d1 * d1)))
                if bound <= best:
                    continue
                if lv == 0:
                    best = bound
                    bi = ii
                    bj = jj
                    continue
                r0 = 2 if shapes[lv - 1, 0] > c0 else 1
                r1 = 2 if shapes[lv - 1, 1] > c1 else 1
                for q0 in range(r0):
                    for q1 in range(r1):
                        st_l[sp] = lv - 1
                        st_i[sp] = ii * r0 + q0
                        st_j[sp] = jj * r1 + q1
                        sp += 1
            out[i, j] = best
            bi_prev = bi
            bj_prev = bj
    return out


def peetre_sup(values, spacing: float, scale: float, a: float) -> np.ndarray:
    """``G(x) = max_y |g(y)| (1 + scale |x - y|)^{-a}`` over the grid cells.

    ``values`` is a 1-d or 2-d array of samples with cell size ``spacing``;
    other dimensions use the brute-force path.
    """
    if not a > 0:
        raise ValueError("the Peetre exponent a must be positive")
    v = np.abs(np.asarray(values, dtype=float))
    if v.ndim not in (1, 2):
        return peetre_brute(v, spacing, scale, a)
    if not v.any():
        return np.zeros_like(v)
    shape = v.shape
    v2 = v.reshape(shape[0], -1)
    flat, shapes, offs, p0, p1 = _build_pyramid(v2)
    out = _sup2d(flat, shapes, offs, p0, p1, v2.shape[0], v2.shape[1],
                 float(spacing), float(scale), float(a))
    return out.reshape(shape)


def peetre_brute(values, spacing: float, scale: float, a: float) -> np.ndarray:
    """Direct ``O(N^2)`` evaluation; the oracle for :func:`peetre_sup`."""
    v = np.abs(np.asarray(values, dtype=float))
    idx = np.indices(v.shape).reshape(v.ndim, -1).T * spacing
    flat = v.ravel()
    out = np.empty(flat.size)
    for k in range(0, flat.size, 512):
        d = np.sqrt(((idx[k:k + 512, None, :] - idx[None, :, :]) ** 2).sum(-1))
        out[k:k + 512] = (flat[None, :] * (1.0 + scale * d) ** (-a)).max(axis=1)
    return out.reshape(v.shape)


def peetre_at_points(g, points, scale: float, a: float) -> np.ndarray:
    """Maximal function of the grid function ``g`` at arbitrary points ``(m, n)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cells = g.points().reshape(-1, g.ndim)
    vals = np.abs(np.asarray(g.values)).ravel()
    keep = vals > 0
    cells, vals = cells[keep], vals[keep]
    if vals.size == 0:
        return np.zeros(len(pts))
    out = np.empty(len(pts))
    for k, x in enumerate(pts):
        d = np.sqrt(((cells - x) ** 2).sum(-1))
        out[k] = (vals * (1.0 + scale * d) ** (-a)).max()
    return out
