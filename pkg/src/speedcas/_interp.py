"""Fused multilinear interpolate-and-dot used by the solver's inner loop.

Given successor states and the previous stage's value vector, computes
sum_corners weight * value[corner] per state without materializing the
corner index/weight matrices. A numba kernel carries the hot path; a numpy
fallback keeps the package importable without it.
"""

from __future__ import annotations

import math

import numpy as np

try:  # pragma: no cover - exercised implicitly by the solver tests
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn
        return deco

    prange = range

KIND_CONT = 0
KIND_CAT = 1
KIND_ANGLE = 2
KIND_STAGE = 3

TWO_PI = 2.0 * math.pi


@njit(cache=True, parallel=True)
def _kernel(pts, cuts, n_cuts, kinds, strides, values, out):  # pragma: no cover
    n, n_axes = pts.shape
    for i in prange(n):
        base = 0
        k = 0
        lo = np.empty(n_axes, dtype=np.int64)
        st = np.empty(n_axes, dtype=np.int64)
        tt = np.empty(n_axes)
        for ax in range(n_axes):
            kind = kinds[ax]
            if kind == KIND_STAGE:
                continue
            x = pts[i, ax]
            m = n_cuts[ax]
            if kind == KIND_CAT:
                best = 0
                bd = abs(cuts[ax, 0] - x)
                for j in range(1, m):
                    d = abs(cuts[ax, j] - x)
                    if d < bd:
                        bd = d
                        best = j
                base += best * strides[ax]
                continue
            if kind == KIND_ANGLE:
                x = (x + math.pi) % TWO_PI - math.pi
            if x <= cuts[ax, 0]:
                j = 0
                t = 0.0
            elif x >= cuts[ax, m - 1]:
                j = m - 2
                t = 1.0
            else:
                a, b = 0, m - 1
                while b - a > 1:
                    mid = (a + b) // 2
                    if cuts[ax, mid] <= x:
                        a = mid
                    else:
                        b = mid
                j = a
                t = (x - cuts[ax, j]) / (cuts[ax, j + 1] - cuts[ax, j])
            lo[k] = j
            st[k] = strides[ax]
            tt[k] = t
            k += 1
        acc = 0.0
        for corner in range(1 << k):
            idx = base
            w = 1.0
            for b in range(k):
                if corner >> b & 1:
                    idx += (lo[b] + 1) * st[b]
                    w *= tt[b]
                else:
                    idx += lo[b] * st[b]
                    w *= 1.0 - tt[b]
            if w > 0.0:
                acc += w * values[idx]
        out[i] = acc


def interp_dot(grid, points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Per-point interpolated value over a single stage's lattice.

    The stage coordinate of ``points`` is ignored: ``values`` indexes the
    stage-local lattice, so callers hand in the target stage's vector.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    cuts, n_cuts, kinds, strides = grid.kernel_spec()
    out = np.empty(points.shape[0])
    if _HAVE_NUMBA:
        _kernel(points, cuts, n_cuts, kinds, strides, values, out)
        return out
    idx, w = grid.batch_interpolants(points)
    return np.sum(w * values[idx % grid.stage_size], axis=1)
