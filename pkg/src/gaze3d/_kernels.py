"""Hot residual kernels for the 3D mapper fits, with two backends.

The Levenberg-Marquardt fits evaluate these residuals (2*dim + 1) times
per iteration for the numeric Jacobian, so they dominate fit time.  Both
a vectorized numpy implementation and a numba-compiled one are provided;
selection is automatic (numba when importable) and can be forced with
the environment variable GAZE3D_BACKEND=numpy|numba.

Parameter layouts (matching the mapper fits):
  2D-to-3D: params[:14] = 7x2 weight matrix row-major, params[14:17] = e
  3D-to-3D: params[:3] = Euler angles (X-then-Y-then-Z), params[3:6] = e

Rotation entries are computed inline without range checks: the solver
wraps angles after every step, but finite differencing probes slightly
past the [-pi, pi] boundary.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit
    NUMBA_AVAILABLE = True
except ImportError:   # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func
        return wrap if not (args and callable(args[0])) else args[0]


def _rotation_entries(a, b, c):
    """Rows of Rx(a) @ Ry(b) @ Rz(c), as plain scalars."""
    sa, ca = np.sin(a), np.cos(a)
    sb, cb = np.sin(b), np.cos(b)
    sc, cc = np.sin(c), np.cos(c)
    return ((cb * cc, -cb * sc, sb),
            (sa * sb * cc + ca * sc, -sa * sb * sc + ca * cc, -sa * cb),
            (-ca * sb * cc + sa * sc, ca * sb * sc + sa * cc, ca * cb))


def residuals_2d3d_numpy(params, feats, targets, normalize=True):
    """Cross products g(q w) x (t - e), flattened to (3N,)."""
    w = params[:14].reshape(7, 2)
    e = params[14:17]
    alpha = feats @ w
    theta, phi = alpha[:, 0], alpha[:, 1]
    ct = np.cos(theta)
    g = np.column_stack((np.sin(theta), ct * np.sin(phi), ct * np.cos(phi)))
    v = targets - e
    if normalize:
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
    return np.cross(g, v).ravel()


def residuals_3d3d_numpy(params, poses, targets, normalize=True):
    """Cross products (R n) x (t - e), flattened to (3N,)."""
    rot = np.array(_rotation_entries(params[0], params[1], params[2]))
    e = params[3:6]
    d = poses @ rot.T
    v = targets - e
    if normalize:
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
    return np.cross(d, v).ravel()


@njit(cache=True)
def _residuals_2d3d_jit(params, feats, targets, normalize):   # pragma: no cover
    n = feats.shape[0]
    out = np.empty(3 * n)
    e0, e1, e2 = params[14], params[15], params[16]
    for i in range(n):
        theta = 0.0
        phi = 0.0
        for j in range(7):
            theta += feats[i, j] * params[2 * j]
            phi += feats[i, j] * params[2 * j + 1]
        ct = np.cos(theta)
        gx = np.sin(theta)
        gy = ct * np.sin(phi)
        gz = ct * np.cos(phi)
        vx = targets[i, 0] - e0
        vy = targets[i, 1] - e1
        vz = targets[i, 2] - e2
        if normalize:
            inv = 1.0 / np.sqrt(vx * vx + vy * vy + vz * vz)
            vx *= inv
            vy *= inv
            vz *= inv
        out[3 * i] = gy * vz - gz * vy
        out[3 * i + 1] = gz * vx - gx * vz
        out[3 * i + 2] = gx * vy - gy * vx
    return out


@njit(cache=True)
def _residuals_3d3d_jit(params, poses, targets, normalize):   # pragma: no cover
    sa, ca = np.sin(params[0]), np.cos(params[0])
    sb, cb = np.sin(params[1]), np.cos(params[1])
    sc, cc = np.sin(params[2]), np.cos(params[2])
    r00, r01, r02 = cb * cc, -cb * sc, sb
    r10, r11, r12 = sa * sb * cc + ca * sc, -sa * sb * sc + ca * cc, -sa * cb
    r20, r21, r22 = -ca * sb * cc + sa * sc, ca * sb * sc + sa * cc, ca * cb
    e0, e1, e2 = params[3], params[4], params[5]
    n = poses.shape[0]
    out = np.empty(3 * n)
    for i in range(n):
        nx, ny, nz = poses[i, 0], poses[i, 1], poses[i, 2]
        dx = r00 * nx + r01 * ny + r02 * nz
        dy = r10 * nx + r11 * ny + r12 * nz
        dz = r20 * nx + r21 * ny + r22 * nz
        vx = targets[i, 0] - e0
        vy = targets[i, 1] - e1
        vz = targets[i, 2] - e2
        if normalize:
            inv = 1.0 / np.sqrt(vx * vx + vy * vy + vz * vz)
            vx *= inv
            vy *= inv
            vz *= inv
        out[3 * i] = dy * vz - dz * vy
        out[3 * i + 1] = dz * vx - dx * vz
        out[3 * i + 2] = dx * vy - dy * vx
    return out


def residuals_2d3d_numba(params, feats, targets, normalize=True):
    return _residuals_2d3d_jit(np.ascontiguousarray(params, dtype=np.float64),
                               feats, targets, normalize)


def residuals_3d3d_numba(params, poses, targets, normalize=True):
    return _residuals_3d3d_jit(np.ascontiguousarray(params, dtype=np.float64),
                               poses, targets, normalize)


def _select_backend():
    choice = os.environ.get("GAZE3D_BACKEND", "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"GAZE3D_BACKEND must be auto|numba|numpy, got {choice!r}")
    if choice == "numba" and not NUMBA_AVAILABLE:
        raise ImportError("GAZE3D_BACKEND=numba but numba is not importable")
    if choice in ("numba", "auto") and NUMBA_AVAILABLE:
        return "numba", residuals_2d3d_numba, residuals_3d3d_numba
    return "numpy", residuals_2d3d_numpy, residuals_3d3d_numpy


BACKEND, residuals_2d3d, residuals_3d3d = _select_backend()
