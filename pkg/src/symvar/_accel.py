"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` loop and a vectorized numpy
version with identical semantics.  The public names below are bound once at
import time.  Set ``SYMVAR_DISABLE_NUMBA=1`` (or run without numba installed)
to get the numpy path; ``SYMVAR_THREADS`` caps numba's thread pool.

Grid kernels use the corner-averaged stencil: each cell contributes the mean
of its four one-sided gradients, which keeps the discrete energies invariant
under all eight symmetries of the square.
"""

import os

import numpy as np

try:
    import numba
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator


def _flag(name):
    return os.environ.get(name, "").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAS_NUMBA and not _flag("SYMVAR_DISABLE_NUMBA")

if HAS_NUMBA and os.environ.get("SYMVAR_THREADS"):
    try:
        numba.set_num_threads(max(1, min(int(os.environ["SYMVAR_THREADS"]), numba.config.NUMBA_NUM_THREADS)))
    except ValueError:
        pass


# ---------------------------------------------------------------------------
# triangle inequality excess: max_{i,j,k} t[i,j] - t[i,k] - t[k,j]
# ---------------------------------------------------------------------------


@njit(cache=True)
def _triangle_excess_nb(t):
    n = t.shape[0]
    best = -np.inf
    bi = 0
    bj = 0
    bk = 0
    for k in range(n):
        for i in range(n):
            tik = t[i, k]
            for j in range(n):
                e = t[i, j] - tik - t[k, j]
                if e > best:
                    best = e
                    bi = i
                    bj = j
                    bk = k
    return best, bi, bj, bk


def _triangle_excess_np(t):
    n = t.shape[0]
    best = -np.inf
    witness = (0, 0, 0)
    for k in range(n):
        e = t - t[:, k, None] - t[None, k, :]
        flat = int(np.argmax(e))
        val = e.flat[flat]
        if val > best:
            best = val
            witness = (flat // n, flat % n, k)
    return best, witness[0], witness[1], witness[2]


def triangle_excess(t):
    """Largest violation of ``t[i,j] <= t[i,k] + t[k,j]`` and its witness.

    Returns ``(excess, i, j, k)``; the inequality holds everywhere iff
    ``excess <= 0`` (up to the caller's tolerance).  Infinite entries are the
    caller's problem: ``inf - inf`` yields nan, which never wins the max.
    """
    t = np.ascontiguousarray(t, dtype=np.float64)
    if t.shape[0] == 0:
        return -np.inf, 0, 0, 0
    if USE_NUMBA:
        e, i, j, k = _triangle_excess_nb(t)
    else:
        e, i, j, k = _triangle_excess_np(t)
    return float(e), int(i), int(j), int(k)


# ---------------------------------------------------------------------------
# area functional  sum_cells h^2/4 sum_corners sqrt(1 + |grad_corner w|^2)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _area_energy_grad_nb(w, h):
    m0, m1 = w.shape
    grad = np.zeros_like(w)
    energy = 0.0
    q = 0.25 * h * h
    c = 0.25 * h
    for i in range(m0 - 1):
        for j in range(m1 - 1):
            a = w[i, j]
            b = w[i + 1, j]
            cc = w[i, j + 1]
            d = w[i + 1, j + 1]
            gx0 = (b - a) / h
            gx1 = (d - cc) / h
            gy0 = (cc - a) / h
            gy1 = (d - b) / h
            # corner (i,j): gx0, gy0 | (i+1,j): gx0, gy1 | (i,j+1): gx1, gy0 | (i+1,j+1): gx1, gy1
            s00 = np.sqrt(1.0 + gx0 * gx0 + gy0 * gy0)
            s10 = np.sqrt(1.0 + gx0 * gx0 + gy1 * gy1)
            s01 = np.sqrt(1.0 + gx1 * gx1 + gy0 * gy0)
            s11 = np.sqrt(1.0 + gx1 * gx1 + gy1 * gy1)
            energy += q * (s00 + s10 + s01 + s11)
            fx0 = c * (gx0 / s00 + gx0 / s10)
            fx1 = c * (gx1 / s01 + gx1 / s11)
            fy0 = c * (gy0 / s00 + gy0 / s01)
            fy1 = c * (gy1 / s10 + gy1 / s11)
            grad[i + 1, j] += fx0 - fy1
            grad[i, j] -= fx0 + fy0
            grad[i + 1, j + 1] += fx1 + fy1
            grad[i, j + 1] += fy0 - fx1
    return energy, grad


def _area_energy_grad_np(w, h):
    a = w[:-1, :-1]
    b = w[1:, :-1]
    cc = w[:-1, 1:]
    d = w[1:, 1:]
    gx0 = (b - a) / h
    gx1 = (d - cc) / h
    gy0 = (cc - a) / h
    gy1 = (d - b) / h
    s00 = np.sqrt(1.0 + gx0**2 + gy0**2)
    s10 = np.sqrt(1.0 + gx0**2 + gy1**2)
    s01 = np.sqrt(1.0 + gx1**2 + gy0**2)
    s11 = np.sqrt(1.0 + gx1**2 + gy1**2)
    energy = 0.25 * h * h * float(np.sum(s00 + s10 + s01 + s11))
    c = 0.25 * h
    fx0 = c * (gx0 / s00 + gx0 / s10)
    fx1 = c * (gx1 / s01 + gx1 / s11)
    fy0 = c * (gy0 / s00 + gy0 / s01)
    fy1 = c * (gy1 / s10 + gy1 / s11)
    grad = np.zeros_like(w)
    grad[1:, :-1] += fx0 - fy1
    grad[:-1, :-1] -= fx0 + fy0
    grad[1:, 1:] += fx1 + fy1
    grad[:-1, 1:] += fy0 - fx1
    return energy, grad


def area_energy_grad(w, h):
    """Discrete area of the graph of ``w`` and its gradient w.r.t. nodal values."""
    w = np.ascontiguousarray(w, dtype=np.float64)
    if USE_NUMBA:
        e, g = _area_energy_grad_nb(w, float(h))
        return float(e), g
    return _area_energy_grad_np(w, float(h))


# ---------------------------------------------------------------------------
# p-energy  (1/p) sum_edges omega_e h^2 |D_e u|^p, boundary-line edges at half weight
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _pow_nb(a, e, ie):
    # integer exponents (the common p = 2, 3, 4) avoid the generic pow
    if ie >= 0:
        r = 1.0
        for _ in range(ie):
            r *= a
        return r
    return a**e


@njit(cache=True)
def _p_energy_grad_nb(u, h, p):
    m0, m1 = u.shape
    ie = int(p - 1.0) if (p - 1.0) == int(p - 1.0) and p < 12.0 else -1
    grad = np.zeros_like(u)
    energy = 0.0
    hh = h * h
    # x-edges (i,j)-(i+1,j)
    for i in range(m0 - 1):
        for j in range(m1):
            wt = hh
            if j == 0 or j == m1 - 1:
                wt = 0.5 * hh
            dv = (u[i + 1, j] - u[i, j]) / h
            ad = abs(dv)
            if ad == 0.0:
                continue
            q = _pow_nb(ad, p - 1.0, ie)
            energy += wt * ad * q / p
            f = wt * q * (1.0 if dv > 0 else -1.0) / h
            grad[i + 1, j] += f
            grad[i, j] -= f
    # y-edges (i,j)-(i,j+1)
    for i in range(m0):
        wt = hh
        if i == 0 or i == m0 - 1:
            wt = 0.5 * hh
        for j in range(m1 - 1):
            dv = (u[i, j + 1] - u[i, j]) / h
            ad = abs(dv)
            if ad == 0.0:
                continue
            q = _pow_nb(ad, p - 1.0, ie)
            energy += wt * ad * q / p
            f = wt * q * (1.0 if dv > 0 else -1.0) / h
            grad[i, j + 1] += f
            grad[i, j] -= f
    return energy, grad


def _edge_weights(m0, m1, h):
    wx = np.full((m0 - 1, m1), h * h)
    wx[:, 0] *= 0.5
    wx[:, -1] *= 0.5
    wy = np.full((m0, m1 - 1), h * h)
    wy[0, :] *= 0.5
    wy[-1, :] *= 0.5
    return wx, wy


def _p_energy_grad_np(u, h, p):
    wx, wy = _edge_weights(u.shape[0], u.shape[1], h)
    dx = (u[1:, :] - u[:-1, :]) / h
    dy = (u[:, 1:] - u[:, :-1]) / h
    qx = np.abs(dx) ** (p - 1.0)
    qy = np.abs(dy) ** (p - 1.0)
    energy = float(np.sum(wx * np.abs(dx) * qx) + np.sum(wy * np.abs(dy) * qy)) / p
    fx = wx * qx * np.sign(dx) / h
    fy = wy * qy * np.sign(dy) / h
    grad = np.zeros_like(u)
    grad[1:, :] += fx
    grad[:-1, :] -= fx
    grad[:, 1:] += fy
    grad[:, :-1] -= fy
    return energy, grad


def p_energy_grad(u, h, p):
    """Discrete ``(1/p) * integral sum_i |d_i u|^p`` and its nodal gradient."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    if USE_NUMBA:
        e, g = _p_energy_grad_nb(u, float(h), float(p))
        return float(e), g
    return _p_energy_grad_np(u, float(h), float(p))


KERNELS = {
    "triangle_excess": (_triangle_excess_nb, _triangle_excess_np),
    "area_energy_grad": (_area_energy_grad_nb, _area_energy_grad_np),
    "p_energy_grad": (_p_energy_grad_nb, _p_energy_grad_np),
}
"""name -> (numba implementation, numpy implementation), for tests and benchmarks."""
