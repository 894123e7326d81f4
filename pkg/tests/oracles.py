"""Independent reference solvers shared by the unit and acceptance tests.

Nothing here calls into the package's kernels: energies are rewritten from
the stencil definition and differentiated by complex step, linear problems
are assembled directly with scipy.sparse.
"""

import itertools

import numpy as np
from scipy.sparse import diags, identity, kron
from scipy.sparse.linalg import spsolve


def ref_area_energy(w, h):
    """Cell integrand = mean over the four corner pairings of sqrt(1 + wx^2 + wy^2).

    Works batched over leading axes and for complex input.
    """
    a, b = w[..., :-1, :-1], w[..., 1:, :-1]
    c, d = w[..., :-1, 1:], w[..., 1:, 1:]
    gx = ((b - a) / h, (d - c) / h)
    gy = ((c - a) / h, (d - b) / h)
    total = 0
    for sx, sy in itertools.product(gx, gy):
        total = total + np.sqrt(1.0 + sx * sx + sy * sy)
    return 0.25 * h * h * total.sum(axis=(-2, -1))


def ref_area_gradient(w, h, free):
    """Complex-step gradient of :func:`ref_area_energy` at the free nodes (flat indices)."""
    n = free.size
    W = np.broadcast_to(w.astype(complex), (n,) + w.shape).copy()
    step = 1e-30
    W.reshape(n, -1)[np.arange(n), free] += 1j * step
    return ref_area_energy(W, h).imag / step


def newton_plateau(m, boundary, T, tol=1e-13, max_iter=50):
    """Damped Newton on ``grad area / h^2 - T = 0`` with a finite-difference Jacobian."""
    h = 1.0 / (m - 1)
    free = np.flatnonzero(np.pad(np.ones((m - 2, m - 2), bool), 1).ravel())
    w = np.array(boundary, dtype=float)
    w.ravel()[free] = 0.0
    t = np.asarray(T, dtype=float).ravel()[free]

    def F(z):
        u = w.copy()
        u.ravel()[free] = z
        return ref_area_gradient(u, h, free) / h**2 - t

    z = np.zeros(free.size)
    r = F(z)
    for _ in range(max_iter):
        if np.linalg.norm(r, np.inf) < tol:
            break
        J = _colored_jacobian(F, z, m, free)
        dz = np.linalg.solve(J, -r)
        lam = 1.0
        while lam > 1e-6:
            r_new = F(z + lam * dz)
            if np.linalg.norm(r_new) < (1 - 1e-4 * lam) * np.linalg.norm(r):
                break
            lam *= 0.5
        z, r = z + lam * dz, r_new
    u = w.copy()
    u.ravel()[free] = z
    return u, float(np.linalg.norm(r, np.inf))


def _colored_jacobian(F, z, m, free, eps=1e-7):
    # nodes sharing (i mod 3, j mod 3) never share a cell, so one central
    # difference per colour recovers all of their Jacobian columns at once
    I, J_ = np.divmod(free, m)
    pos = {int(k): t for t, k in enumerate(free)}
    Jac = np.zeros((free.size, free.size))
    for a, b in itertools.product(range(3), range(3)):
        e = ((I % 3 == a) & (J_ % 3 == b)).astype(float) * eps
        col = (F(z + e) - F(z - e)) / (2 * eps)
        for r, (i, j) in enumerate(zip(I, J_)):
            i2 = i + ((a - i + 1) % 3) - 1
            j2 = j + ((b - j + 1) % 3) - 1
            k = pos.get(int(i2 * m + j2))
            if k is not None:
                Jac[r, k] = col[r]
    return Jac


def laplace_solve(m, boundary, load):
    """Solve ``-Delta_h u = load`` (5-point) in the interior with Dirichlet data."""
    h = 1.0 / (m - 1)
    n = m - 2
    d1 = diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    A = (kron(d1, identity(n)) + kron(identity(n), d1)).tocsc() / h**2
    g = np.array(boundary, dtype=float)
    rhs = np.array(load, dtype=float)[1:-1, 1:-1].copy()
    rhs[0, :] += g[0, 1:-1] / h**2
    rhs[-1, :] += g[-1, 1:-1] / h**2
    rhs[:, 0] += g[1:-1, 0] / h**2
    rhs[:, -1] += g[1:-1, -1] / h**2
    u = g.copy()
    u[1:-1, 1:-1] = spsolve(A, rhs.ravel()).reshape(n, n)
    return u


def exhaustive_control(step, cost, x0, K, N):
    """Best cost over all |K|^N piecewise-constant signals; ``step(x, u)`` advances one cell."""
    best, arg = np.inf, None
    for combo in itertools.product(range(len(K)), repeat=N):
        x = np.array(x0, dtype=float)
        for j in combo:
            x = step(x, K[j])
        c = cost(x)
        if c < best:
            best, arg = c, combo
    return best, arg
