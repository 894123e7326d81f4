"""Symmetric Plateau problem and p-Laplacian descent on uniform square grids.

Nodes ``(i, j)`` sit at ``(x, y) = (i h, j h)`` with ``h = 1/(m-1)``.  Both
energies use the stencils in :mod:`symvar._accel`; their nodal gradients
divided by ``h^2`` are the discrete operators (minimal-surface operator and
``-Delta_p``), so residuals and energy gradients agree exactly.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse import diags, identity, kron
from scipy.sparse.linalg import splu

from symvar._accel import area_energy_grad, p_energy_grad
from symvar.errors import (
    BadExponent,
    NoConvergence,
    NotInvariantData,
    NotInvariantStart,
    ShapeMismatch,
    SymvarError,
)
from symvar.group import FiniteGroup
from symvar.smooth import SmoothFunctional, palais_smale

GRID_GROUPS = ("identity", "transpose", "d4")
SYMMETRY_TOL = 1e-10
DATA_TOL = 1e-12


def _square_ops(name):
    if name == "identity":
        return [lambda a: a]
    if name == "transpose":
        return [lambda a: a, lambda a: a.T]
    if name == "d4":
        return [
            lambda a: a,
            lambda a: np.rot90(a, 1),
            lambda a: np.rot90(a, 2),
            lambda a: np.rot90(a, 3),
            lambda a: a.T,
            lambda a: np.rot90(a, 2).T,
            lambda a: a[::-1, :],
            lambda a: a[:, ::-1],
        ]
    raise SymvarError(f"unknown grid group {name!r}; expected one of {GRID_GROUPS}")


class SymmetricGrid:
    """``m x m`` grid on the unit square with a group of square symmetries.

    ``mask`` marks the free (unknown) nodes and defaults to the interior; it
    must be invariant under the group.
    """

    def __init__(self, m, group="identity", mask=None):
        m = int(m)
        if m < 3:
            raise SymvarError("grid needs m >= 3")
        self.m = m
        self.h = 1.0 / (m - 1)
        self.group_name = group
        idx = np.arange(m * m).reshape(m, m)
        self.node_perms = np.array([op(idx).ravel() for op in _square_ops(group)])
        if mask is None:
            mask = np.zeros((m, m), dtype=bool)
            mask[1:-1, 1:-1] = True
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (m, m):
            raise ShapeMismatch(f"mask shape {mask.shape} != {(m, m)}")
        if self.symmetry_residual(mask.astype(float)) > 0:
            raise NotInvariantData("free-node mask is not invariant under the grid group")
        self.mask = mask
        self.free = np.flatnonzero(mask.ravel())
        pos = np.full(m * m, -1)
        pos[self.free] = np.arange(self.free.size)
        self.free_group = FiniteGroup.from_perms(pos[self.node_perms[:, self.free]])

    @property
    def shape(self):
        return (self.m, self.m)

    def coords(self):
        t = np.linspace(0.0, 1.0, self.m)
        return np.meshgrid(t, t, indexing="ij")

    def act(self, k, u):
        return np.asarray(u).ravel()[self.node_perms[k]].reshape(self.shape)

    def symmetry_residual(self, u):
        """``max_g max |g(u) - u|``."""
        flat = np.asarray(u, dtype=float).ravel()
        return float(np.max(np.abs(flat[self.node_perms] - flat[None, :])))

    def symmetrize(self, u):
        flat = np.asarray(u, dtype=float).ravel()
        return flat[self.node_perms].mean(axis=0).reshape(self.shape)

    def check_shape(self, u, what="field"):
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise ShapeMismatch(f"{what} has shape {u.shape}, grid is {self.shape}")
        return u

    def embed(self, z, base):
        w = np.array(base, dtype=float, copy=True)
        w.ravel()[self.free] = z
        return w

    def pairing(self, T, v):
        """Discrete ``<T, v> = h^2 sum T v``."""
        return self.h**2 * float(np.sum(np.asarray(T) * np.asarray(v)))

    def laplacian_lu(self):
        """LU factors of the 5-point ``-Delta_h`` on the free nodes (zero data elsewhere)."""
        if not hasattr(self, "_lu"):
            m = self.m
            d1 = diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
            eye = identity(m)
            full = (kron(d1, eye) + kron(eye, d1)).tocsr() / self.h**2
            sub = full[self.free][:, self.free].tocsc()
            self._lu = splu(sub)
        return self._lu

    def to_dict(self):
        return {"m": self.m, "h": self.h, "group": self.group_name, "free_nodes": int(self.free.size)}


def grid_expression(grid: SymmetricGrid, expr):
    """Evaluate a number, an ``m x m`` array, or a sympy expression in ``x, y`` on the grid."""
    if isinstance(expr, (int, float)):
        return np.full(grid.shape, float(expr))
    if not isinstance(expr, str):
        return grid.check_shape(expr)
    import sympy

    x, y = sympy.symbols("x y")
    try:
        e = sympy.sympify(expr, locals={"x": x, "y": y})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise SymvarError(f"cannot parse grid expression {expr!r}: {exc}") from exc
    if e.free_symbols - {x, y}:
        raise SymvarError(f"grid expression {expr!r} may only use x and y")
    X, Y = grid.coords()
    return np.broadcast_to(np.asarray(sympy.lambdify((x, y), e, "numpy")(X, Y), dtype=float), grid.shape).copy()


# ---------------------------------------------------------------------------
# area functional
# ---------------------------------------------------------------------------


def area_energy(v, v0, outer_root=False):
    """Discrete area of the graph of ``w = v + v0`` over the unit square.

    ``outer_root=True`` returns the square root of the integrated
    ``1 + |grad w|^2`` instead of the integrated local square root.
    """
    v = np.asarray(v, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if v.shape != v0.shape or v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ShapeMismatch(f"fields of shape {v.shape} and {v0.shape}")
    w = v + v0
    h = 1.0 / (w.shape[0] - 1)
    if outer_root:
        a, b, c, d = w[:-1, :-1], w[1:, :-1], w[:-1, 1:], w[1:, 1:]
        gx0, gx1, gy0, gy1 = (b - a) / h, (d - c) / h, (c - a) / h, (d - b) / h
        sq = 4 + 2 * (gx0**2 + gx1**2 + gy0**2 + gy1**2)
        return float(np.sqrt(0.25 * h * h * np.sum(sq)))
    return area_energy_grad(w, h)[0]


def minimal_surface_residual(v, v0, T=None):
    """Nodal ``-div_h(grad w / sqrt(1 + |grad w|^2)) - T`` at interior nodes (zero on the boundary)."""
    w = np.asarray(v, dtype=float) + np.asarray(v0, dtype=float)
    h = 1.0 / (w.shape[0] - 1)
    _, g = area_energy_grad(w, h)
    r = g / h**2
    if T is not None:
        r = r - np.asarray(T, dtype=float)
    r[0, :] = r[-1, :] = r[:, 0] = r[:, -1] = 0.0
    return r


def discrete_lq(grid, r, q=2.0):
    """``(h^2 sum |r|^q)^(1/q)``."""
    return float((grid.h**2 * np.sum(np.abs(r) ** q)) ** (1.0 / q))


def plateau_functional(grid: SymmetricGrid, boundary, T=None):
    """``z -> area(w) - <T, w>`` over the free nodes ``z`` of ``w`` (other nodes from ``boundary``)."""
    base = grid.check_shape(boundary, "boundary")
    T = np.zeros(grid.shape) if T is None else grid.check_shape(T, "load")
    t_free = T.ravel()[grid.free] * grid.h**2
    h = grid.h

    def vg(z):
        e, g = area_energy_grad(grid.embed(z, base), h)
        return e - float(t_free @ z), g.ravel()[grid.free] - t_free

    return SmoothFunctional(grid.free.size, group=grid.free_group, value_and_grad=vg, lower_bound=None, name="plateau-energy")


@dataclass
class PlateauResult:
    u: np.ndarray
    residual_norm: float
    symmetry_residual: float
    energy: float
    iterations: int
    noise_steps: int
    values: list
    max_principle: dict | None
    uniqueness: dict | None

    def to_dict(self):
        return {
            "residual_norm_l2": self.residual_norm,
            "symmetry_residual": self.symmetry_residual,
            "energy": self.energy,
            "iterations": self.iterations,
            "noise_steps": self.noise_steps,
            "max_principle": self.max_principle,
            "uniqueness": self.uniqueness,
        }


def _check_data(grid, field, what):
    scale = 1.0 + float(np.max(np.abs(field)))
    if grid.symmetry_residual(field) > DATA_TOL * scale:
        raise NotInvariantData(f"{what} is not invariant under the {grid.group_name} group")


def _plateau_run(grid, boundary, T, tol, k_max, z0):
    phi = plateau_functional(grid, boundary, T)
    h2 = grid.h**2

    def small_residual(z, g):
        return discrete_lq(grid, g / h2) <= tol

    seq = palais_smale(phi, z0, k_max=k_max, grad_tol=0.0, stop=small_residual)
    if not seq.converged:
        raise NoConvergence(f"Plateau descent stopped ({seq.reason}) after {seq.iterations} iterations", seq.iterations)
    return grid.embed(seq.x, boundary), seq


def solve_plateau(grid: SymmetricGrid, boundary, T=None, tol=1e-8, k_max=200_000, seed=0, probes=True, start=None):
    """Grid-symmetric minimizer of ``area - <T, .>`` with the given boundary values.

    ``boundary`` is a full field whose non-free nodes are the Dirichlet data.
    Interior iterations start from zero unless ``start`` is given.  The
    discrete ``L^2`` norm of the residual is driven below ``tol``.
    """
    boundary = grid.check_shape(boundary, "boundary")
    T = np.zeros(grid.shape) if T is None else grid.check_shape(T, "load")
    if tol <= 0:
        raise SymvarError("tol must be positive")
    data = boundary.copy()
    data.ravel()[grid.free] = 0.0
    _check_data(grid, data, "boundary data")
    _check_data(grid, T, "load T")
    T = T.copy()
    T.ravel()[np.setdiff1d(np.arange(grid.m**2), grid.free)] = 0.0
    z0 = np.zeros(grid.free.size) if start is None else grid.check_shape(start, "start").ravel()[grid.free]
    u, seq = _plateau_run(grid, data, T, tol, k_max, z0)
    r = minimal_surface_residual(u, np.zeros_like(u), T)
    r.ravel()[np.setdiff1d(np.arange(grid.m**2), grid.free)] = 0.0

    max_principle = None
    if probes and not np.any(T):
        bvals = data.ravel()[np.setdiff1d(np.arange(grid.m**2), grid.free)]
        lo, hi = float(bvals.min()), float(bvals.max())
        inner = u.ravel()[grid.free]
        max_principle = {
            "holds": bool(inner.min() >= lo - 1e-9 and inner.max() <= hi + 1e-9),
            "boundary_min": lo,
            "boundary_max": hi,
            "interior_min": float(inner.min()),
            "interior_max": float(inner.max()),
        }
    uniqueness = None
    if probes:
        rng = np.random.default_rng(seed)
        sols = [u]
        for _ in range(3):
            s = grid.symmetrize(rng.normal(size=grid.shape))
            sols.append(_plateau_run(grid, data, T, tol, k_max, s.ravel()[grid.free])[0])
        spread = max(float(np.max(np.abs(a - b))) for i, a in enumerate(sols) for b in sols[i + 1 :])
        uniqueness = {"starts": 3, "max_pairwise_sup": spread, "bound": 10 * tol, "holds": bool(spread <= 10 * tol)}
    return PlateauResult(
        u,
        discrete_lq(grid, r),
        grid.symmetry_residual(u),
        seq.value,
        seq.iterations,
        seq.noise_steps,
        seq.values,
        max_principle,
        uniqueness,
    )


# ---------------------------------------------------------------------------
# p-energy
# ---------------------------------------------------------------------------


def p_energy_functional(grid: SymmetricGrid, p, boundary, load=None):
    """``z -> (1/p) sum_edges h^2 |D u|^p - <load, u>`` over the free nodes."""
    base = grid.check_shape(boundary, "boundary")
    f_load = np.zeros(grid.free.size) if load is None else grid.check_shape(load, "load").ravel()[grid.free] * grid.h**2
    h = grid.h

    def vg(z):
        e, g = p_energy_grad(grid.embed(z, base), h, p)
        return e - float(f_load @ z), g.ravel()[grid.free] - f_load

    return SmoothFunctional(grid.free.size, group=grid.free_group, value_and_grad=vg, lower_bound=None, name="p-energy")


def dual_norm_surrogate(grid: SymmetricGrid, r, q):
    """``(h^2 sum |z|^q)^(1/q)`` where ``-Delta_h z = r`` on the free nodes, ``z = 0`` elsewhere."""
    z = grid.laplacian_lu().solve(np.asarray(r, dtype=float))
    return float((grid.h**2 * np.sum(np.abs(z) ** q)) ** (1.0 / q))


@dataclass
class PEnergyResult:
    u: np.ndarray
    dual_norm: float
    p_energy: float
    """``sum h^2 sum_i |d_i u|^p`` (edge form)"""
    alpha: float
    values: list
    iterations: int
    converged: bool
    noise_steps: int
    symmetry_residual: float

    @property
    def alpha_deviation(self):
        return self.p_energy - self.alpha

    @property
    def monotone(self):
        v = np.asarray(self.values)
        return bool(np.all(np.diff(v) <= 16 * np.finfo(float).eps * (1.0 + np.abs(v[:-1]))))

    def to_dict(self):
        return {
            "dual_norm_surrogate": self.dual_norm,
            "dual_norm_definition": "l^q norm of z solving -Delta_h z = H'(u), zero boundary",
            "p_energy": self.p_energy,
            "alpha": self.alpha,
            "alpha_deviation": self.alpha_deviation,
            "iterations": self.iterations,
            "converged": self.converged,
            "monotone": self.monotone,
            "noise_steps": self.noise_steps,
            "symmetry_residual": self.symmetry_residual,
        }


def p_energy_descent(grid: SymmetricGrid, p, alpha, u0, tol=1e-4, k_max=100_000, load=None):
    """Descent on ``H(u) = (1/p) sum h^2 |D u|^p`` with boundary values taken from ``u0``.

    Stops once the dual-norm surrogate of ``H'(u)`` is at most ``tol``.
    """
    p = float(p)
    if not np.isfinite(p) or p <= 1.0:
        raise BadExponent(f"p must lie in (1, inf), got {p}")
    u0 = grid.check_shape(u0, "u0")
    if grid.symmetry_residual(u0) > DATA_TOL * (1.0 + np.abs(u0).max()):
        raise NotInvariantStart("u0 is not invariant under the grid group")
    if load is not None:
        _check_data(grid, grid.check_shape(load, "load"), "load")
    q = p / (p - 1.0)
    phi = p_energy_functional(grid, p, u0, load)
    h2 = grid.h**2
    state = {"dual": np.inf}

    def small_dual(z, g):
        state["dual"] = dual_norm_surrogate(grid, g / h2, q)
        return state["dual"] <= tol

    seq = palais_smale(phi, u0.ravel()[grid.free], k_max=k_max, grad_tol=0.0, stop=small_dual)
    u = grid.embed(seq.x, u0)
    _, g = p_energy_grad(u, grid.h, p)
    dual = dual_norm_surrogate(grid, g.ravel()[grid.free] / h2, q)
    energy = p * p_energy_grad(u, grid.h, p)[0]
    return PEnergyResult(u, dual, energy, float(alpha), seq.values, seq.iterations, seq.converged, seq.noise_steps, grid.symmetry_residual(u))


def check_growth(fprime, a, b, p, samples=256, seed=0, dim=2, scale=10.0):
    """Sampled check of ``|f'_xi(x, xi)| <= a + b |xi|^(p-1)`` on the unit square.

    ``fprime(x, xi)`` returns the gradient of ``f`` in ``xi``.
    """
    rng = np.random.default_rng(seed)
    worst, witness = -np.inf, None
    for _ in range(samples):
        x = rng.random(dim)
        xi = scale * rng.normal(size=dim)
        lhs = float(np.linalg.norm(fprime(x, xi)))
        rhs = a + b * float(np.linalg.norm(xi)) ** (p - 1.0)
        excess = (lhs - rhs) / (1.0 + rhs)
        if excess > worst:
            worst, witness = excess, (x.tolist(), xi.tolist())
    return {"holds": bool(worst <= 1e-12), "worst_relative_excess": worst, "witness": witness}
