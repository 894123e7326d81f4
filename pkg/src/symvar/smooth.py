"""Palais-Smale minimizing sequences on the invariant subspace Fix(G).

Descent runs in orthonormal coordinates of Fix(G) so iterates cannot drift
off the subspace.  Steps are Barzilai-Borwein guesses safeguarded by Armijo
backtracking (``c = 1e-4``, halving).  Once the predicted decrease falls
below the rounding noise of ``phi`` a step is accepted when it does not raise
the value beyond that noise; the report records how often this happened.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from symvar.errors import (
    CoercivityViolated,
    DimensionMismatch,
    InvarianceViolated,
    NotBoundedBelowSuspected,
    NotConvexWrtGroup,
    SymvarError,
    TargetNotInvariant,
    TargetOutsideBall,
)
from symvar.group import FiniteGroup, is_convex_wrt_group, symmetrize, trivial_group, vector_norm

ARMIJO_C = 1e-4
INVARIANCE_TOL = 1e-10
SAMPLE_INVARIANCE_TOL = 1e-9
GRADIENT_CHECK_TOL = 1e-5
_EPS = np.finfo(float).eps
N_CAP = 10**9

DUAL_NORM = {"l2": "l2", "l1": "linf", "linf": "l1"}


@dataclass
class SmoothFunctional:
    """A differentiable functional on R^dim together with its symmetry group.

    ``value_and_grad`` may be given instead of (or in addition to) the two
    separate callables when sharing work between them is cheaper.
    """

    dim: int
    value: Callable | None = None
    grad: Callable | None = None
    group: FiniteGroup | None = None
    lower_bound: float | None = None
    value_and_grad: Callable | None = None
    name: str = "phi"

    def __post_init__(self):
        if self.group is None:
            self.group = trivial_group(self.dim)
        if self.group.dim != self.dim:
            raise DimensionMismatch(f"group acts on R^{self.group.dim}, functional lives on R^{self.dim}")
        if self.value is None and self.value_and_grad is None:
            raise SymvarError("functional needs a value evaluator")

    @property
    def has_gradient(self):
        return self.grad is not None or self.value_and_grad is not None

    def __call__(self, x):
        if self.value is not None:
            return float(self.value(x))
        return float(self.value_and_grad(x)[0])

    def evaluate(self, x):
        """``(phi(x), grad phi(x))``; falls back to central differences."""
        if self.value_and_grad is not None:
            v, g = self.value_and_grad(x)
            return float(v), np.asarray(g, dtype=float)
        v = float(self.value(x))
        if self.grad is not None:
            return v, np.asarray(self.grad(x), dtype=float)
        return v, finite_difference_gradient(self.value, x)

    def gradient(self, x):
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        return self.evaluate(x)[1]

    def tilted(self, T):
        """``x -> phi(x) - <T, x>``."""
        T = np.asarray(T, dtype=float)

        def vg(x):
            v, g = self.evaluate(x)
            return v - float(T @ x), g - T

        return SmoothFunctional(self.dim, group=self.group, value_and_grad=vg, name=f"{self.name}-tilted")

    def validate(self, samples=32, seed=0, scale=1.0, check_convexity=True):
        """Sampled hypothesis checks: invariance, convexity w.r.t. G, gradient.

        Returns a dict of the observed worst cases; raises on violation.
        """
        rng = np.random.default_rng(seed)
        X = scale * rng.normal(size=(samples, self.dim))
        worst = 0.0
        for x in X:
            v = self(x)
            for gx in self.group.orbit(x):
                err = abs(self(gx) - v) / (1.0 + abs(v))
                if err > worst:
                    worst = err
                if err > SAMPLE_INVARIANCE_TOL:
                    raise InvarianceViolated(f"{self.name}(g x) != {self.name}(x) at x={x.tolist()} (rel. error {err:.3g})")
        report = {"invariance_error": worst}
        if check_convexity:
            conv = is_convex_wrt_group(self, self.group, X, tol=SAMPLE_INVARIANCE_TOL * (1.0 + max(abs(self(x)) for x in X)))
            if not conv.holds:
                raise NotConvexWrtGroup(f"{self.name}(x_bar) exceeds the orbit average at x={conv.witness.tolist()}")
            report["convexity_slack"] = conv.slack
        if self.has_gradient:
            err = gradient_check(self, X)
            if err > GRADIENT_CHECK_TOL:
                raise SymvarError(f"analytic gradient disagrees with finite differences (rel. error {err:.3g})")
            report["gradient_error"] = err
        return report


def finite_difference_gradient(f, x):
    x = np.asarray(x, dtype=float)
    step = 1e-6 * (1.0 + np.linalg.norm(x))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def gradient_check(phi: SmoothFunctional, samples):
    """Max over samples of ``|grad - grad_fd| / (1 + |grad_fd|)`` with central differences."""
    if not phi.has_gradient:
        raise SymvarError("gradient_check needs an analytic gradient")
    worst = 0.0
    for x in np.atleast_2d(np.asarray(samples, dtype=float)):
        fd = finite_difference_gradient(phi, x)
        err = np.linalg.norm(phi.gradient(x) - fd) / (1.0 + np.linalg.norm(fd))
        worst = max(worst, float(err))
    return worst


@dataclass
class PSSequence:
    x: np.ndarray
    values: list
    grad_norms: list
    """projected gradient norms |P_G grad phi(x_k)|"""
    full_grad_norms: list
    invariance_residuals: list
    converged: bool
    reason: str
    symmetrized_start: bool
    noise_steps: int = 0
    iterates: list | None = None
    checkpoints: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.values) - 1

    @property
    def value(self):
        return self.values[-1]

    @property
    def grad_norm(self):
        return self.grad_norms[-1]

    def to_dict(self):
        return {
            "x": self.x.tolist(),
            "value": self.value,
            "projected_grad_norm": self.grad_norm,
            "full_grad_norm": self.full_grad_norms[-1],
            "max_invariance_residual": max(self.invariance_residuals),
            "iterations": self.iterations,
            "converged": self.converged,
            "reason": self.reason,
            "symmetrized_start": self.symmetrized_start,
            "noise_steps": self.noise_steps,
            "checkpoints": self.checkpoints,
        }

    def csv_rows(self):
        yield ("k", "value", "projected_grad_norm", "full_grad_norm", "invariance_residual")
        for k, row in enumerate(zip(self.values, self.grad_norms, self.full_grad_norms, self.invariance_residuals)):
            yield (k, *(repr(float(v)) for v in row))


def _invariance_residual(x, G):
    return float(np.max(np.abs(G.orbit(x) - x))) if G.order > 1 else 0.0


def palais_smale(
    phi: SmoothFunctional,
    x0,
    k_max=10_000,
    grad_tol=1e-8,
    store_iterates=False,
    sequence_mode=False,
    stop: Callable | None = None,
    basis=None,
):
    """Minimizing sequence for ``phi`` restricted to Fix(G).

    Stops when ``|P_G grad phi(x_k)| <= grad_tol``, when ``stop(x, grad)``
    returns true, or after ``k_max`` steps.  With ``sequence_mode`` the
    report lists the first index ``k`` at which the projected gradient drops
    below ``1/n`` for ``n = 1, 2, ...`` (capped at ``n = 10**9``), grouping
    consecutive ``n`` reached at the same step into one ``[n, n_max]`` entry.
    ``basis`` overrides the orthonormal basis of Fix(G).
    """
    G = phi.group
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != phi.dim:
        raise DimensionMismatch(f"start has dimension {x0.size}, functional {phi.dim}")
    symmetrized = _invariance_residual(x0, G) > INVARIANCE_TOL
    if symmetrized:
        x0 = symmetrize(x0, G)
    B = G.fixed_subspace_basis() if basis is None else basis
    c = B.T @ x0
    x = B @ c
    f, g_full = phi.evaluate(x)
    if not np.isfinite(f):
        raise SymvarError(f"{phi.name} is not finite at the start point")
    g = B.T @ g_full

    values = [f]
    gnorms = [float(np.linalg.norm(g))]
    full = [float(np.linalg.norm(g_full))]
    inv = [_invariance_residual(x, G)]
    iterates = [x.copy()] if store_iterates else None
    checkpoints = []
    next_n = 1
    noise_steps = 0
    alpha = 1.0 / max(gnorms[0], 1.0)
    prev = None
    reason = "k_max"
    converged = False

    def record_checkpoints(k):
        # one entry per iterate: every n in [n, n_max] was first reached at step k
        nonlocal next_n
        g = gnorms[-1]
        if not sequence_mode or next_n > N_CAP or g > 1.0 / next_n:
            return
        hi = N_CAP if g <= 1.0 / N_CAP else int(np.floor(1.0 / g))
        checkpoints.append({"n": next_n, "n_max": hi, "k": k})
        next_n = hi + 1

    record_checkpoints(0)
    for k in range(k_max + 1):
        if gnorms[-1] <= grad_tol:
            converged, reason = True, "grad_tol"
            break
        if stop is not None and stop(x, g_full):
            converged, reason = True, "stop"
            break
        if k == k_max:
            break
        if prev is not None:
            s = c - prev[0]
            y = g - prev[1]
            sy = float(s @ y)
            if sy > 0:
                alpha = float(s @ s) / sy
        gg = float(g @ g)
        noise = 16 * _EPS * (abs(f) + 1.0)
        accepted = False
        step = alpha
        for _ in range(80):
            c_new = c - step * g
            x_new = B @ c_new
            f_new, gf_new = phi.evaluate(x_new)
            if np.isfinite(f_new):
                if f_new <= f - ARMIJO_C * step * gg:
                    accepted = True
                    break
                if ARMIJO_C * step * gg <= noise and f_new <= f + noise:
                    accepted = True
                    noise_steps += 1
                    break
            step *= 0.5
        if not accepted:
            reason = "line-search-stalled"
            break
        prev = (c, g)
        c, x, f, g_full = c_new, x_new, f_new, gf_new
        g = B.T @ g_full
        if phi.lower_bound is not None and f < phi.lower_bound - 1e-9 * (1.0 + abs(phi.lower_bound)):
            raise NotBoundedBelowSuspected(f"value {f} went below the declared floor {phi.lower_bound}")
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > 1e15:
            raise NotBoundedBelowSuspected("iterates diverge")
        r = _invariance_residual(x, G)
        if r > INVARIANCE_TOL:
            raise InvarianceViolated(f"iterate left Fix(G) (residual {r:.3g})")
        values.append(f)
        gnorms.append(float(np.linalg.norm(g)))
        full.append(float(np.linalg.norm(g_full)))
        inv.append(r)
        if store_iterates:
            iterates.append(x.copy())
        record_checkpoints(k + 1)
    return PSSequence(x, values, gnorms, full, inv, converged, reason, symmetrized, noise_steps, iterates, checkpoints)


@dataclass
class ProbeResult:
    x: np.ndarray
    residual: float
    """projected gradient norm of the tilted functional at ``x``"""
    full_residual: float
    """``|grad phi(x) - T|`` in the full space"""
    sequence: PSSequence

    def to_dict(self):
        return {"x": self.x.tolist(), "residual": self.residual, "full_residual": self.full_residual, "sequence": self.sequence.to_dict()}


def coercivity_check(phi: SmoothFunctional, k, n_rays=16, seed=0, radii=(1.0, 10.0, 100.0, 1000.0, 10000.0)):
    """Spot-check ``phi(x) >= k |x| + c`` along random rays.

    A ray fails when ``phi(r v) - k r`` keeps decreasing over the three
    largest radii and ends below its value at the smallest radius.
    Returns the failing direction or ``None``.
    """
    rng = np.random.default_rng(seed)
    norm = phi.group.norm
    for _ in range(n_rays):
        v = rng.normal(size=phi.dim)
        v /= vector_norm(v, norm)
        gaps = [phi(r * v) - k * r for r in radii]
        tail = gaps[-3:]
        if all(b < a for a, b in zip(tail, tail[1:])) and gaps[-1] < gaps[0]:
            return v
    return None


def dense_range_probe(phi: SmoothFunctional, T, k, eps=1e-8, k_max=10_000, x0=None, seed=0):
    """Point ``x`` in Fix(G) with ``|grad phi(x) - T| <= eps`` for invariant ``T`` with ``|T|_* < k``.

    ``|.|_*`` is the norm dual to the group's declared norm.
    """
    T = np.asarray(T, dtype=float).reshape(-1)
    G = phi.group
    if T.size != phi.dim:
        raise DimensionMismatch(f"target has dimension {T.size}, functional {phi.dim}")
    if _invariance_residual(T, G) > 1e-12 * (1.0 + np.abs(T).max()):
        raise TargetNotInvariant(f"target {T.tolist()} is not G-invariant")
    tn = float(vector_norm(T, DUAL_NORM[G.norm]))
    if tn >= k:
        raise TargetOutsideBall(f"|T| = {tn} is not below k = {k}")
    bad = coercivity_check(phi, k, seed=seed)
    if bad is not None:
        raise CoercivityViolated(f"phi grows slower than k|x| along direction {bad.tolist()}")
    start = np.zeros(phi.dim) if x0 is None else x0
    seq = palais_smale(phi.tilted(T), start, k_max=k_max, grad_tol=eps)
    full = float(np.linalg.norm(phi.gradient(seq.x) - T))
    return ProbeResult(seq.x, seq.grad_norm, full, seq)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------


def quadratic(dim, group=None, A=None, b=None, c=0.0):
    """``x^T A x + b^T x + c`` (``A`` defaults to the identity)."""
    A = np.eye(dim) if A is None else np.asarray(A, dtype=float)
    b = np.zeros(dim) if b is None else np.asarray(b, dtype=float)
    S = A + A.T

    def vg(x):
        Ax = A @ x
        return float(x @ Ax + b @ x + c), S @ x + b

    return SmoothFunctional(dim, group=group, value_and_grad=vg, name="quadratic")


def from_expression(expr, dim, group=None, lower_bound=None):
    """Functional from a sympy expression in ``x1 .. x{dim}``; gradient by symbolic differentiation."""
    import sympy

    xs = sympy.symbols(f"x1:{dim + 1}")
    try:
        e = sympy.sympify(expr, locals={str(s): s for s in xs})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise SymvarError(f"cannot parse expression {expr!r}: {exc}") from exc
    extra = e.free_symbols - set(xs)
    if extra:
        raise SymvarError(f"expression uses unknown symbols {sorted(map(str, extra))}")
    f = sympy.lambdify(xs, e, "numpy")
    df = sympy.lambdify(xs, [sympy.diff(e, s) for s in xs], "numpy")
    return SmoothFunctional(
        dim,
        value=lambda x: float(f(*x)),
        grad=lambda x: np.array(df(*x), dtype=float),
        group=group,
        lower_bound=lower_bound,
        name=str(e),
    )


def make_functional(name, dim=None, group=None, **params):
    """Registry lookup: ``quadratic``, ``expression``, ``plateau-energy``, ``p-energy``."""
    if name == "quadratic":
        return quadratic(dim, group, params.get("A"), params.get("b"), params.get("c", 0.0))
    if name == "expression":
        return from_expression(params["expr"], dim, group, params.get("lower_bound"))
    if name in ("plateau-energy", "p-energy"):
        from symvar import pde

        grid = pde.SymmetricGrid(int(params["m"]), params.get("group", "identity"))
        boundary = pde.grid_expression(grid, params.get("boundary", "0"))
        if name == "plateau-energy":
            load = pde.grid_expression(grid, params.get("T", "0"))
            return pde.plateau_functional(grid, boundary, load)
        return pde.p_energy_functional(grid, float(params.get("p", 2.0)), boundary)
    raise SymvarError(f"unknown functional {name!r}")
