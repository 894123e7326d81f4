"""Piecewise-constant symmetric controls, needle descent and the approximate minimum principle.

A signal takes one value from the finite control set ``K`` on each of ``N``
equal cells of ``[0, T]``.  The group acts on control values, never on time.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from symvar.errors import Blowup, GridMismatch, HypothesesViolated, NoConvergence, SymvarError
from symvar.group import FiniteGroup, symmetrize, trivial_group

BLOWUP_GUARD = 1e9
DEFAULT_SUBSTEPS = 4


def _fd_jacobian(f, t, x, u):
    n = x.size
    J = np.empty((n, n))
    step = 1e-6 * (1.0 + np.linalg.norm(x))
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        J[:, i] = (np.asarray(f(t, x + e, u)) - np.asarray(f(t, x - e, u))) / (2 * step)
    return J


@dataclass
class ControlProblem:
    """``x' = f(t, x, u)``, ``x(0) = x0``, minimize ``h(x(T))`` over signals valued in ``K``."""

    f: Callable
    h: Callable
    hgrad: Callable
    K: np.ndarray
    x0: np.ndarray
    T: float = 1.0
    jac: Callable | None = None
    group: FiniteGroup | None = None
    name: str = "control"

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        self.K = K.reshape(-1, 1) if K.ndim == 1 else K
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if self.group is None:
            self.group = trivial_group(self.K.shape[1])
        if self.group.dim != self.K.shape[1]:
            raise HypothesesViolated(f"group acts on R^{self.group.dim} but controls live in R^{self.K.shape[1]}")
        if self.T <= 0:
            raise HypothesesViolated("horizon T must be positive")

    @property
    def state_dim(self):
        return self.x0.size

    def jacobian(self, t, x, u):
        if self.jac is not None:
            return np.asarray(self.jac(t, x, u), dtype=float)
        return _fd_jacobian(self.f, t, x, u)

    def invariant_candidates(self):
        """Indices of ``K_G = {k in K : g(k) = k for all g}``, in list order."""
        out = []
        for i, k in enumerate(self.K):
            sk = symmetrize(k, self.group)
            if np.max(np.abs(sk - k)) <= 1e-12 * (1.0 + np.abs(k).max()):
                out.append(i)
        return np.array(out, dtype=int)

    def validate(self, samples=16, seed=0, check_coercivity=True):
        """Sampled hypothesis checks; raises :class:`HypothesesViolated`."""
        rng = np.random.default_rng(seed)
        report = {}
        for k in self.K:
            for gk in self.group.orbit(k):
                if not np.any(np.all(np.abs(self.K - gk) <= 1e-12 * (1.0 + np.abs(gk).max()), axis=1)):
                    raise HypothesesViolated(f"control set is not invariant: image {gk.tolist()} of {k.tolist()} missing")
        if self.invariant_candidates().size == 0:
            raise HypothesesViolated("control set has no invariant value")
        worst = 0.0
        if self.jac is not None:
            for _ in range(samples):
                t = rng.uniform(0, self.T)
                x = rng.normal(size=self.state_dim)
                u = self.K[rng.integers(len(self.K))]
                J = self.jacobian(t, x, u)
                fd = _fd_jacobian(self.f, t, x, u)
                err = np.abs(J - fd).max() / (1.0 + np.abs(fd).max())
                worst = max(worst, float(err))
            if worst > 1e-5:
                raise HypothesesViolated(f"state Jacobian disagrees with finite differences (rel. error {worst:.3g})")
        report["jacobian_error"] = worst
        if check_coercivity:
            shells = {}
            for r in (10.0, 1000.0):
                ratios = []
                for _ in range(samples):
                    x = rng.normal(size=self.state_dim)
                    x *= r / np.linalg.norm(x)
                    t = rng.uniform(0, self.T)
                    for u in self.K:
                        ratios.append(float(x @ np.asarray(self.f(t, x, u))) / (1.0 + x @ x))
                shells[r] = max(ratios)
            if shells[1000.0] > 10.0 * max(shells[10.0], 0.0) + 1.0:
                raise HypothesesViolated("<x, f(t, x, u)> grows faster than C (1 + |x|^2)")
            report["coercivity_ratio"] = max(shells.values())
        return report


@dataclass
class ControlSignal:
    """Index into ``problem.K`` per cell."""

    idx: np.ndarray
    T: float

    def __post_init__(self):
        self.idx = np.asarray(self.idx, dtype=int)

    @property
    def N(self):
        return self.idx.size

    @property
    def width(self):
        return self.T / self.N

    def values(self, K):
        return np.asarray(K)[self.idx]

    def with_cell(self, cell, k):
        idx = self.idx.copy()
        idx[cell] = k
        return ControlSignal(idx, self.T)


def control_distance(w1: ControlSignal, w2: ControlSignal, K=None):
    """Measure of the disagreement set: ``(T/N) #{cells where the values differ}``.

    Values are compared through ``K`` when given, otherwise by index.
    """
    if w1.N != w2.N or w1.T != w2.T:
        raise GridMismatch(f"signals on different grids ({w1.N} cells on [0,{w1.T}] vs {w2.N} on [0,{w2.T}])")
    if K is None:
        differ = w1.idx != w2.idx
    else:
        differ = np.any(w1.values(K) != w2.values(K), axis=-1)
    return w1.width * int(np.count_nonzero(differ))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    rates: np.ndarray
    """``f`` at every node, using the control of the substep that starts there (last node: previous cell)."""
    substeps: int

    @property
    def final(self):
        return self.states[-1]

    def cell_start(self, cell):
        return self.states[cell * self.substeps]


def _rk4_step(f, t, x, u, dt):
    k1 = np.asarray(f(t, x, u), dtype=float)
    k2 = np.asarray(f(t + dt / 2, x + dt / 2 * k1, u), dtype=float)
    k3 = np.asarray(f(t + dt / 2, x + dt / 2 * k2, u), dtype=float)
    k4 = np.asarray(f(t + dt, x + dt * k3, u), dtype=float)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), k1


def simulate(problem: ControlProblem, signal: ControlSignal, substeps=DEFAULT_SUBSTEPS, start_cell=0, start_state=None, prefix=None):
    """Classical RK4 with ``substeps`` steps per cell.

    ``start_cell``/``start_state``/``prefix`` resume from a stored trajectory
    so a single-cell change only re-integrates the tail.
    """
    if signal.T != problem.T:
        raise GridMismatch(f"signal horizon {signal.T} != problem horizon {problem.T}")
    s = int(substeps)
    N = signal.N
    dt = signal.width / s
    n_nodes = N * s + 1
    times = np.linspace(0.0, problem.T, n_nodes)
    states = np.empty((n_nodes, problem.state_dim))
    rates = np.empty_like(states)
    first = start_cell * s
    if prefix is not None and first > 0:
        states[: first + 1] = prefix.states[: first + 1]
        rates[:first] = prefix.rates[:first]
    states[first] = problem.x0 if start_state is None else start_state
    K = problem.K
    for cell in range(start_cell, N):
        u = K[signal.idx[cell]]
        for j in range(s):
            n = cell * s + j
            x = states[n]
            states[n + 1], rates[n] = _rk4_step(problem.f, times[n], x, u, dt)
            nrm = np.linalg.norm(states[n + 1])
            if not np.isfinite(nrm) or nrm > BLOWUP_GUARD:
                raise Blowup(f"state norm exceeded {BLOWUP_GUARD:g} at t={times[n + 1]:.6g}")
    rates[-1] = np.asarray(problem.f(times[-1], states[-1], K[signal.idx[-1]]), dtype=float)
    return Trajectory(times, states, rates, s)


@dataclass
class AdjointState:
    times: np.ndarray
    p: np.ndarray

    def cell_start(self, cell, substeps):
        return self.p[cell * substeps]


def adjoint(problem: ControlProblem, traj: Trajectory, signal: ControlSignal):
    """Backward RK4 for ``p' = -(df/dx)^T p`` from ``p(T) = h'(y(T))``.

    Midpoint states come from cubic Hermite interpolation of the stored
    trajectory, which keeps the scheme fourth order.
    """
    s = traj.substeps
    times, Y = traj.times, traj.states
    K = problem.K
    P = np.empty_like(Y)
    P[-1] = np.asarray(problem.hgrad(Y[-1]), dtype=float)
    for n in range(len(times) - 2, -1, -1):
        cell = n // s
        u = K[signal.idx[cell]]
        t0, t1 = times[n], times[n + 1]
        dt = t1 - t0
        y0, y1 = Y[n], Y[n + 1]
        f0 = traj.rates[n]
        f1 = np.asarray(problem.f(t1, y1, u), dtype=float)
        ymid = 0.5 * (y0 + y1) + dt / 8 * (f0 - f1)

        def rhs(t, y, p):
            return -problem.jacobian(t, y, u).T @ p

        p = P[n + 1]
        tm = t0 + dt / 2
        k1 = rhs(t1, y1, p)
        k2 = rhs(tm, ymid, p - dt / 2 * k1)
        k3 = rhs(tm, ymid, p - dt / 2 * k2)
        k4 = rhs(t0, y0, p - dt * k3)
        P[n] = p - dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(P[n])) or np.linalg.norm(P[n]) > BLOWUP_GUARD:
            raise Blowup(f"adjoint norm exceeded {BLOWUP_GUARD:g} at t={t0:.6g}")
    return AdjointState(times, P)


def _cell_hamiltonians(problem, traj, adj, cell, candidates):
    """Cell-averaged ``<f(t, y, k), p>`` (trapezoid over substep nodes) for each candidate index."""
    s = traj.substeps
    sl = slice(cell * s, cell * s + s + 1)
    ts, ys, ps = traj.times[sl], traj.states[sl], adj.p[sl]
    wts = np.full(s + 1, 1.0 / s)
    wts[0] = wts[-1] = 0.5 / s
    out = []
    for k in candidates:
        u = problem.K[k]
        vals = [float(np.asarray(problem.f(t, y, u)) @ p) for t, y, p in zip(ts, ys, ps)]
        out.append(float(wts @ vals))
    return np.array(out)


def hamiltonian_report(problem, signal, traj, adj, eps):
    cand = problem.invariant_candidates()
    slacks = []
    for cell in range(signal.N):
        hv = _cell_hamiltonians(problem, traj, adj, cell, [signal.idx[cell]])[0]
        hmin = _cell_hamiltonians(problem, traj, adj, cell, cand).min()
        slacks.append(hv - hmin)
    slacks = np.array(slacks)
    return {
        "cell_slacks": slacks.tolist(),
        "max_slack": float(slacks.max()),
        "eps": eps,
        "holds": bool(slacks.max() <= eps),
    }


@dataclass
class EpsilonOptimalResult:
    signal: ControlSignal
    trajectory: Trajectory
    adjoint: AdjointState
    cost: float
    history: list
    """terminal cost after each accepted needle (first entry: initial signal)"""
    needles: list
    """accepted ``(cell, candidate index)`` pairs"""
    hamiltonian: dict
    invariant_values: bool
    sweeps: int

    def to_dict(self, K):
        return {
            "signal": self.signal.values(K).tolist(),
            "signal_indices": self.signal.idx.tolist(),
            "terminal_state": self.trajectory.final.tolist(),
            "cost": self.cost,
            "cost_history": self.history,
            "needles": [list(map(int, nd)) for nd in self.needles],
            "sweeps": self.sweeps,
            "invariant_values": self.invariant_values,
            "hamiltonian": self.hamiltonian,
        }


def epsilon_optimal(problem: ControlProblem, eps, N, initial=None, max_iter=10_000, substeps=DEFAULT_SUBSTEPS, validate=True):
    """Needle descent on invariant signals with the Ekeland acceptance rule.

    Each sweep evaluates every single-cell replacement by an invariant
    candidate and accepts the best one if it lowers the terminal cost by
    more than ``eps * T / N`` (ties: earliest cell, then lowest candidate
    index).  Stops when no needle qualifies.
    """
    if not eps > 0:
        raise HypothesesViolated("eps must be positive")
    if validate:
        problem.validate()
    cand = problem.invariant_candidates()
    if cand.size == 0:
        raise HypothesesViolated("control set has no invariant value")
    if initial is None:
        sig = ControlSignal(np.full(int(N), cand[0]), problem.T)
    else:
        sig = initial if isinstance(initial, ControlSignal) else ControlSignal(initial, problem.T)
        if sig.N != N:
            raise GridMismatch(f"initial signal has {sig.N} cells, expected {N}")
        if not np.all(np.isin(sig.idx, cand)):
            raise HypothesesViolated("initial signal takes non-invariant values")
    threshold = eps * problem.T / N
    traj = simulate(problem, sig, substeps)
    cost = float(problem.h(traj.final))
    history = [cost]
    needles = []
    sweeps = 0
    while True:
        if sweeps >= max_iter:
            raise NoConvergence(f"needle descent did not settle within {max_iter} sweeps", sweeps)
        sweeps += 1
        best = (0.0, None)
        for cell in range(sig.N):
            for k in cand:
                if k == sig.idx[cell]:
                    continue
                trial = sig.with_cell(cell, k)
                tt = simulate(problem, trial, substeps, start_cell=cell, start_state=traj.cell_start(cell), prefix=traj)
                gain = cost - float(problem.h(tt.final))
                if gain > best[0]:
                    best = (gain, (cell, int(k), tt))
        if best[1] is None or best[0] <= threshold:
            break
        cell, k, traj = best[1]
        sig = sig.with_cell(cell, k)
        cost = float(problem.h(traj.final))
        history.append(cost)
        needles.append((cell, k))
    adj = adjoint(problem, traj, sig)
    ham = hamiltonian_report(problem, sig, traj, adj, eps)
    inv = bool(np.all(np.isin(sig.idx, cand)))
    return EpsilonOptimalResult(sig, traj, adj, cost, history, needles, ham, inv, sweeps)


def needle_derivative_check(problem: ControlProblem, signal: ControlSignal, cell, k, substeps=DEFAULT_SUBSTEPS):
    """Actual change of ``h(x(T))`` under a one-cell needle versus the adjoint prediction.

    The prediction is the cell-averaged ``<f(k) - f(v), p> * T/N``.
    Returns ``(actual, predicted)``.
    """
    traj = simulate(problem, signal, substeps)
    adj = adjoint(problem, traj, signal)
    hv, hk = _cell_hamiltonians(problem, traj, adj, cell, [signal.idx[cell], k])
    trial = simulate(problem, signal.with_cell(cell, k), substeps)
    actual = float(problem.h(trial.final) - problem.h(traj.final))
    return actual, float((hk - hv) * signal.width)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------


def linear_dynamics(A, B):
    """``f = A x + B u``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return (lambda t, x, u: A @ x + B @ u), (lambda t, x, u: A)


def bilinear_dynamics(A, Bs):
    """``f = A x + sum_i u_i B_i x``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Bs = np.asarray(Bs, dtype=float)

    def jac(t, x, u):
        return A + np.tensordot(u, Bs, axes=(0, 0))

    return (lambda t, x, u: jac(t, x, u) @ x), jac


def expression_dynamics(exprs, n, m):
    """``f`` from sympy expressions in ``t, x1..xn, u1..um``; Jacobian by differentiation."""
    import sympy

    t = sympy.Symbol("t")
    xs = sympy.symbols(f"x1:{n + 1}")
    us = sympy.symbols(f"u1:{m + 1}")
    names = {"t": t, **{str(s): s for s in (*xs, *us)}}
    try:
        es = [sympy.sympify(e, locals=names) for e in exprs]
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise SymvarError(f"cannot parse dynamics: {exc}") from exc
    if len(es) != n:
        raise SymvarError(f"dynamics has {len(es)} components for a state of dimension {n}")
    args = (t, *xs, *us)
    F = sympy.lambdify(args, es, "numpy")
    J = sympy.lambdify(args, sympy.Matrix(es).jacobian(xs), "numpy")
    return (
        lambda tt, x, u: np.array(F(tt, *x, *u), dtype=float),
        lambda tt, x, u: np.array(J(tt, *x, *u), dtype=float).reshape(n, n),
    )


def quadratic_cost(target):
    target = np.atleast_1d(np.asarray(target, dtype=float))
    return (lambda x: float(np.sum((x - target) ** 2))), (lambda x: 2.0 * (x - target))


def expression_cost(expr, n):
    import sympy

    xs = sympy.symbols(f"x1:{n + 1}")
    try:
        e = sympy.sympify(expr, locals={str(s): s for s in xs})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise SymvarError(f"cannot parse cost: {exc}") from exc
    h = sympy.lambdify(xs, e, "numpy")
    dh = sympy.lambdify(xs, [sympy.diff(e, s) for s in xs], "numpy")
    return (lambda x: float(h(*x))), (lambda x: np.array(dh(*x), dtype=float))


def box_candidates(bounds, per_axis, group=None):
    """Tensor grid on a box, closed under the group action (images appended in order)."""
    axes = [np.linspace(lo, hi, int(per_axis)) for lo, hi in bounds]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(bounds))
    if group is None:
        return pts
    out = [p for p in pts]
    for p in pts:
        for gp in group.orbit(p):
            if not any(np.allclose(gp, q, atol=1e-12, rtol=0) for q in out):
                out.append(gp)
    return np.array(out)
