"""Exact variational principles on finite metric spaces with a group action.

The group acts by index permutations (forward maps: ``g(i) = perm[i]``).
Every solver returns a certificate whose defining inequalities have been
re-checked by a full scan over *all* points, invariant or not.

On a finite space there is no orbit average, so the symmetrization point of a
non-invariant ``y`` is replaced by a designated invariant *proxy* supplied with
the space.  Instances that need a proxy and do not carry one are rejected.
"""

from dataclasses import dataclass, field

import numpy as np

from symvar import _accel
from symvar.errors import (
    EmptyInvariantSlice,
    HypothesisViolated,
    InvalidBifunction,
    InvalidMetric,
    NoInvariantPoint,
    NotConvexWrtGroup,
    NotInvariantObjective,
    NotInvariantStart,
    SymvarError,
)

FLOAT_TOL = 1e-12
TRIANGLE_CHECK_MAX_N = 500


def _is_integral(*arrays):
    for a in arrays:
        a = np.asarray(a)
        if np.issubdtype(a.dtype, np.integer):
            continue
        finite = a[np.isfinite(a)]
        if not np.all(finite == np.round(finite)):
            return False
    return True


class FiniteMetricSpace:
    """Points ``0..n-1`` with a distance matrix and an isometric permutation action.

    Parameters
    ----------
    dist : (n, n) array
        Distance matrix; validated as a metric (triangle inequality checked
        exhaustively up to ``n = 500``).
    perms : sequence of (n,) int arrays
        Forward maps of the acting permutations (generators suffice).
    proxy : (n,) int array, optional
        Designated invariant stand-in for each point's symmetrization.
    """

    def __init__(self, dist, perms=(), proxy=None, validate=True):
        self.dist = np.array(dist, dtype=float)
        self.dist.setflags(write=False)
        n = self.dist.shape[0]
        self.perms = [np.asarray(p, dtype=np.intp) for p in perms]
        self.exact = _is_integral(self.dist)
        self.tol = 0.0 if self.exact else FLOAT_TOL
        if validate:
            self._validate()
        fixed = np.ones(n, dtype=bool)
        for p in self.perms:
            fixed &= p == np.arange(n)
        self.invariant_mask = fixed
        self.invariant_indices = np.flatnonzero(fixed)
        self.proxy = None
        if proxy is not None:
            self.set_proxy(proxy)

    @property
    def n(self):
        return self.dist.shape[0]

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"FiniteMetricSpace(n={self.n}, generators={len(self.perms)}, invariant={len(self.invariant_indices)})"

    def _validate(self):
        d = self.dist
        n = d.shape[0]
        if d.ndim != 2 or d.shape[1] != n or n == 0:
            raise InvalidMetric(f"distance matrix must be square and non-empty, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidMetric("distance matrix has non-finite entries")
        if np.any(np.diag(d) != 0):
            raise InvalidMetric("distance matrix has a non-zero diagonal")
        if np.max(np.abs(d - d.T)) > self.tol:
            raise InvalidMetric("distance matrix is not symmetric")
        off = d[~np.eye(n, dtype=bool)]
        if off.size and off.min() <= 0:
            raise InvalidMetric("distinct points at zero or negative distance")
        if n <= TRIANGLE_CHECK_MAX_N:
            excess, i, j, k = _accel.triangle_excess(d)
            if excess > self.tol * (1.0 + float(d.max())):
                raise InvalidMetric(f"triangle inequality fails: d[{i},{j}] > d[{i},{k}] + d[{k},{j}] by {excess}")
        for g, p in enumerate(self.perms):
            if p.shape != (n,) or not np.array_equal(np.sort(p), np.arange(n)):
                raise InvalidMetric(f"action {g} is not a permutation of 0..{n - 1}")
            moved = d[np.ix_(p, p)]
            if np.max(np.abs(moved - d)) > self.tol:
                i, j = np.unravel_index(int(np.argmax(np.abs(moved - d))), d.shape)
                raise InvalidMetric(f"action {g} does not preserve d at pair ({i}, {j})")

    def set_proxy(self, proxy):
        proxy = np.asarray(proxy, dtype=np.intp)
        if proxy.shape != (self.n,):
            raise SymvarError("proxy must give one index per point")
        if not np.all(self.invariant_mask[proxy]):
            raise SymvarError("every proxy must be an invariant point")
        inv = self.invariant_indices
        if np.any(proxy[inv] != inv):
            raise SymvarError("invariant points must be their own proxy")
        self.proxy = proxy

    def representative(self, y):
        """Invariant stand-in for the symmetrization of point ``y``."""
        if self.invariant_mask[y]:
            return int(y)
        if self.proxy is None:
            raise HypothesisViolated(f"point {y} is not invariant and no invariant proxy is designated", witness=int(y))
        return int(self.proxy[y])

    def is_invariant_function(self, f):
        f = np.asarray(f)
        return all(np.array_equal(f[p], f) for p in self.perms)

    def diameter(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        if idx.size < 2:
            return 0.0
        return float(self.dist[np.ix_(idx, idx)].max())


# ---------------------------------------------------------------------------
# Ekeland
# ---------------------------------------------------------------------------


@dataclass
class EkelandCertificate:
    a: int
    slack1: float
    """min over x != a of f(x) + gamma d(x, a) - f(a); must be > 0."""
    slack2: float
    """f(x0) - gamma d(a, x0) - f(a); must be >= 0."""
    iterations: int
    trace: list
    gamma: float
    x0: int
    extra: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.slack1 > 0 and self.slack2 >= 0

    def to_dict(self):
        return {
            "a": self.a,
            "x0": self.x0,
            "gamma": self.gamma,
            "slack1": _json_float(self.slack1),
            "slack2": _json_float(self.slack2),
            "iterations": self.iterations,
            "trace": list(self.trace),
            "ok": self.ok,
            **self.extra,
        }


def _json_float(v):
    v = float(v)
    if np.isfinite(v):
        return v
    return "inf" if v > 0 else "-inf"


def ekeland_slacks(M: FiniteMetricSpace, f, gamma, x0, a):
    """Both Ekeland slacks of candidate ``a`` by exhaustive scan over all of M."""
    f = np.asarray(f, dtype=float)
    others = np.arange(M.n) != a
    with np.errstate(invalid="ignore"):
        vals = f[others] + gamma * M.dist[others, a] - f[a]
    slack1 = float(vals.min()) if vals.size else float("inf")
    slack2 = float(f[x0] - gamma * M.dist[a, x0] - f[a])
    return slack1, slack2


def ekeland_point(M: FiniteMetricSpace, f, gamma, x0):
    """Invariant point ``a`` with
    ``f(a) < f(x) + gamma d(x, a)`` for all ``x != a`` and
    ``f(a) <= f(x0) - gamma d(a, x0)``.

    Descends from ``x0`` inside the invariant slice: each step moves to the
    lowest-``f`` invariant point (lowest index on ties) of
    ``{x != a : f(x) + gamma d(x, a) <= f(a)}``, until that set has no
    invariant point.  The result is then certified against every point of M;
    a non-invariant violator means the instance lacks the convexity that
    makes an invariant Ekeland point exist, and ``NotConvexWrtGroup`` is
    raised with the violator as witness.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (M.n,):
        raise SymvarError(f"objective has shape {f.shape}, expected ({M.n},)")
    if not gamma > 0:
        raise SymvarError(f"gamma must be positive, got {gamma}")
    if np.any(np.isnan(f)) or np.any(f == -np.inf):
        raise SymvarError("objective must be real or +inf")
    if not M.is_invariant_function(f):
        raise NotInvariantObjective("objective is not constant on orbits")
    inv = M.invariant_indices
    if not np.any(np.isfinite(f[inv])):
        raise NoInvariantPoint("no invariant point in the domain of f")
    x0 = int(x0)
    if not M.invariant_mask[x0]:
        raise NotInvariantStart(f"start point {x0} is not invariant")

    a = x0
    trace = [a]
    while True:
        with np.errstate(invalid="ignore"):
            lhs = f[inv] + gamma * M.dist[inv, a]
        cand = inv[(lhs <= f[a]) & (inv != a)]
        if cand.size == 0:
            break
        a = int(cand[np.argmin(f[cand])])
        trace.append(a)

    slack1, slack2 = ekeland_slacks(M, f, gamma, x0, a)
    cert = EkelandCertificate(a, slack1, slack2, len(trace) - 1, trace, float(gamma), x0)
    if not slack1 > 0:
        with np.errstate(invalid="ignore"):
            vals = f + gamma * M.dist[:, a] - f[a]
        vals[a] = np.inf
        witness = int(np.argmin(vals))
        raise NotConvexWrtGroup(
            f"invariant candidate {a} is beaten by non-invariant point {witness}",
        )
    if not slack2 >= 0:  # pragma: no cover - descent keeps slack2 >= 0 by construction
        raise SymvarError("internal error: second Ekeland inequality failed")
    return cert


# ---------------------------------------------------------------------------
# bifunctions
# ---------------------------------------------------------------------------


class Bifunction:
    """Tabulated ``F[x, y]`` with ``F[x, x] = 0`` and the triangle property."""

    def __init__(self, table, M: FiniteMetricSpace | None = None, validate=True):
        self.table = np.array(table, dtype=float)
        self.table.setflags(write=False)
        self.exact = _is_integral(self.table)
        if validate:
            self._validate(M)

    @property
    def n(self):
        return self.table.shape[0]

    def __getitem__(self, idx):
        return self.table[idx]

    def _validate(self, M):
        F = self.table
        n = F.shape[0]
        if F.ndim != 2 or F.shape[1] != n:
            raise InvalidBifunction(f"bifunction table must be square, got {F.shape}")
        if not np.all(np.isfinite(F)):
            raise InvalidBifunction("bifunction table must be finite")
        if np.any(np.diag(F) != 0):
            raise InvalidBifunction("F(x, x) must vanish")
        tol = 0.0 if self.exact else FLOAT_TOL * (1.0 + float(np.abs(F).max()))
        excess, i, j, k = _accel.triangle_excess(F)
        if excess > tol:
            raise InvalidBifunction(f"F[{i},{j}] > F[{i},{k}] + F[{k},{j}] by {excess}")
        if M is not None:
            if M.n != n:
                raise InvalidBifunction("bifunction and space sizes differ")
            for g, p in enumerate(M.perms):
                for x in M.invariant_indices:
                    # invariance in the second argument; p is a forward map
                    if np.max(np.abs(F[x, p] - F[x])) > tol:
                        raise InvalidBifunction(f"F[{x}, .] is not invariant under action {g}")


def _leq_zero_tol(M, F):
    return 0.0 if (M.exact and F.exact) else FLOAT_TOL


def descent_set(M, F, x, tol):
    """``S(x) = {y : F[x, y] + d(x, y) <= 0}``."""
    return np.flatnonzero(F.table[x] + M.dist[x] <= tol)


@dataclass
class BifunctionRun:
    sequence: list
    limit: int
    sets: list
    diameters: list

    @property
    def iterations(self):
        return len(self.sequence) - 1

    def to_dict(self):
        return {
            "sequence": self.sequence,
            "limit": self.limit,
            "set_sizes": [len(s) for s in self.sets],
            "diameters": self.diameters,
        }


def _start(M, x0):
    if x0 is None:
        if M.invariant_indices.size == 0:
            raise NoInvariantPoint("the action has no fixed point")
        return int(M.invariant_indices[0])
    x0 = int(x0)
    if not M.invariant_mask[x0]:
        raise NotInvariantStart(f"start point {x0} is not invariant")
    return x0


def iterate_bifunction(M: FiniteMetricSpace, F: Bifunction, x0=None, max_n=None):
    """Recursive nested-set construction from an invariant start.

    ``x_n`` is the argmin of ``F[x_{n-1}, .]`` over the invariant part of
    ``S_{n-1}`` (lowest index on ties), which satisfies the ``gamma + 1/n``
    selection slack automatically.  Stops when the invariant slice of
    ``S(x_n)`` is ``{x_n}``; the sets are strictly nested so this takes at
    most ``n`` steps.
    """
    x = _start(M, x0)
    tol = _leq_zero_tol(M, F)
    max_n = M.n + 1 if max_n is None else int(max_n)
    sequence = [x]
    sets = []
    diameters = []
    for _ in range(max_n):
        S = descent_set(M, F, x, tol)
        sets.append(S)
        diameters.append(M.diameter(S))
        slice_ = S[M.invariant_mask[S]]
        if slice_.size == 0:
            raise EmptyInvariantSlice(f"S({x}) has no invariant point")
        nxt = int(slice_[np.argmin(F.table[x, slice_])])
        if F.table[x, nxt] >= 0:
            break
        x = nxt
        sequence.append(x)
    else:
        raise SymvarError(f"iteration did not stabilize within {max_n} steps")
    return BifunctionRun(sequence, x, sets, diameters)


@dataclass
class BifunctionResult:
    x_hat: int
    margin: float
    run: BifunctionRun
    kind: str

    def to_dict(self):
        return {"kind": self.kind, "x_hat": self.x_hat, "margin": _json_float(self.margin), **self.run.to_dict()}


def strong_ekeland_bifunction(M: FiniteMetricSpace, F: Bifunction, x0=None):
    """Invariant ``x_hat in S_0`` with ``F[x_hat, x] + d(x_hat, x) > 0`` for every ``x != x_hat``."""
    run = iterate_bifunction(M, F, x0)
    xh = run.limit
    vals = F.table[xh] + M.dist[xh]
    vals = np.delete(vals, xh)
    margin = float(vals.min()) if vals.size else float("inf")
    if not margin > 0:
        raise NotConvexWrtGroup(f"non-invariant point undercuts the invariant limit {xh}")
    return BifunctionResult(xh, margin, run, "strong-ekeland")


def takahashi_minimizer(M: FiniteMetricSpace, F: Bifunction, x0=None):
    """Invariant ``x_hat in S_0`` with ``F[x_hat, x] >= 0`` for every invariant ``x``.

    Hypothesis (checked on ``S_0``): whenever ``inf_x F[y_bar, x] < 0`` there
    is an invariant ``x != y_bar`` with ``F[y_bar, x] + d(y_bar, x) <= 0``.
    """
    x0 = _start(M, x0)
    tol = _leq_zero_tol(M, F)
    inv = M.invariant_indices
    for y in descent_set(M, F, x0, tol):
        yb = M.representative(y)
        if F.table[yb].min() < -tol:
            ok = (F.table[yb, inv] + M.dist[yb, inv] <= tol) & (inv != yb)
            if not np.any(ok):
                raise HypothesisViolated(f"no invariant descent step from representative {yb} of {y}", witness=int(y))
    run = iterate_bifunction(M, F, x0)
    xh = run.limit
    margin = float(F.table[xh, inv].min())
    if margin < -tol:  # pragma: no cover - implied by the hypothesis
        raise SymvarError("internal error: Takahashi conclusion failed")
    return BifunctionResult(xh, margin, run, "takahashi")


def _t_sets(T, n):
    if callable(T):
        return [set(int(v) for v in T(y)) for y in range(n)]
    T = list(T)
    if len(T) != n:
        raise SymvarError(f"multivalued map has {len(T)} entries for {n} points")
    return [set(int(v) for v in t) for t in T]


def caristi_fixed_point(M: FiniteMetricSpace, F: Bifunction, T, x0=None):
    """Invariant ``x_hat in S_0`` with ``x_hat in T(x_hat)``.

    ``T`` is a list of index sets (or a callable ``y -> iterable``).
    Hypothesis (checked on ``S_0``): each ``T(y)`` holds an invariant ``x``
    with ``F[y_bar, x] + d(y_bar, x) <= 0``.
    """
    x0 = _start(M, x0)
    tol = _leq_zero_tol(M, F)
    Ts = _t_sets(T, M.n)
    for y in descent_set(M, F, x0, tol):
        yb = M.representative(y)
        good = [x for x in Ts[y] if M.invariant_mask[x] and F.table[yb, x] + M.dist[yb, x] <= tol]
        if not good:
            raise HypothesisViolated(f"T({y}) has no admissible invariant point", witness=int(y))
    run = iterate_bifunction(M, F, x0)
    xh = run.limit
    if xh not in Ts[xh]:  # pragma: no cover - implied by the hypothesis
        raise SymvarError("internal error: limit is not a fixed point of T")
    return BifunctionResult(xh, 0.0, run, "caristi")
