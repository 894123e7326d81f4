"""Petals, drops and related set predicates on point samples.

Sets are never represented symbolically: a petal or drop is a membership
predicate, a closed set ``C`` is a finite :class:`PointCloud`, and every
set-level statement (equivariance, invariance, disjointness) is checked on a
finite sample.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from symvar.errors import ApexNotInSet, DimensionMismatch, FocusInsideSet, SymvarError
from symvar.group import ALGEBRAIC_TOL, FiniteGroup, vector_norm

MEMBERSHIP_TOL = 1e-12


@dataclass(frozen=True)
class Petal:
    """``P_gamma(a, b) = {x : gamma d(a, x) + d(b, x) <= d(a, b)}``."""

    a: np.ndarray
    b: np.ndarray
    gamma: float
    norm: str = "l2"

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if not self.gamma > 0:
            raise SymvarError(f"petal needs gamma > 0, got {self.gamma}")
        if self.a.shape != self.b.shape:
            raise DimensionMismatch("petal apex and focus differ in dimension")

    def moved(self, g):
        """Image petal ``P_gamma(g a, g b)`` under a linear map ``g`` (matrix)."""
        g = np.asarray(g, dtype=float)
        return Petal(g @ self.a, g @ self.b, self.gamma, self.norm)

    def radius(self):
        """Every point of the petal lies in the closed ball ``B(b, d(a, b))``."""
        return float(vector_norm(self.a - self.b, self.norm))

    def __contains__(self, x):
        return petal_contains(self, x)


@dataclass(frozen=True)
class Drop:
    """``D(a, B)``: convex hull of the apex ``a`` and the closed ball ``B``."""

    a: np.ndarray
    center: np.ndarray
    radius: float
    norm: str = "l2"

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius < 0:
            raise SymvarError(f"drop needs radius >= 0, got {self.radius}")
        if self.a.shape != self.center.shape:
            raise DimensionMismatch("drop apex and ball center differ in dimension")

    def moved(self, g):
        g = np.asarray(g, dtype=float)
        return Drop(g @ self.a, g @ self.center, self.radius, self.norm)

    def bounding_radius(self):
        """Radius of a ball around ``center`` containing the drop."""
        return max(float(vector_norm(self.a - self.center, self.norm)), self.radius)

    def __contains__(self, x):
        return drop_contains(self, x)


@dataclass(frozen=True)
class PointCloud:
    """Finite sample standing in for a closed set."""

    points: np.ndarray
    norm: str = "l2"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 0:
            raise SymvarError("point cloud must be non-empty")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def distance(self, x):
        """``d(x, C)`` by exhaustive minimum; vectorized over leading axes of x."""
        x = np.asarray(x, dtype=float)
        d = vector_norm(x[..., None, :] - self.points, self.norm)
        return d.min(axis=-1)

    def nearest(self, x):
        x = np.asarray(x, dtype=float)
        return int(np.argmin(vector_norm(self.points - x, self.norm)))


def _check_dim(vec, ref):
    if np.shape(vec)[-1] != ref.shape[-1]:
        raise DimensionMismatch(f"point of dimension {np.shape(vec)[-1]} vs set in R^{ref.shape[-1]}")


def petal_contains(P: Petal, x, tol=MEMBERSHIP_TOL):
    """Membership in a petal; vectorized over leading axes of ``x``."""
    x = np.asarray(x, dtype=float)
    _check_dim(x, P.a)
    lhs = P.gamma * vector_norm(x - P.a, P.norm) + vector_norm(x - P.b, P.norm)
    res = lhs <= vector_norm(P.a - P.b, P.norm) + tol
    return bool(res) if res.ndim == 0 else res


def _drop_gap_l2(u, w, r):
    """min over t in [0, 1] of ||u - t w|| - t r, in closed form.

    The gap is convex in t; its stationary point solves
    ``(t|w|^2 - u.w) / ||u - t w|| = r``.
    """
    cand = [0.0, 1.0]
    ww = float(w @ w)
    if ww > r * r:
        uw = float(u @ w)
        perp2 = max(float(u @ u) - uw * uw / ww, 0.0)
        s = r * np.sqrt(ww * perp2 / (ww - r * r))
        cand.append(min(1.0, max(0.0, (uw + s) / ww)))
    return min(float(np.linalg.norm(u - t * w)) - t * r for t in cand)


def _drop_gap_general(u, w, r, norm):
    from scipy.optimize import minimize_scalar

    def gap(t):
        return float(vector_norm(u - t * w, norm)) - t * r

    res = minimize_scalar(gap, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-14})
    return min(gap(0.0), gap(1.0), res.fun)


def drop_gap(D: Drop, x):
    """``min_{t in [0,1]} ||x - a - t(center - a)|| - t radius``; <= 0 iff x in D."""
    x = np.asarray(x, dtype=float)
    _check_dim(x, D.a)
    u = x - D.a
    w = D.center - D.a
    if D.norm == "l2":
        return _drop_gap_l2(u, w, D.radius)
    return _drop_gap_general(u, w, D.radius, D.norm)


def drop_contains(D: Drop, x, tol=MEMBERSHIP_TOL):
    """Membership in a drop; vectorized over a batch of points."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return bool(drop_gap(D, x) <= tol)
    flat = x.reshape(-1, x.shape[-1])
    out = np.array([drop_gap(D, p) <= tol for p in flat], dtype=bool)
    return out.reshape(x.shape[:-1])


def _members(member, X):
    res = member(X)
    if np.ndim(res) == 0:
        return np.array([bool(member(x)) for x in X])
    return np.asarray(res, dtype=bool)


def petal_equivariance_check(P: Petal, g, samples):
    """``x in P_gamma(a, b)  <=>  g x in P_gamma(g a, g b)`` on every sample.

    Returns ``(holds, witness)`` with ``witness`` None when it holds.
    """
    g = np.asarray(g, dtype=float)
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    inside = petal_contains(P, X)
    moved = petal_contains(P.moved(g), X @ g.T)
    bad = np.flatnonzero(inside != moved)
    if bad.size:
        return False, X[bad[0]].copy()
    return True, None


def drop_equivariance_check(D: Drop, g, samples):
    """Drop analogue of :func:`petal_equivariance_check` with ``g(B) = B(g c, r)``."""
    g = np.asarray(g, dtype=float)
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    inside = drop_contains(D, X)
    moved = drop_contains(D.moved(g), X @ g.T)
    bad = np.flatnonzero(inside != moved)
    if bad.size:
        return False, X[bad[0]].copy()
    return True, None


@dataclass
class InvarianceCheck:
    holds: bool
    witness: np.ndarray | None = None
    element: int | None = None

    def __bool__(self):
        return self.holds


def set_invariance_check(member: Callable, G: FiniteGroup, samples):
    """``member(x) <=> member(g x)`` for each sample x and each g in G.

    ``member`` may be scalar or vectorized.  The witness is the first sample
    whose membership differs from that of one of its images.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    base = _members(member, X)
    for k in range(G.order):
        moved = _members(member, G.act(k, X))
        bad = np.flatnonzero(base != moved)
        if bad.size:
            return InvarianceCheck(False, X[bad[0]].copy(), k)
    return InvarianceCheck(True)


def grid_samples(lo, hi, per_axis):
    """Regular sample grid over the box ``[lo, hi]`` (per coordinate)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axes = [np.linspace(l, h, per_axis) for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


# ---------------------------------------------------------------------------
# flower / generalized drop
# ---------------------------------------------------------------------------


@dataclass
class PairVerdict:
    g: int
    h: int
    focus_distance: float
    guard: bool
    ball_separated: bool
    sampled_common: int
    verdict: str

    def to_dict(self):
        return {
            "g": self.g,
            "h": self.h,
            "focus_distance": self.focus_distance,
            "guard": self.guard,
            "ball_separated": self.ball_separated,
            "sampled_common_points": self.sampled_common,
            "verdict": self.verdict,
        }


@dataclass
class FlowerReport:
    kind: str
    distance_to_set: float
    threshold: float
    n_samples: int
    pairs: list = field(default_factory=list)
    """Pairs passing the separation guard d(g b, h b) > 2 d(b, C)."""
    unguarded: list = field(default_factory=list)
    """Pairs with g b != h b that fail the guard (the alternative quantifier)."""

    @property
    def disjoint(self):
        return all(p.verdict != "intersecting" for p in self.pairs)

    def to_dict(self):
        return {
            "kind": self.kind,
            "distance_to_set": self.distance_to_set,
            "guard_threshold": self.threshold,
            "n_samples": self.n_samples,
            "disjoint": self.disjoint,
            "pairs": [p.to_dict() for p in self.pairs],
            "unguarded_pairs": [p.to_dict() for p in self.unguarded],
        }


def _orbit_sets(a, b, gamma, G, kind, radius):
    sets = []
    for k in range(G.order):
        ga, gb = G.act(k, a), G.act(k, b)
        if kind == "petal":
            sets.append(Petal(ga, gb, gamma, G.norm))
        else:
            sets.append(Drop(ga, gb, radius, G.norm))
    return sets


def _contains(S, X):
    return petal_contains(S, X) if isinstance(S, Petal) else drop_contains(S, X)


def _bounding(S):
    if isinstance(S, Petal):
        return S.b, S.radius()
    return S.center, S.bounding_radius()


def flower_disjointness(a, b, C: PointCloud, gamma, G: FiniteGroup, kind="petal", radius=0.0, n_samples=10_000, seed=0):
    """Disjointness report for the orbit of a petal (or drop) under ``G``.

    For every unordered pair ``(g, h)`` the separation guard
    ``d(g b, h b) > 2 d(b, C)`` is evaluated.  Guarded pairs are certified
    either analytically (the two bounding balls ``B(g b, rho)``, ``B(h b, rho)``
    are disjoint) or by dense sampling of their common bounding box.  Pairs
    with ``g b != h b`` that fail the guard are sampled too and reported
    separately, since the stronger quantification is not implied by it.
    ``kind="drop"`` uses ``D(g a, B(g b, radius))``; ``radius=0`` gives the
    segment ``[g a, g b]``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if kind not in ("petal", "drop"):
        raise SymvarError(f"unknown flower kind {kind!r}")
    dbc = float(C.distance(b))
    if dbc <= ALGEBRAIC_TOL:
        raise FocusInsideSet(f"focus lies in C (d(b, C) = {dbc})")
    sets = _orbit_sets(a, b, gamma, G, kind, radius)
    rng = np.random.default_rng(seed)
    report = FlowerReport(kind, dbc, 2 * dbc, n_samples)
    for i in range(G.order):
        for j in range(i + 1, G.order):
            gb, hb = G.act(i, b), G.act(j, b)
            dist = float(vector_norm(gb - hb, G.norm))
            if dist <= ALGEBRAIC_TOL:
                continue  # same focus: the two sets coincide or are not comparable
            guard = dist > 2 * dbc
            c1, r1 = _bounding(sets[i])
            c2, r2 = _bounding(sets[j])
            separated = float(vector_norm(c1 - c2, G.norm)) > r1 + r2
            common = 0
            if not separated:
                lo = np.maximum(c1 - r1, c2 - r2)
                hi = np.minimum(c1 + r1, c2 + r2)
                if np.all(lo <= hi):
                    X = rng.uniform(lo, hi, size=(n_samples, len(lo)))
                    both = _contains(sets[i], X) & _contains(sets[j], X)
                    common = int(np.count_nonzero(both))
            if separated:
                verdict = "disjoint-certified"
            elif common:
                verdict = "intersecting"
            else:
                verdict = "disjoint-sampled"
            pv = PairVerdict(i, j, dist, guard, separated, common, verdict)
            (report.pairs if guard else report.unguarded).append(pv)
    return report


# ---------------------------------------------------------------------------
# petal / drop points (constructive Ekeland on the cloud)
# ---------------------------------------------------------------------------


def cloud_action(C: PointCloud, G: FiniteGroup, tol=1e-9):
    """Index permutations induced on the cloud by each group element.

    Raises HypothesisViolated if C is not G-invariant.
    """
    from symvar.errors import HypothesisViolated

    perms = []
    for k in range(G.order):
        moved = G.act(k, C.points)
        d = vector_norm(moved[:, None, :] - C.points[None, :, :], C.norm)
        idx = np.argmin(d, axis=1)
        if np.max(d[np.arange(len(idx)), idx]) > tol:
            bad = int(np.argmax(d[np.arange(len(idx)), idx]))
            raise HypothesisViolated(f"point cloud is not invariant under element {k}", witness=bad)
        # forward map: g(point i) = point idx[i]
        perms.append(idx)
    return perms


def petal_point(C: PointCloud, x0_index, b, gamma, G: FiniteGroup | None = None):
    """Invariant ``a in C cap P_gamma(x0, b)`` with ``C cap P_gamma(a, b) = {a}``.

    Runs the invariant Ekeland construction for ``f(x) = d(x, b)`` over the
    cloud.  Returns ``(index, certificate)``; the certificate is re-checked by
    a full scan of C.
    """
    from symvar.variational import FiniteMetricSpace, ekeland_point

    b = np.asarray(b, dtype=float)
    pts = C.points
    dist = vector_norm(pts[:, None, :] - pts[None, :, :], C.norm)
    perms = cloud_action(C, G) if G is not None else []
    M = FiniteMetricSpace(dist, perms)
    f = vector_norm(pts - b, C.norm)
    cert = ekeland_point(M, f, gamma, x0_index)
    a = cert.a
    P = Petal(pts[a], b, gamma, C.norm)
    inside = np.flatnonzero(petal_contains(P, pts, tol=0.0))
    cert.extra["petal_members"] = inside.tolist()
    return a, cert


def drop_point(C: PointCloud, x0_index, center, radius, G: FiniteGroup | None = None):
    """Invariant ``a in C cap D(x0, B)`` with ``C cap D(a, B) = {a}``, B = B(center, radius).

    Restricts to ``C cap D(x0, B)`` and applies :func:`petal_point` with
    ``gamma = (d - r) / (d + r)``, ``d = d(center, C)``.
    """
    center = np.asarray(center, dtype=float)
    d = float(C.distance(center))
    if not radius < d:
        raise FocusInsideSet(f"ball radius {radius} must be below d(center, C) = {d}")
    D0 = Drop(C.points[x0_index], center, radius, C.norm)
    keep = np.flatnonzero(drop_contains(D0, C.points))
    sub = PointCloud(C.points[keep], C.norm)
    x0_sub = int(np.flatnonzero(keep == x0_index)[0])
    gamma = (d - radius) / (d + radius)
    a_sub, cert = petal_point(sub, x0_sub, center, gamma, G)
    a = int(keep[a_sub])
    Da = Drop(C.points[a], center, radius, C.norm)
    members = np.flatnonzero([drop_gap(Da, p) <= 0.0 for p in C.points])
    cert.extra["drop_members"] = members.tolist()
    cert.extra["gamma"] = gamma
    return a, cert


# ---------------------------------------------------------------------------
# contingent cone
# ---------------------------------------------------------------------------


def default_t_grid(k_max=20):
    return 2.0 ** -np.arange(1, k_max + 1)


@dataclass
class ConeEstimate:
    estimate: float
    excluded: bool
    threshold: float
    t_grid: np.ndarray
    ratios: np.ndarray

    def to_dict(self):
        return {
            "estimate": self.estimate,
            "excluded": self.excluded,
            "threshold": self.threshold,
            "t_grid": self.t_grid.tolist(),
            "ratios": self.ratios.tolist(),
        }


def contingent_cone_excludes(C: PointCloud, a, v, t_grid=None, threshold=1e-3):
    """Estimate ``liminf_{t->0+} d(a + t v, C) / t`` on a decreasing t grid.

    The estimate is the minimum ratio over the grid; the direction is
    reported as excluded from the contingent cone when it reaches
    ``threshold``.
    """
    a = np.asarray(a, dtype=float)
    v = np.asarray(v, dtype=float)
    if C.distance(a) > ALGEBRAIC_TOL:
        raise ApexNotInSet(f"apex is at distance {float(C.distance(a))} from C")
    t = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(t <= 0) or np.any(np.diff(t) >= 0):
        raise SymvarError("t grid must be positive and strictly decreasing")
    ratios = C.distance(a[None, :] + t[:, None] * v[None, :]) / t
    est = float(ratios.min())
    return ConeEstimate(est, est >= threshold, threshold, t, ratios)
