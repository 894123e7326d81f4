"""Finite metric space generators and the JSON instance format.

Instance file::

    {
      "metric": {"generator": "path", "n": 5}        # or "distance": [[...]] / "points": [[...]]
      "permutations": [[1, 0, 2, 3, 4]],             # 0-based forward maps
      "proxy": [2, 2, 2, 3, 4],                      # optional
      "f": [4, 1, 0, 1, 4],                          # "inf" allowed
      "bifunction": [[...]],                         # optional
      "T": [[...], ...]                              # optional, Caristi map
    }

Generators: ``path`` (``n``), ``grid`` (``rows``, ``cols``; Manhattan),
``random`` (``n``, ``seed``; random weights repaired to shortest paths),
``cloud`` (``group``, ``n_base``, ``seed``; see :func:`symmetric_cloud`).
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import shortest_path

from symvar.errors import ConfigParse
from symvar.group import coordinate_orbits, named_group
from symvar.variational import Bifunction, FiniteMetricSpace


def path_metric(n):
    i = np.arange(n)
    return FiniteMetricSpace(np.abs(i[:, None] - i[None, :]))


def grid_metric(rows, cols, transpose_action=False):
    """Manhattan metric on a grid; optionally with the transpose action (rows == cols)."""
    r, c = np.divmod(np.arange(rows * cols), cols)
    d = np.abs(r[:, None] - r[None, :]) + np.abs(c[:, None] - c[None, :])
    perms = []
    if transpose_action:
        if rows != cols:
            raise ConfigParse("transpose action needs a square grid")
        perms.append(c * cols + r)
    return FiniteMetricSpace(d, perms)


def random_repaired_metric(n, rng, perms=()):
    """Random positive weights made invariant by orbit averaging, then closed
    under shortest paths (which repairs the triangle inequality)."""
    w = rng.uniform(1.0, 10.0, size=(n, n))
    w = 0.5 * (w + w.T)
    if perms:
        G = _close_perms(perms, n)
        w = np.mean([w[np.ix_(p, p)] for p in G], axis=0)
        w = 0.5 * (w + w.T)
    np.fill_diagonal(w, 0.0)
    d = shortest_path(w, method="FW", directed=False)
    return FiniteMetricSpace(d, list(perms))


def _close_perms(perms, n):
    seen = {tuple(range(n))}
    frontier = [np.arange(n)]
    gens = [np.asarray(p) for p in perms]
    while frontier:
        nxt = []
        for q in frontier:
            for p in gens:
                r = p[q]
                if tuple(r) not in seen:
                    seen.add(tuple(r))
                    nxt.append(r)
        frontier = nxt
    return [np.array(t) for t in sorted(seen)]


def _sorted_distances(X):
    """Euclidean distances summed over sorted squared differences, so that a
    coordinate permutation of both arguments yields bit-identical values."""
    diff2 = (X[:, None, :] - X[None, :, :]) ** 2
    return np.sqrt(np.sort(diff2, axis=-1).sum(axis=-1))


@dataclass
class SymmetricCloud:
    space: FiniteMetricSpace
    points: np.ndarray
    orbit_id: np.ndarray
    group_name: str


def symmetric_cloud(rng, group="swap", n_base=20, dim=3):
    """Random orbit-closed point cloud in R^dim plus every orbit's barycenter.

    The barycenter of each orbit is added as an invariant point and serves
    as the designated proxy of all orbit members.  Since the norm is convex
    and the action isometric, ``d(proxy(x), a) <= d(x, a)`` for every
    invariant ``a``, which is the finite stand-in for convexity w.r.t. G.
    """
    G = named_group(group, dim)
    base = rng.normal(size=(n_base, dim))
    pts, orbit_id, proxy = [], [], []
    perm_maps = [dict() for _ in range(G.order)]
    for o, x in enumerate(base):
        images = G.orbit(x)
        uniq = []
        for y in images:
            if not any(np.array_equal(y, u) for u in uniq):
                uniq.append(y)
        start = len(pts)
        # coordinate-orbit means: equals the orbit average and is exactly invariant
        bar = _exact_symmetrize(x, G)
        if len(uniq) == 1:
            uniq = [bar]  # x is already invariant; it is its own proxy
        pts.extend(uniq)
        bar_idx = start + len(uniq)
        if len(uniq) == 1:
            bar_idx = start
            orbit_id.append(o)
            proxy.append(start)
        else:
            pts.append(bar)
            orbit_id.extend([o] * (len(uniq) + 1))
            proxy.extend([bar_idx] * (len(uniq) + 1))
        for k in range(G.order):
            for i, y in enumerate(uniq):
                gy = G.act(k, y)
                j = next(t for t, u in enumerate(uniq) if np.array_equal(u, gy))
                perm_maps[k][start + i] = start + j
            perm_maps[k][bar_idx] = bar_idx
    pts = np.array(pts)
    n = len(pts)
    perms = [np.array([pm[i] for i in range(n)]) for pm in perm_maps]
    perms = [p for p in perms if not np.array_equal(p, np.arange(n))]
    M = FiniteMetricSpace(_sorted_distances(pts), perms, proxy=np.array(proxy))
    return SymmetricCloud(M, pts, np.array(orbit_id), group)


def _exact_symmetrize(v, G):
    out = v.copy()
    for orb in coordinate_orbits(G.perms):
        out[orb] = out[orb].mean()
    return out


def invariant_objective(cloud: SymmetricCloud, rng, inf_fraction=0.1):
    """Random orbit-constant objective with ``f(proxy(x)) <= f(x)``.

    A fraction of non-barycenter orbits is set to +inf to exercise the
    effective domain.
    """
    M = cloud.space
    f = np.empty(M.n)
    n_orb = int(cloud.orbit_id.max()) + 1
    base = rng.uniform(0.0, 5.0, size=n_orb)
    lift = rng.uniform(0.0, 2.0, size=n_orb)
    dead = rng.random(n_orb) < inf_fraction
    for i in range(M.n):
        o = cloud.orbit_id[i]
        if M.invariant_mask[i] and M.proxy[i] == i:
            f[i] = base[o]
        else:
            f[i] = np.inf if dead[o] else base[o] + lift[o]
    return f


def potential_bifunction(M: FiniteMetricSpace, phi, scale=1.0, mu=0.0):
    """``F[x, y] = scale (phi(y) - phi(x)) + mu d(x, y)``: satisfies every axiom
    for ``mu >= 0`` and invariant ``phi``."""
    phi = np.asarray(phi, dtype=float)
    table = scale * (phi[None, :] - phi[:, None]) + mu * M.dist
    np.fill_diagonal(table, 0.0)
    return Bifunction(table, M)


def takahashi_scale(M: FiniteMetricSpace, phi, mu=0.0):
    """Smallest potential scale making every invariant non-minimizer have an
    invariant descent step ``F + d <= 0`` toward any lower invariant point."""
    inv = M.invariant_indices
    p = phi[inv]
    gap = p[:, None] - p[None, :]
    mask = gap > 0
    if not np.any(mask):
        return 1.0
    ratio = (1.0 + mu) * M.dist[np.ix_(inv, inv)][mask] / gap[mask]
    return float(ratio.max()) * 1.0001


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------


def _parse_floats(values):
    out = []
    for v in values:
        if v is None or (isinstance(v, str) and v.lower() in ("inf", "+inf", "infinity")):
            out.append(np.inf)
        else:
            out.append(float(v))
    return np.array(out)


@dataclass
class Instance:
    space: FiniteMetricSpace
    f: np.ndarray | None = None
    bifunction: Bifunction | None = None
    T: list | None = None
    raw: dict | None = None


def build_space(spec):
    metric = spec.get("metric")
    perms = [np.asarray(p, dtype=int) for p in spec.get("permutations", [])]
    proxy = spec.get("proxy")
    if metric is None and "distance" in spec:
        metric = {"distance": spec["distance"]}
    if metric is None:
        raise ConfigParse("instance needs 'metric' or 'distance'")
    if "distance" in metric:
        return FiniteMetricSpace(np.array(metric["distance"], dtype=float), perms, proxy=proxy)
    if "points" in metric:
        from symvar.group import vector_norm

        X = np.array(metric["points"], dtype=float)
        dist = vector_norm(X[:, None, :] - X[None, :, :], metric.get("norm", "l2"))
        return FiniteMetricSpace(dist, perms, proxy=proxy)
    gen = metric.get("generator")
    if gen == "path":
        M = path_metric(int(metric["n"]))
    elif gen == "grid":
        M = grid_metric(int(metric["rows"]), int(metric["cols"]), bool(metric.get("transpose", False)))
    elif gen == "random":
        rng = np.random.default_rng(int(metric.get("seed", 0)))
        M = random_repaired_metric(int(metric["n"]), rng, perms)
    elif gen == "cloud":
        rng = np.random.default_rng(int(metric.get("seed", 0)))
        return symmetric_cloud(rng, metric.get("group", "swap"), int(metric.get("n_base", 10)), int(metric.get("dim", 3))).space
    else:
        raise ConfigParse(f"unknown metric generator {gen!r}")
    if perms and gen != "random":
        M = FiniteMetricSpace(M.dist, perms, proxy=proxy)
    elif proxy is not None:
        M.set_proxy(proxy)
    return M


def load_instance(source):
    if isinstance(source, (str, Path)):
        try:
            with open(source) as fh:
                spec = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigParse(f"cannot read instance {source}: {exc}") from exc
    else:
        spec = dict(source)
    M = build_space(spec)
    f = _parse_floats(spec["f"]) if "f" in spec else None
    F = Bifunction(np.array(spec["bifunction"], dtype=float), M) if "bifunction" in spec else None
    T = spec.get("T")
    return Instance(M, f, F, T, spec)
