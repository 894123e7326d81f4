"""Finite isometry groups acting on R^n and the orbit-averaging operator.

Elements are stored as matrices.  When every element is a permutation matrix
the group additionally keeps gather indices, ``(g x)[i] = x[perm[i]]``, so
actions on large batches never touch a dense matrix.
"""

import itertools
import json
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from symvar.errors import (
    DimensionMismatch,
    MissingIdentity,
    NotClosed,
    NotIsometry,
    SymvarError,
)

NORMS = ("l1", "l2", "linf")

ALGEBRAIC_TOL = 1e-12
SAMPLED_TOL = 1e-9


def vector_norm(v, norm="l2"):
    """Norm along the last axis."""
    v = np.asarray(v, dtype=float)
    if norm == "l2":
        return np.sqrt(np.sum(v * v, axis=-1))
    if norm == "l1":
        return np.sum(np.abs(v), axis=-1)
    if norm == "linf":
        return np.max(np.abs(v), axis=-1) if v.shape[-1] else np.zeros(v.shape[:-1])
    raise SymvarError(f"unknown norm tag {norm!r}; expected one of {NORMS}")


class FiniteGroup:
    """A validated finite group of linear isometries with uniform weights.

    Build through :func:`check_group` or :func:`generate_group`; the
    constructor itself does not validate.
    """

    def __init__(self, matrices, norm="l2", perms=None):
        self.norm = norm
        if perms is not None:
            perms = np.asarray(perms, dtype=np.intp)
            perms.setflags(write=False)
        self.perms = perms
        self._matrices = None
        if matrices is not None:
            self._matrices = np.asarray(matrices, dtype=float)
            self._matrices.setflags(write=False)
        elif perms is None:
            raise SymvarError("a group needs matrices or permutations")

    @classmethod
    def from_perms(cls, perms, norm="l2"):
        """Permutation group from gather indices; matrices are built on demand.

        Does not validate: use for actions that are groups by construction
        (e.g. grid symmetries on thousands of nodes).
        """
        return cls(None, norm, perms)

    @property
    def matrices(self):
        if self._matrices is None:
            n = self.perms.shape[1]
            mats = np.zeros((len(self.perms), n, n))
            for k, p in enumerate(self.perms):
                mats[k, np.arange(n), p] = 1.0
            mats.setflags(write=False)
            self._matrices = mats
        return self._matrices

    @property
    def order(self):
        return len(self.perms) if self.perms is not None else self._matrices.shape[0]

    @property
    def dim(self):
        return self.perms.shape[1] if self.perms is not None else self._matrices.shape[1]

    @property
    def weights(self):
        return np.full(self.order, 1.0 / self.order)

    @property
    def is_permutation_group(self):
        return self.perms is not None

    def __len__(self):
        return self.order

    def __repr__(self):
        kind = "permutation" if self.perms is not None else "matrix"
        return f"FiniteGroup(order={self.order}, dim={self.dim}, {kind}, norm={self.norm!r})"

    def act(self, k, x):
        """Apply the k-th element to ``x`` (vector or batch on the last axis)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"vector of dimension {x.shape[-1]} for a group acting on R^{self.dim}")
        if self.perms is not None:
            return x[..., self.perms[k]]
        return x @ self.matrices[k].T

    def orbit(self, x):
        """All images ``g(x)``, stacked on a new axis just before the last."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"vector of dimension {x.shape[-1]} for a group acting on R^{self.dim}")
        if self.perms is not None:
            return x[..., self.perms]
        return np.einsum("gij,...j->...gi", self.matrices, x)

    def fixed_subspace_basis(self):
        """Orthonormal basis (columns) of Fix(G) = {x : g(x) = x for all g}.

        Permutation groups use normalized orbit indicators, which are exact;
        matrix groups fall back to an SVD null space of the stacked ``g - I``.
        """
        n = self.dim
        if self.perms is not None:
            orbits = coordinate_orbits(self.perms)
            basis = np.zeros((n, len(orbits)))
            for c, orb in enumerate(orbits):
                basis[orb, c] = 1.0 / np.sqrt(len(orb))
            return basis
        from scipy.linalg import null_space

        stacked = (self.matrices - np.eye(n)[None]).reshape(-1, n)
        return null_space(stacked, rcond=1e-10)


def coordinate_orbits(perms):
    """Orbits of the coordinate indices under a set of gather permutations."""
    perms = np.asarray(perms)
    n = perms.shape[1]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for p in perms:
        for i in range(n):
            a, b = find(i), find(int(p[i]))
            if a != b:
                parent[max(a, b)] = min(a, b)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [np.array(v, dtype=np.intp) for _, v in sorted(groups.items())]


def _as_matrix(element, dim=None):
    """Coerce one element description into a square matrix.

    Accepted: a square 2-D array; a 1-D array of 0-based images
    ``i -> images[i]``; a dict with ``matrix``, ``images`` (1-based) or
    ``cycles`` (1-based, needs ``dim``).
    """
    if isinstance(element, dict):
        if "matrix" in element:
            return np.asarray(element["matrix"], dtype=float)
        if "images" in element:
            return permutation_matrix(np.asarray(element["images"], dtype=int) - 1)
        if "cycles" in element:
            if dim is None:
                raise SymvarError("cycle notation needs an explicit dimension")
            return permutation_matrix(cycles_to_images(element["cycles"], dim))
        raise SymvarError(f"cannot parse group element {element!r}")
    arr = np.asarray(element)
    if arr.ndim == 1:
        return permutation_matrix(arr.astype(int))
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        return arr.astype(float)
    raise DimensionMismatch(f"group element of shape {arr.shape} is neither a permutation nor a square matrix")


def _infer_dim(elements):
    for e in elements:
        if isinstance(e, dict):
            if "matrix" in e:
                return len(e["matrix"])
            if "images" in e:
                return len(e["images"])
        else:
            return np.asarray(e).shape[0]
    return None


def cycles_to_images(cycles, dim):
    """1-based cycle notation -> 0-based image array ``sigma[i]``."""
    images = np.arange(dim)
    for cyc in cycles:
        cyc = [int(c) - 1 for c in cyc]
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            if not 0 <= a < dim:
                raise DimensionMismatch(f"cycle entry {a + 1} outside 1..{dim}")
            images[a] = b
    return images


def permutation_matrix(images):
    """Matrix moving coordinate i to position images[i]: ``P e_i = e_{images[i]}``."""
    images = np.asarray(images, dtype=int)
    n = len(images)
    if sorted(images.tolist()) != list(range(n)):
        raise SymvarError(f"{images.tolist()} is not a permutation of 0..{n - 1}")
    P = np.zeros((n, n))
    P[images, np.arange(n)] = 1.0
    return P


def _gather_index(P):
    """Gather index of a permutation matrix, or None if P is not one."""
    if not np.all((P == 0.0) | (P == 1.0)):
        return None
    if not (np.all(P.sum(axis=0) == 1.0) and np.all(P.sum(axis=1) == 1.0)):
        return None
    return np.argmax(P, axis=1)


class _Lookup:
    """Tolerant membership lookup for matrices via rounded keys."""

    def __init__(self, mats, tol):
        self.tol = tol
        self.mats = []
        self.table = {}
        for M in mats:
            self.add(M)

    def add(self, M):
        self.table.setdefault(self._key(M), []).append(len(self.mats))
        self.mats.append(M)

    def _key(self, M):
        return (np.round(M, 8) + 0.0).tobytes()

    def find(self, M):
        for k in self.table.get(self._key(M), []):
            if np.max(np.abs(self.mats[k] - M)) <= self.tol:
                return k
        # rounding-boundary fallback
        for delta in (-1e-8, 1e-8):
            for k in self.table.get((np.round(M + delta, 8) + 0.0).tobytes(), []):
                if np.max(np.abs(self.mats[k] - M)) <= self.tol:
                    return k
        return None


def check_group(elements, norm="l2", tol=ALGEBRAIC_TOL, n_samples=64, seed=0, dim=None):
    """Validate a finite set of isometries as a group and return it.

    Checks, in order: uniform dimension, presence of the identity, closure
    under composition, inverses, and that every element preserves the
    declared norm on ``n_samples`` seeded random difference vectors.
    Duplicate elements are collapsed so the uniform weights stay a Haar
    measure.
    """
    if norm not in NORMS:
        raise SymvarError(f"unknown norm tag {norm!r}")
    elements = list(elements)
    if not elements:
        raise SymvarError("a group needs at least one element")

    if dim is None:
        dim = _infer_dim(elements)
    mats = [_as_matrix(e, dim) for e in elements]
    dims = {M.shape for M in mats}
    if len(dims) != 1:
        raise DimensionMismatch(f"group elements have mixed shapes {sorted(dims)}")
    n = mats[0].shape[0]

    if not np.all([np.all(np.isfinite(M)) for M in mats]):
        raise SymvarError("group element with non-finite entries")

    lookup = _Lookup([], tol)
    for M in mats:
        if lookup.find(M) is None:
            lookup.add(M)
    mats = lookup.mats

    I = np.eye(n)
    if lookup.find(I) is None:
        raise MissingIdentity("element list does not contain the identity")

    for a, b in itertools.product(range(len(mats)), repeat=2):
        prod = mats[a] @ mats[b]
        if lookup.find(prod) is None:
            raise NotClosed(f"product of elements {a} and {b} is not in the set")
    for a, M in enumerate(mats):
        if lookup.find(np.linalg.inv(M)) is None:
            raise NotClosed(f"inverse of element {a} is not in the set")

    rng = np.random.default_rng(seed)
    xs = rng.normal(size=(n_samples, n))
    ys = rng.normal(size=(n_samples, n))
    base = vector_norm(xs - ys, norm)
    for a, M in enumerate(mats):
        moved = vector_norm((xs - ys) @ M.T, norm)
        bad = np.abs(moved - base) > tol * (1.0 + base)
        if np.any(bad):
            s = int(np.argmax(bad))
            raise NotIsometry(
                f"element {a} changes the {norm} distance of sample pair {s}: "
                f"{base[s]!r} -> {moved[s]!r}",
            )

    gathers = [_gather_index(M) for M in mats]
    perms = np.array(gathers) if all(g is not None for g in gathers) else None
    return FiniteGroup(np.array(mats), norm=norm, perms=perms)


def generate_group(generators, norm="l2", tol=ALGEBRAIC_TOL, max_order=100_000):
    """Close a set of generators under composition and validate the result."""
    mats = [_as_matrix(g) for g in generators]
    if not mats:
        raise SymvarError("need at least one generator")
    n = mats[0].shape[0]
    lookup = _Lookup([np.eye(n)], tol)
    frontier = [np.eye(n)]
    while frontier:
        nxt = []
        for A in frontier:
            for S in mats:
                B = S @ A
                if lookup.find(B) is None:
                    lookup.add(B)
                    nxt.append(B)
                    if len(lookup.mats) > max_order:
                        raise SymvarError(f"group order exceeds {max_order}")
        frontier = nxt
    return check_group(lookup.mats, norm=norm, tol=tol)


def trivial_group(n, norm="l2"):
    return FiniteGroup(np.eye(n)[None], norm=norm, perms=np.arange(n)[None])


def named_group(name, dim=None, norm="l2"):
    """Small library of groups used throughout the tests and CLI.

    ``trivial``, ``swap`` (coordinates 1 and 2), ``cyclic`` (shift of all
    coordinates), ``symmetric`` (all coordinate permutations) and ``d4-ring``
    (the square's symmetries acting on the 8 boundary cells of a 3x3 grid).
    """
    if name == "trivial":
        return trivial_group(dim or 1, norm)
    if name == "swap":
        dim = dim or 2
        return generate_group([cycles_to_images([[1, 2]], dim)], norm=norm)
    if name == "cyclic":
        dim = dim or 3
        return generate_group([np.roll(np.arange(dim), 1)], norm=norm)
    if name == "symmetric":
        dim = dim or 3
        return check_group([np.array(p) for p in itertools.permutations(range(dim))], norm=norm)
    if name == "d4-ring":
        return d4_ring_group(norm)
    raise SymvarError(f"unknown group name {name!r}")


def d4_ring_group(norm="l2"):
    """The dihedral group of order 8 acting on the 8 non-central cells of a 3x3 grid."""
    grid = np.arange(9).reshape(3, 3)
    ring = [k for k in range(9) if k != 4]
    pos = {cell: i for i, cell in enumerate(ring)}
    images = []
    for op in _square_ops():
        moved = op(grid)
        # cell grid[r, c] lands where moved holds it
        img = np.empty(8, dtype=int)
        for r in range(3):
            for c in range(3):
                if moved[r, c] != 4:
                    img[pos[int(moved[r, c])]] = pos[int(grid[r, c])]
        images.append(img)
    return check_group(images, norm=norm)


def _square_ops():
    return [
        lambda a: a,
        np.rot90,
        lambda a: np.rot90(a, 2),
        lambda a: np.rot90(a, 3),
        lambda a: a.T,
        lambda a: np.rot90(a, 2).T,
        np.flipud,
        np.fliplr,
    ]


def load_group(source):
    """Read a group description (path or already-parsed dict).

    Schema::

        {"dimension": 2, "norm": "l2",
         "elements": [{"cycles": []}, {"cycles": [[1, 2]]}]}

    ``elements`` may be replaced by ``generators`` (closed automatically) or
    by ``named`` (see :func:`named_group`).  Elements accept ``cycles``,
    ``images`` (1-based) or ``matrix``.
    """
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            spec = json.load(fh)
    else:
        spec = dict(source)
    norm = spec.get("norm", "l2")
    dim = spec.get("dimension")
    if "named" in spec:
        return named_group(spec["named"], dim, norm=norm)
    if "generators" in spec:
        return generate_group([_as_matrix(e, dim) for e in spec["generators"]], norm=norm)
    if "elements" in spec:
        return check_group([_as_matrix(e, dim) for e in spec["elements"]], norm=norm)
    raise SymvarError("group file needs one of 'elements', 'generators', 'named'")


def group_to_dict(G):
    out = {"dimension": G.dim, "norm": G.norm, "order": G.order}
    if G.perms is not None:
        out["elements"] = [{"images": (np.argsort(p) + 1).tolist()} for p in G.perms]
    else:
        out["elements"] = [{"matrix": M.tolist()} for M in G.matrices]
    return out


# ---------------------------------------------------------------------------
# operations on points
# ---------------------------------------------------------------------------


def symmetrize(x, G):
    """Orbit average ``sum_g w_g g(x)``; accepts a batch on leading axes."""
    return G.orbit(x).mean(axis=-2)


def is_invariant_point(x, G, tol=ALGEBRAIC_TOL):
    if tol < 0:
        raise SymvarError("tolerance must be non-negative")
    x = np.asarray(x, dtype=float)
    moved = G.orbit(x) - x[..., None, :]
    return bool(np.max(vector_norm(moved, G.norm)) <= tol)


def separation(x, G, tol=0.0):
    """Smallest distance from ``x`` to a distinct orbit mate; ``inf`` if none."""
    x = np.asarray(x, dtype=float)
    dists = vector_norm(G.orbit(x) - x, G.norm)
    moved = dists[dists > tol]
    return float(moved.min()) if moved.size else float("inf")


class ConvexityCheck(NamedTuple):
    holds: bool
    witness: np.ndarray
    slack: float
    """min over samples of ``mean_g phi(g x) - phi(symmetrize(x))``"""


def is_convex_wrt_group(phi: Callable, G: FiniteGroup, samples: Sequence, tol=SAMPLED_TOL):
    """Test ``phi(x_bar) <= mean_g phi(g x)`` at every sample."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if len(samples) < 1:
        raise SymvarError("need at least one sample")
    worst, witness = np.inf, samples[0]
    for x in samples:
        avg = np.mean([phi(gx) for gx in G.orbit(x)])
        slack = avg - phi(symmetrize(x, G))
        if slack < worst:
            worst, witness = slack, x
    return ConvexityCheck(bool(worst >= -tol), witness.copy(), float(worst))
