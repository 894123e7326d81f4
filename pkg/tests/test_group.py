import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from symvar.errors import DimensionMismatch, MissingIdentity, NotClosed, NotIsometry
from symvar.group import (
    FiniteGroup,
    check_group,
    coordinate_orbits,
    cycles_to_images,
    generate_group,
    group_to_dict,
    is_convex_wrt_group,
    is_invariant_point,
    load_group,
    named_group,
    separation,
    symmetrize,
    vector_norm,
)

SWAP = named_group("swap", 2)
C3 = named_group("cyclic", 3)
D4 = named_group("d4-ring")


def test_swap_is_valid_group_of_order_two():
    G = check_group([np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])])
    assert G.order == 2
    assert np.allclose(G.weights, 0.5)


def test_swap_alone_misses_identity():
    with pytest.raises(MissingIdentity):
        check_group([np.array([[0.0, 1.0], [1.0, 0.0]])])


def test_identity_and_three_cycle_not_closed():
    with pytest.raises(NotClosed):
        check_group([np.eye(3), np.roll(np.eye(3), 1, axis=0)])


def test_non_isometry_rejected_for_l1():
    # rotation by 45 degrees is an l2 isometry but not an l1 one; the group it
    # generates is closed, so only the isometry check can catch it
    c = np.cos(np.pi / 4)
    R = np.array([[c, -c], [c, c]])
    elements = [np.linalg.matrix_power(R, k) for k in range(8)]
    assert check_group(elements, norm="l2").order == 8
    with pytest.raises(NotIsometry):
        check_group(elements, norm="l1")


def test_symmetrize_examples():
    assert np.allclose(symmetrize([2.0, 0.0], SWAP), [1.0, 1.0])
    assert np.allclose(symmetrize([1.0, 1.0], SWAP), [1.0, 1.0])
    assert np.allclose(symmetrize([1.0, 2.0, 3.0], C3), [2.0, 2.0, 2.0])


def test_symmetrize_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        symmetrize([1.0, 2.0, 3.0], SWAP)


def test_invariance_examples():
    assert is_invariant_point([1.0, 1.0], SWAP)
    assert not is_invariant_point([2.0, 0.0], SWAP)
    assert is_invariant_point([3.0, -7.0, 1.0], named_group("trivial", 3))


def test_separation_examples():
    assert separation([2.0, 0.0], SWAP) == pytest.approx(2 * np.sqrt(2), abs=1e-15)
    assert separation([1.0, 1.0], SWAP) == float("inf")
    # oracle: enumerate both rotations of (1,0,0)
    rots = [np.roll([1.0, 0.0, 0.0], k) for k in (1, 2)]
    assert separation([1.0, 0.0, 0.0], C3) == pytest.approx(min(np.linalg.norm(r - [1, 0, 0]) for r in rots))


def test_convexity_examples():
    X = np.random.default_rng(0).normal(size=(50, 2))
    assert is_convex_wrt_group(lambda x: np.linalg.norm(x), SWAP, X).holds
    res = is_convex_wrt_group(lambda x: -np.dot(x, x), SWAP, [[2.0, 0.0]])
    assert not res.holds
    assert np.array_equal(res.witness, [2.0, 0.0])
    assert res.slack == pytest.approx(-2.0)
    affine = is_convex_wrt_group(lambda x: x[0] + x[1] + 3.0, SWAP, X)
    assert affine.holds and abs(affine.slack) < 1e-12


def test_group_orders():
    assert D4.order == 8 and D4.dim == 8
    assert named_group("symmetric", 4).order == 24
    assert generate_group([cycles_to_images([[1, 2, 3]], 3)]).order == 3


def test_d4_ring_acts_like_square_symmetries():
    # each element must map corners to corners and edges to edges of the 3x3 ring
    ring = [0, 1, 2, 3, 5, 6, 7, 8]
    corners = {i for i, c in enumerate(ring) if c in (0, 2, 6, 8)}
    for p in D4.perms:
        assert {int(p[i]) for i in corners} == corners


def test_coordinate_orbits():
    assert [o.tolist() for o in coordinate_orbits(SWAP.perms)] == [[0, 1]]
    assert [o.tolist() for o in coordinate_orbits(named_group("swap", 3).perms)] == [[0, 1], [2]]


def test_fixed_subspace_basis_orthonormal_and_invariant():
    for G in (SWAP, C3, D4, named_group("swap", 4)):
        B = G.fixed_subspace_basis()
        assert np.allclose(B.T @ B, np.eye(B.shape[1]))
        for k in range(G.order):
            assert np.allclose(G.act(k, B.T), B.T)


def test_matrix_group_fixed_subspace():
    c, s = np.cos(2 * np.pi / 3), np.sin(2 * np.pi / 3)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    G = generate_group([R])
    assert G.perms is None and G.order == 3
    B = G.fixed_subspace_basis()
    assert B.shape == (3, 1) and np.allclose(np.abs(B[:, 0]), [0, 0, 1])


def test_load_group_roundtrip(tmp_path):
    spec = {"dimension": 3, "elements": [{"cycles": []}, {"cycles": [[1, 2, 3]]}, {"cycles": [[1, 3, 2]]}]}
    G = load_group(spec)
    assert G.order == 3
    again = load_group(group_to_dict(G))
    assert {tuple(p) for p in again.perms} == {tuple(p) for p in G.perms}
    path = tmp_path / "g.json"
    path.write_text('{"named": "swap"}')
    assert load_group(path).order == 2


def test_from_perms_builds_matrices_lazily():
    G = FiniteGroup.from_perms([[0, 1, 2], [1, 2, 0], [2, 0, 1]])
    x = np.array([1.0, 2.0, 3.0])
    for k in range(3):
        assert np.allclose(G.matrices[k] @ x, G.act(k, x))


vectors2 = arrays(np.float64, 2, elements=st.floats(-1e3, 1e3))
vectors3 = arrays(np.float64, 3, elements=st.floats(-1e3, 1e3))
vectors8 = arrays(np.float64, 8, elements=st.floats(-1e3, 1e3))


@pytest.mark.parametrize("G,strategy", [(SWAP, vectors2), (C3, vectors3), (D4, vectors8)])
def test_symmetrization_algebra_properties(G, strategy):
    @given(strategy, strategy, st.floats(-10, 10), st.floats(-10, 10))
    def check(x, y, a, b):
        xb = symmetrize(x, G)
        scale = 1.0 + np.abs(x).max() + np.abs(y).max()
        assert np.abs(symmetrize(xb, G) - xb).max() <= 1e-12 * scale
        lin = symmetrize(a * x + b * y, G) - (a * xb + b * symmetrize(y, G))
        assert np.abs(lin).max() <= 1e-12 * scale * (1 + abs(a) + abs(b))
        for k in range(G.order):
            assert np.abs(symmetrize(G.act(k, x), G) - xb).max() <= 1e-12 * scale
        for norm in ("l1", "l2", "linf"):
            assert vector_norm(xb, norm) <= vector_norm(x, norm) * (1 + 1e-12) + 1e-300
        assert is_invariant_point(xb, G, tol=1e-12 * scale)

    check()


@given(vectors3)
def test_separation_infinite_iff_invariant(x):
    s = separation(x, C3)
    if is_invariant_point(x, C3, tol=0.0):
        assert s == float("inf")
    else:
        assert 0 < s < float("inf")


def test_symmetric_group_averages_to_mean():
    G = named_group("symmetric", 4)
    x = np.array([1.0, 5.0, -2.0, 4.0])
    assert np.allclose(symmetrize(x, G), np.full(4, x.mean()))
    assert len(set(itertools.permutations(range(4)))) == G.order
