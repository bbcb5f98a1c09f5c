import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rescomp.errors import DimensionMismatch, NotPSD, NotSymmetric, Singular
from rescomp.linalg import (InnerProduct, LinearMap, apply, apply_adjoint, inverse, jacobi_svd,
                            matrix_from_json, matrix_to_json, operator_norm, pseudo_inverse,
                            solve, sqrt_psd, symmetric_eig, weighted_dot)

# subnormal entries have pseudo-inverses beyond double range; keep them out
entries = st.one_of(st.just(0.0), st.floats(-3, 3).filter(lambda v: abs(v) > 1e-100))


def mats(max_side=5):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side)).flatmap(
        lambda s: arrays(np.float64, s, elements=entries))


def test_apply_examples():
    assert np.array_equal(apply(LinearMap(np.eye(3)), [1, 2, 3]), [1, 2, 3])
    assert np.array_equal(apply(LinearMap(np.zeros((2, 3))), [4, 5, 6]), [0, 0])
    assert np.array_equal(apply(LinearMap(np.array([[1.0, 1], [0, 1]])), [1, 1]), [2, 1])
    with pytest.raises(DimensionMismatch):
        apply(LinearMap(np.eye(2)), [1, 2, 3])


@pytest.mark.parametrize("m, expected", [
    (np.eye(4), 1.0),
    (np.diag([3.0, 1.0]), 3.0),
    (np.array([[0.0, 2.0], [0.0, 0.0]]), 2.0),
])
def test_operator_norm_examples(m, expected):
    assert operator_norm(m) == pytest.approx(expected, rel=1e-12)


def test_solve_examples():
    assert np.allclose(solve(np.eye(2), [3.0, 4.0]), [3, 4])
    assert np.allclose(solve(np.diag([2.0, 4.0]), [2.0, 4.0]), [1, 1])
    assert np.allclose(solve(np.array([[2.0, 1], [1, 3]]), [3.0, 4.0]), [1, 1], atol=1e-14)
    with pytest.raises(Singular):
        solve(np.array([[1.0, 2], [2, 4]]), [1.0, 1.0])


def test_pseudo_inverse_examples():
    assert np.allclose(pseudo_inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    assert np.allclose(pseudo_inverse(np.array([[1.0], [1.0]])), [[0.5, 0.5]])
    z = pseudo_inverse(np.zeros((2, 3)))
    assert z.shape == (3, 2) and not z.any()


def test_sqrt_psd_examples():
    assert np.allclose(sqrt_psd(np.eye(3)), np.eye(3))
    assert np.allclose(sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    s = np.array([[2.0, 1.0], [1.0, 2.0]])
    r = sqrt_psd(s)
    assert np.allclose(r @ r, s, atol=1e-12)
    assert np.allclose(r, r.T)
    with pytest.raises(NotSymmetric):
        sqrt_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotPSD):
        sqrt_psd(np.diag([1.0, -1.0]))


def test_weighted_dot_examples():
    assert weighted_dot(InnerProduct.standard(2), [1, 2], [3, 4]) == 11
    lm = LinearMap(np.array([[2.0, 0.0], [1.0, 1.0]]))
    ip = InnerProduct.weighted(lm)
    x, y = np.array([1.0, -2.0]), np.array([0.5, 3.0])
    assert weighted_dot(ip, x, y) == pytest.approx(float(lm.matrix @ x @ (lm.matrix @ y)))
    zero = InnerProduct.weighted(LinearMap(np.zeros((1, 1))))
    assert weighted_dot(zero, [3.0], [2.0]) == pytest.approx(6.0)


def test_linear_map_flags():
    r = 1 / np.sqrt(2)
    row = LinearMap(np.array([[r, r]]))
    assert row.is_coisometry and not row.is_isometry
    assert row.adjoint().is_isometry
    assert LinearMap(np.array([[1.0, 1.0]])).scaled_coisometry_factor() == pytest.approx(2.0)
    assert LinearMap(np.diag([1.0, 2.0])).scaled_coisometry_factor() is None


def test_matrix_json_round_trip():
    m = np.array([[0.1, -1 / 3], [np.pi, 1e-300]])
    assert np.array_equal(matrix_from_json(matrix_to_json(m)), m)
    with pytest.raises(DimensionMismatch):
        matrix_from_json({"rows": 2, "cols": 2, "data": [1, 2, 3]})


@given(mats(), st.integers(0, 2 ** 32))
def test_adjoint_identity(m, seed):
    rng = np.random.default_rng(seed)
    lm = LinearMap(m)
    x, y = rng.normal(size=m.shape[1]), rng.normal(size=m.shape[0])
    lhs = float(apply(lm, x) @ y)
    rhs = float(x @ apply_adjoint(lm, y))
    assert abs(lhs - rhs) <= 1e-12 * (1 + np.abs(m).sum() * np.abs(x).sum() * np.abs(y).sum())


@given(mats())
def test_operator_norm_matches_numpy(m):
    expected = np.linalg.norm(m, 2)
    got = operator_norm(m)
    assert got == pytest.approx(expected, rel=1e-8, abs=1e-12)
    x = np.ones(m.shape[1])
    assert np.linalg.norm(m @ x) <= got * np.linalg.norm(x) * (1 + 1e-8) + 1e-12


@given(mats())
def test_penrose_identities(m):
    p = pseudo_inverse(m)
    k = 1 + np.linalg.norm(m, 2) * np.linalg.norm(p, 2)
    assert np.max(np.abs(m @ p @ m - m)) <= 1e-9 * (1 + np.abs(m).max()) * k
    assert np.max(np.abs(p @ m @ p - p)) <= 1e-9 * (1 + np.abs(p).max()) * k
    assert np.max(np.abs(m @ p - (m @ p).T)) <= 1e-9 * k
    assert np.max(np.abs(p @ m - (p @ m).T)) <= 1e-9 * k


@given(mats())
def test_singular_values_match_numpy(m):
    u, s, vt = jacobi_svd(m)
    assert np.allclose(np.sort(s)[::-1], np.linalg.svd(m, compute_uv=False)[:len(s)], atol=1e-9)


@given(arrays(np.float64, (4, 4), elements=entries))
def test_symmetric_eig_and_sqrt(a):
    s = a @ a.T
    w, v = symmetric_eig(s)
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(s), atol=1e-9 * (1 + np.abs(s).max()))
    r = sqrt_psd(s)
    assert np.max(np.abs(r @ r - s)) <= 1e-9 * (1 + np.abs(s).max())


@given(arrays(np.float64, (3, 3), elements=entries), st.integers(0, 2 ** 32))
def test_solve_and_inverse(a, seed):
    a = a + 4 * np.eye(3)
    b = np.random.default_rng(seed).normal(size=3)
    if abs(np.linalg.det(a)) < 1e-3:
        return
    x = solve(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-10 * (1 + np.linalg.norm(b))
    assert np.allclose(inverse(a) @ a, np.eye(3), atol=1e-9)


@given(arrays(np.float64, (2, 3), elements=entries), st.integers(0, 2 ** 32))
def test_weighted_dot_positive_definite(m, seed):
    ip = InnerProduct.weighted(LinearMap(m))
    xs = np.random.default_rng(seed).normal(size=(50, 3))
    vals = weighted_dot(ip, xs, xs)
    assert np.all(vals > 0)
    ys = xs[::-1]
    assert np.allclose(weighted_dot(ip, xs, ys), weighted_dot(ip, ys, xs))
