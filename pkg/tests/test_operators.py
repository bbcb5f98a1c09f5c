import numpy as np
import pytest
from hypothesis import given, strategies as st

from rescomp import calculus as C
from rescomp.errors import NotPSD
from rescomp.operators import (AffineSubspace, Ball, Box, ConstantShift, Halfspace, LinearMonotone,
                               NormalCone, ScaledIdentity, Singleton, SubdiffL1, Zero, atom_from_json,
                               atom_resolvent, atom_to_json, inclusion_residual, project)
from rescomp.rng import generator


def atoms():
    return [
        Zero(2),
        ScaledIdentity(1.7, 2),
        LinearMonotone(np.array([[1.0, 2.0], [-2.0, 0.5]])),
        NormalCone(Box(np.array([0.0, -1.0]), np.array([1.0, 1.0]))),
        NormalCone(Ball(np.array([0.5, 0.0]), 1.5)),
        NormalCone(Halfspace(np.array([1.0, 2.0]), 0.5)),
        NormalCone(AffineSubspace(np.array([[1.0], [1.0]]), np.array([0.0, 1.0]))),
        NormalCone(Singleton(np.array([0.3, -0.2]))),
        SubdiffL1(0.8, 2),
        ConstantShift(np.array([0.5, -1.0]), SubdiffL1(0.3, 2)),
    ]


def test_resolvent_examples():
    assert np.array_equal(atom_resolvent(Zero(2), 3.0, np.array([5.0, -2.0])), [5.0, -2.0])
    box = NormalCone(Box(np.zeros(1), np.ones(1)))
    assert atom_resolvent(box, 1.0, np.array([2.0]))[0] == 1.0
    assert np.allclose(atom_resolvent(SubdiffL1(1.0, 2), 0.5, np.array([2.0, -0.3])), [1.5, 0.0])
    assert atom_resolvent(ScaledIdentity(2.0, 1), 0.5, np.array([4.0]))[0] == pytest.approx(2.0)


def test_projection_examples():
    assert np.allclose(project(Ball(np.zeros(2), 1.0), np.array([3.0, 4.0])), [0.6, 0.8])
    assert np.array_equal(project(Singleton(np.array([1.0, 2.0])), np.array([7.0, 7.0])), [1.0, 2.0])
    assert np.allclose(project(Halfspace(np.array([1.0, 0.0]), 0.0), np.array([2.0, 5.0])), [0.0, 5.0])
    aff = AffineSubspace(np.array([[2.0], [0.0]]), np.array([0.0, 1.0]))
    assert np.allclose(project(aff, np.array([3.0, -4.0])), [3.0, 1.0])


def test_inclusion_residual_examples():
    assert inclusion_residual(ScaledIdentity(2.0, 1), np.array([1.0]), np.array([2.0])) == 0.0
    assert inclusion_residual(Zero(1), np.array([1.0]), np.array([0.5])) > 0
    box = NormalCone(Box(np.zeros(1), np.ones(1)))
    assert inclusion_residual(box, np.array([1.0]), np.array([3.0])) == 0.0
    assert inclusion_residual(box, np.array([1.0]), np.array([-3.0])) > 0
    assert inclusion_residual(box, np.array([1.5]), np.array([0.0])) > 0


def test_linear_monotone_rejects_non_monotone():
    with pytest.raises(NotPSD):
        LinearMonotone(np.array([[1.0, 0.0], [0.0, -0.5]]))
    a = LinearMonotone(np.array([[1.0, 0.0], [0.0, -0.5]]), unchecked=True)
    assert a.dim == 2


def test_box_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        Box(np.array([1.0]), np.array([0.0]))


@pytest.mark.parametrize("atom", atoms(), ids=lambda a: type(a).__name__)
@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
def test_resolvent_lands_on_graph(atom, gamma):
    x = generator(1).ball(1000, 2, 5.0)
    p = atom_resolvent(atom, gamma, x)
    assert np.max(atom.residual(p, (x - p) / gamma)) <= 1e-8


@pytest.mark.parametrize("atom", atoms(), ids=lambda a: type(a).__name__)
def test_firmly_nonexpansive(atom):
    g = generator(2)
    x, y = g.ball(1000, 2, 5.0), g.ball(1000, 2, 5.0)
    jx, jy = atom_resolvent(atom, 0.7, x), atom_resolvent(atom, 0.7, y)
    d = jx - jy
    assert np.min(np.sum(d * (x - y), axis=1) - np.sum(d * d, axis=1)) >= -1e-10


@pytest.mark.parametrize("atom", atoms(), ids=lambda a: type(a).__name__)
def test_moreau_split_at_gamma_one(atom):
    x = generator(3).ball(500, 2, 4.0)
    inv = C.resolvent(C.Inverse(C.Leaf(atom)), 1.0, x)
    assert np.max(np.abs(x - atom_resolvent(atom, 1.0, x) - inv)) <= 1e-12


@pytest.mark.parametrize("cset", [a.cset for a in atoms() if isinstance(a, NormalCone)],
                         ids=lambda c: type(c).__name__)
def test_projection_idempotent(cset):
    x = generator(4).ball(500, 2, 6.0)
    p = project(cset, x)
    assert np.max(np.abs(project(cset, p) - p)) <= 1e-12


@pytest.mark.parametrize("atom", atoms(), ids=lambda a: type(a).__name__)
def test_atom_json_round_trip(atom):
    back = atom_from_json(atom_to_json(atom))
    x = generator(5).ball(20, 2, 3.0)
    assert np.array_equal(atom_resolvent(back, 0.9, x), atom_resolvent(atom, 0.9, x))


@given(st.floats(0.01, 10), st.floats(-50, 50), st.floats(0.01, 5))
def test_soft_threshold_matches_formula(lam, x, gamma):
    p = atom_resolvent(SubdiffL1(lam, 1), gamma, np.array([x]))[0]
    assert p == pytest.approx(np.sign(x) * max(abs(x) - gamma * lam, 0.0), abs=1e-12)
