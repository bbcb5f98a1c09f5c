import math

import numpy as np
import pytest

from rescomp import analysis as AN
from rescomp import calculus as C
from rescomp.errors import AllPairsDegenerate, BoundUnavailable, KernelViolation
from rescomp.linalg import InnerProduct, LinearMap
from rescomp.operators import Ball, Box, NormalCone, ScaledIdentity, Singleton, SubdiffL1, Zero
from rescomp.rng import generator

R2 = 1 / np.sqrt(2)


def box(lo, hi):
    return C.Leaf(NormalCone(Box(np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float)))))


# -- Minty sampling ------------------------------------------------------------

def test_minty_zero_and_scaled_identity():
    s = AN.minty_sample(C.Leaf(Zero(2)), 1.0, 2.0, 50, 1)
    assert np.array_equal(s.x, s.y) and not s.xstar.any()
    s = AN.minty_sample(C.Leaf(ScaledIdentity(3.0, 2)), 0.5, 2.0, 50, 1)
    assert np.max(np.abs(s.xstar - 3.0 * s.x)) <= 1e-14
    assert len(s) == 50 and len(s.points) == 50


def test_minty_normal_cone_box():
    a = box(0.0, 1.0)
    s = AN.minty_sample(a, 1.0, 3.0, 300, 2)
    assert s.x.min() >= 0.0 and s.x.max() <= 1.0
    assert np.max(a.atom.residual(s.x, s.xstar)) == 0.0
    # interior points carry no normal vector
    inner = (s.x[:, 0] > 0) & (s.x[:, 0] < 1)
    assert not s.xstar[inner].any()


@pytest.mark.parametrize("gamma", [0.3, 1.0, 4.0])
def test_minty_exactness(gamma):
    node = C.Cocompose(np.array([[0.6, 0.8]]), 1.0, C.Leaf(SubdiffL1(0.5, 1)))
    s = AN.minty_sample(node, gamma, 3.0, 200, 3)
    assert np.max(np.abs(s.x + gamma * s.xstar - s.y)) <= 1e-12
    assert s.gamma_used == gamma and s.region_radius == 3.0 and s.seed == 3


def test_minty_needs_two_points():
    with pytest.raises(ValueError):
        AN.minty_sample(C.Leaf(Zero(1)), 1.0, 1.0, 1, 0)


# -- modulus -------------------------------------------------------------------

def test_modulus_examples():
    s = AN.minty_sample(C.Leaf(ScaledIdentity(2.0, 2)), 1.0, 3.0, 60, 4)
    assert AN.modulus_estimate(s).beta_hat == pytest.approx(2.0, abs=1e-12)
    s = AN.minty_sample(C.Leaf(Zero(2)), 1.0, 3.0, 60, 4)
    assert AN.modulus_estimate(s).beta_hat == 0.0
    node = C.Compose(R2 * np.eye(1), 1.0, C.Leaf(Zero(1)))
    rep = AN.modulus_estimate(AN.minty_sample(node, 1.0, 3.0, 60, 4))
    assert rep.beta_hat == pytest.approx(1.0, abs=1e-6)
    assert rep.pair_count == 60 * 59 // 2


def test_modulus_degenerate():
    s = AN.minty_sample(C.Leaf(NormalCone(Singleton(np.zeros(2)))), 1.0, 3.0, 30, 5)
    with pytest.raises(AllPairsDegenerate):
        AN.modulus_estimate(s)


def monotone_cases():
    lm = np.array([[0.7, 0.4], [-0.3, 0.6]])
    row = np.array([[0.6, 0.8]])
    return [(lm, C.Leaf(SubdiffL1(1.0, 2))), (lm, box([0, -1], [1, 1])),
            (row, C.Leaf(SubdiffL1(0.5, 1))), (0.5 * row, box(-1, 2))]


@pytest.mark.parametrize("case", range(4))
@pytest.mark.parametrize("cls", [C.Compose, C.Cocompose], ids=["compose", "cocompose"])
def test_monotonicity_preserved(case, cls):
    lm, b = monotone_cases()[case]
    node = cls(lm, 0.9, b)
    s = AN.minty_sample(node, 0.9, 4.0, 142, 6 + case)
    rep = AN.modulus_estimate(s)
    assert rep.pair_count >= 5_000
    assert rep.beta_hat >= -1e-9


@pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
@pytest.mark.parametrize("gamma", [0.3, 1.0, 2.0])
@pytest.mark.parametrize("c", [0.4, 0.7, 1.0])
def test_strong_monotonicity_lower_bound(alpha, gamma, c):
    # a non-scalar L with norm c: the bound holds, equality is not expected
    lm = c * np.array([[1.0, 0.0], [0.0, 0.6]])
    node = C.Compose(lm, gamma, C.Leaf(ScaledIdentity(alpha, 2)))
    beta = (alpha + 1 / gamma) / c ** 2 - 1 / gamma
    rep = AN.modulus_estimate(AN.minty_sample(node, gamma, 3.0, 80, 7))
    assert rep.beta_hat >= beta - 1e-6


def test_weighted_modulus():
    lm = np.array([[2.0, 0.0], [0.0, 0.5]])
    node = C.WeightedCompose(lm, 1.0, C.Leaf(ScaledIdentity(1.0, 2)))
    s = AN.minty_sample(node, 1.0, 3.0, 80, 8)
    rep = AN.modulus_estimate(s, node.inner_product)
    assert rep.beta_hat == pytest.approx(1.0, abs=1e-9)
    assert rep.inner_product is node.inner_product
    assert AN.modulus_estimate(s, InnerProduct.standard(2)).pair_count == rep.pair_count


def test_firm_nonexpansive_margin():
    node = C.Cocompose(np.array([[0.7, 0.4], [-0.3, 0.6]]), 0.8, C.Leaf(SubdiffL1(1.0, 2)))
    assert AN.firm_nonexpansive_margin(node, 0.8, 10_000, 4.0, 9) >= -1e-10


# -- resolvent distances -------------------------------------------------------

def test_d_gamma_delta_examples():
    a = C.Leaf(SubdiffL1(1.0, 2))
    assert AN.d_gamma_delta(a, a, 1.0, 2.0, 100, 1) == 0.0
    d = AN.d_gamma_delta(C.Leaf(Zero(1)), C.Leaf(ScaledIdentity(1.0, 1)), 1.0, 1.0, 2000, 1)
    assert 0.49 <= d <= 0.5


def test_common_map_gaps_identical():
    lm = np.array([[0.7, 0.4], [-0.3, 0.6]])
    b1, b2 = C.Leaf(SubdiffL1(1.0, 2)), box([0, -1], [1, 1])
    x = generator(10).ball(1000, 2, 3.0)
    g = 0.8
    d_plain = C.resolvent(C.Compose(lm, g, b1), g, x) - C.resolvent(C.Compose(lm, g, b2), g, x)
    d_co = C.resolvent(C.Cocompose(lm, g, b1), g, x) - C.resolvent(C.Cocompose(lm, g, b2), g, x)
    assert np.max(np.abs(d_plain - d_co)) <= 1e-12


def test_common_map_gap_domination():
    lm = LinearMap(np.array([[0.7, 0.4], [-0.3, 0.6]]))
    b1, b2 = C.Leaf(SubdiffL1(1.0, 2)), C.Leaf(ScaledIdentity(0.5, 2))
    x = generator(11).ball(1000, 2, 3.0)
    g = 1.3
    lhs = AN.resolvent_gaps(C.Compose(lm, g, b1), C.Compose(lm, g, b2), g, x)
    rhs = AN.resolvent_gaps(b1, b2, g, x @ lm.matrix.T)
    assert np.all(lhs <= lm.norm_estimate * rhs + 1e-12)


def test_hausdorff_identical():
    a = box([0, 0], [1, 1])
    rec = AN.hausdorff_estimate(a, a, 1.0, 1.0, 200, 1)
    assert rec.haus_lower == 0.0 and rec.haus_upper_bound == 0.0
    assert rec.graph_norm == "product" and rec.truncation == "product-ball"


@pytest.mark.parametrize("probe", [0.5, 1.0, 2.0])
def test_hausdorff_sandwich(probe):
    pairs = [(C.Leaf(ScaledIdentity(1.0, 1)), C.Leaf(ScaledIdentity(2.0, 1))),
             (C.Yosida(box(0, 1), 0.3), box(0, 1)),
             (C.Leaf(SubdiffL1(1.0, 2)), C.Leaf(Zero(2)))]
    for a1, a2 in pairs:
        rec = AN.hausdorff_estimate(a1, a2, 1.0, probe, 1000, 2)
        assert rec.haus_lower <= rec.haus_upper_bound + 1e-12


def test_hausdorff_yosida_shrinks():
    lows, ups = [], []
    for g in (1.0, 0.1, 0.01):
        rec = AN.hausdorff_estimate(C.Yosida(box(0, 1), g), box(0, 1), 1.0, 1.0, 1000, 3)
        lows.append(rec.haus_lower)
        ups.append(rec.haus_upper_bound)
    assert lows[0] > lows[1] > lows[2] and ups[0] > ups[1] > ups[2]
    assert ups[-1] < 0.05


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("delta", [0.5, 2.0])
def test_reverse_inequality(gamma, delta):
    a1, a2 = C.Leaf(ScaledIdentity(1.0, 1)), C.Leaf(ScaledIdentity(2.0, 1))
    rho = AN.reverse_rho(a1, gamma, delta)
    d = AN.d_gamma_delta(a1, a2, gamma, delta, 2000, 1)
    rec = AN.hausdorff_estimate(a1, a2, rho, 1.0, 4000, 2)
    assert d <= (2 + gamma) * rec.haus_lower


def test_reverse_rho_reading():
    a = C.TranslateOut(C.Leaf(Zero(1)), np.array([1.0]))  # J_{gamma A} 0 = gamma
    assert AN.reverse_rho(a, 0.5, 1.0) == pytest.approx(max(1.5, 3.0))
    assert AN.reverse_rho(a, 2.0, 1.0) == pytest.approx(3.0)


# -- Fitzpatrick ---------------------------------------------------------------

def test_fitzpatrick_identity_case():
    x, xs = np.array([0.4, -1.0]), np.array([1.2, 0.3])
    rep = AN.fitzpatrick_check(np.eye(2), C.Leaf(ScaledIdentity(1.0, 2)), 1.0, x, xs, 500, 1)
    assert rep.f_exact == pytest.approx(0.25 * np.sum((x + xs) ** 2))
    assert rep.min_slack_inner >= -1e-8 and rep.min_slack_exact >= -1e-8
    assert rep.f_sampled_lower <= rep.f_exact + 1e-12


def test_fitzpatrick_origin():
    rep = AN.fitzpatrick_check(np.diag([1.0, 0.5]), C.Leaf(SubdiffL1(1.0, 2)), 0.7,
                               np.zeros(2), np.zeros(2), 500, 2)
    assert rep.inner_at_zero == 0.0 and rep.f_sampled_lower >= 0.0
    assert rep.min_slack_inner >= -1e-8


def test_fitzpatrick_kernel_violation():
    with pytest.raises(KernelViolation):
        AN.fitzpatrick_check(np.diag([1.0, 0.5]), C.Leaf(Zero(2)), 1.0, np.array([0.0, 1.0]),
                             np.zeros(2), 10, 0)


def test_fitzpatrick_linear_closed_form():
    m = np.array([[2.0, 1.0], [-1.0, 1.0]])
    u = generator(3).ball(200, 2, 2.0)
    us = generator(4).ball(200, 2, 2.0)
    f = AN.fitzpatrick_linear(m, u, us)
    # F >= <u, u*> everywhere
    assert np.all(f >= np.sum(u * us, axis=1) - 1e-12)
    # equality on the graph
    assert np.allclose(AN.fitzpatrick_linear(m, u, u @ m.T), np.sum(u * (u @ m.T), axis=1))


def test_resolvent_average_fitzpatrick():
    gap, c = AN.average_fitzpatrick_gap([0.3, 0.7], [0.5, 3.0], 0.8, 1000, 5)
    s = 0.3 / (1 + 0.8 * 0.5) + 0.7 / (1 + 0.8 * 3.0)
    assert c == pytest.approx(1 / s - 1)
    assert gap >= -1e-8


# -- sweeps --------------------------------------------------------------------

def cor515(**kw):
    return AN.SweepSpec("Cor515", [1.0, 0.1, 0.01, 0.001], rho=1.0, delta=2.0, n=300, a=box(0, 1), **kw)


def test_cor515_sweep():
    rep = AN.gamma_sweep(cor515())
    d = [r.d_gamma_delta for r in rep.rows]
    assert all(b < a for a, b in zip(d, d[1:])) and d[-1] <= 0.05
    # exact gap 2g/(1+g) at x = -2; sampled values are below it
    for r in rep.rows:
        assert r.d_gamma_delta <= 2 * r.gamma / (1 + r.gamma) + 1e-12
        assert r.haus_lower <= r.haus_upper_bound + 1e-12


def test_prop510_sweeps():
    lm = LinearMap(0.9 * np.eye(2))
    l1 = C.Leaf(SubdiffL1(1.0, 2))
    a = AN.gamma_sweep(AN.SweepSpec("Prop510a", [1.0, 0.1, 0.01, 0.001], lmap=lm, b=l1,
                                    limit=C.Leaf(Zero(2)), n=300))
    assert a.rows[-1].d_gamma_delta <= 0.02
    b = AN.gamma_sweep(AN.SweepSpec("Prop510b", [0.1, 1.0, 10.0, 100.0], lmap=lm, b=l1, mode="co",
                                    limit=C.Leaf(NormalCone(Singleton(np.zeros(2)))), n=300))
    assert b.rows[-1].d_gamma_delta <= 0.02


def test_prop70_constant_data():
    spec = AN.SweepSpec("Prop70", [0.0, 0.5, 1.0], lmap=LinearMap(np.array([[0.7, 0.4], [-0.3, 0.6]])),
                        b=C.Leaf(SubdiffL1(1.0, 2)), n=200)
    assert all(r.d_gamma_delta == 0.0 for r in AN.gamma_sweep(spec).rows)


def test_prop74_bound():
    q = LinearMap(0.8 * np.array([[R2, R2]]))
    spec = AN.SweepSpec("Prop74", [0.5, 0.2, 0.05, 0.01], lmap=q,
                        b=C.Leaf(NormalCone(Ball(np.array([0.3]), 0.5))), n=300)
    for r in AN.gamma_sweep(spec).rows:
        assert math.isfinite(r.bound) and r.d_gamma_delta <= r.bound + 1e-6


def test_prop74_explicit_range_bound():
    row = LinearMap(np.array([[0.6, 0.8]]))
    spec = AN.SweepSpec("Prop74", [0.5, 0.1, 0.01], lmap=row, b=C.Leaf(SubdiffL1(0.7, 1)), eta=0.7, n=300)
    for r in AN.gamma_sweep(spec).rows:
        assert r.d_gamma_delta <= r.bound + 1e-6


def test_prop74_bound_unavailable():
    spec = AN.SweepSpec("Prop74", [0.5], lmap=LinearMap(np.array([[0.6, 0.8]])),
                        b=C.Leaf(SubdiffL1(0.7, 1)), s_map=np.zeros((1, 2)), n=20)
    with pytest.raises(BoundUnavailable):
        AN.gamma_sweep(spec)


def test_p74_bound_formula():
    assert AN.p74_bound(1.0, 1.0, 1.0, 1.0) == math.inf
    g, rho, dp, eta = 0.2, 1.0, 2.5, 3.0
    w = 2 * rho + dp
    expected = math.sqrt(g * g / (4 * (1 - g) ** 2) * w * w + g / (4 * (1 - g)) * eta ** 2) + g / (2 * (1 - g)) * w
    assert AN.p74_bound(g, rho, dp, eta) == pytest.approx(expected, rel=1e-15)


def test_sweep_grid_validation():
    with pytest.raises(ValueError):
        AN.gamma_sweep(AN.SweepSpec("Cor515", [1.0, 0.1, 0.5], a=box(0, 1)))
    with pytest.raises(ValueError):
        AN.gamma_sweep(AN.SweepSpec("Cor515", [], a=box(0, 1)))
    with pytest.raises(ValueError):
        AN.gamma_sweep(AN.SweepSpec("Nope", [1.0], a=box(0, 1)))


def test_sweep_deterministic_across_threads():
    a = AN.gamma_sweep(cor515(seed=5)).to_csv()
    b = AN.gamma_sweep(cor515(seed=5)).to_csv()
    c = AN.gamma_sweep(cor515(seed=5), threads=3).to_csv()
    assert a == b == c
    assert AN.gamma_sweep(cor515(seed=6)).to_csv() != a


def test_sweep_csv_and_json():
    rep = AN.gamma_sweep(cor515(), experiment_id="cor515", cfg_hash="abc")
    lines = rep.to_csv().splitlines()
    assert lines[0] == "gamma,delta,rho,d,haus_lower,haus_upper,beta_hat,bound"
    assert len(lines) == 5
    vals = [float(v) for v in lines[2].split(",")]
    assert vals[0] == 0.1 and vals[3] == rep.rows[1].d_gamma_delta
    import json
    obj = json.loads(rep.to_json())
    assert obj["experiment_id"] == "cor515" and len(obj["rows"]) == 4


def test_fnv1a_reference_values():
    assert AN.fnv1a64(b"") == 0xCBF29CE484222325
    assert AN.fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert AN.fnv1a64(b"foobar") == 0x85944171F73967E8


def test_config_hash_ignores_key_order():
    assert AN.config_hash({"a": 1, "b": [1, 2]}) == AN.config_hash({"b": [1, 2], "a": 1})
    assert AN.config_hash({"a": 1}) != AN.config_hash({"a": 2})
