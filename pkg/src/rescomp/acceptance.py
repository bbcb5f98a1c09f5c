"""Executable acceptance criteria.

Each criterion is a function ``seed -> CriterionResult``.  The same code
backs ``rescomp repro`` and the acceptance tests, so a pass printed by one
is a pass in the other.  Results carry a table of measured values which
``write_results`` turns into CSV; nothing time-dependent is written, so two
runs with the same seed give byte-identical trees.
"""
from dataclasses import dataclass, field
import filecmp
import math
import os
import tempfile

import numpy as np

from . import analysis as AN
from . import calculus as C
from .linalg import LinearMap
from .operators import (Ball, Box, NormalCone, ScaledIdentity, Singleton, SubdiffL1, Zero,
                        atom_resolvent)
from .oracle import inclusion_oracle
from .rng import generator, substream_seed

R2 = 1.0 / math.sqrt(2.0)


@dataclass
class CriterionResult:
    cid: int
    title: str
    passed: bool
    detail: str
    columns: tuple = ()
    table: list = field(default_factory=list)

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.cid}: {self.title} -- {self.detail}"


def _box(lo, hi):
    return C.Leaf(NormalCone(Box(np.atleast_1d(np.asarray(lo, float)),
                                 np.atleast_1d(np.asarray(hi, float)))))


def _maxgap(a, b):
    return float(np.max(np.sqrt(np.sum((np.asarray(a) - np.asarray(b)) ** 2, axis=-1))))


# -- 1: closed forms against the oracle ----------------------------------------

def oracle_cases():
    """Twelve ``(name, L, B, gamma)`` cases on spaces of dimension at most two."""
    row = np.array([[R2, R2]])
    rot = 0.8 * np.array([[0.6, -0.8], [0.8, 0.6]])
    col = np.array([[0.6], [0.8]])
    box2 = _box([-1.0, 0.0], [0.5, 1.0])
    return [
        ("id-zero", np.eye(1), C.Leaf(Zero(1)), 1.0),
        ("id-scaled", np.eye(1), C.Leaf(ScaledIdentity(2.0, 1)), 0.5),
        ("halfid-scaled", R2 * np.eye(1), C.Leaf(ScaledIdentity(1.0, 1)), 1.0),
        ("halfid-box", R2 * np.eye(1), _box(0.0, 1.0), 2.0),
        ("row-l1", row, C.Leaf(SubdiffL1(0.5, 1)), 1.0),
        ("row-box", row, _box(-1.0, 0.5), 0.7),
        ("row-scaled", row, C.Leaf(ScaledIdentity(3.0, 1)), 2.0),
        ("id2-l1", np.eye(2), C.Leaf(SubdiffL1(1.0, 2)), 1.0),
        ("halfid2-box", R2 * np.eye(2), box2, 1.5),
        ("halfid2-zero", R2 * np.eye(2), C.Leaf(Zero(2)), 0.3),
        ("rot-l1", rot, C.Leaf(SubdiffL1(0.7, 2)), 1.0),
        ("col-box", col, box2, 1.0),
    ]


def criterion_1(seed=0, probes=20):
    rows = []
    for i, (name, m, b, g) in enumerate(oracle_cases()):
        for kind, cls in (("compose", C.Compose), ("cocompose", C.Cocompose)):
            node = cls(LinearMap(m), g, b)
            pts = generator(substream_seed(seed, i)).ball(probes, node.dim, 3.0)
            closed = C.resolvent(node, g, pts)
            orc = np.array([inclusion_oracle(node, g, x) for x in pts])
            rows.append((name, kind, g, probes, _maxgap(closed, orc)))
    worst = max(r[-1] for r in rows)
    return CriterionResult(1, "resolvent formulas vs inclusion oracle", worst <= 1e-5,
                           f"{len(rows)} nodes x {probes} probes, max gap {worst:.3e} (tol 1e-05)",
                           ("case", "kind", "gamma", "probes", "max_gap"), rows)


# -- 2: algebraic identities ---------------------------------------------------

def identity_suite(seed=0, n=1000):
    """``[(invariant, case, max residual, samples)]`` over a few ``(L, B, gamma)``."""
    lm = LinearMap(np.array([[0.9, 0.3], [-0.2, 0.7]]))
    sm = LinearMap(np.array([[0.5, 1.1], [0.4, -0.6]]))
    cases = [("l1", C.Leaf(SubdiffL1(0.8, 2)), 0.7),
             ("box", _box([-0.5, 0.0], [1.0, 2.0]), 1.3),
             ("scaled", C.Leaf(ScaledIdentity(1.5, 2)), 0.4)]
    out = []
    k = 0
    for cname, b, g in cases:
        def draw():
            nonlocal k
            k += 1
            return generator(substream_seed(seed, k)).ball(n, 2, 4.0)

        x = draw()
        lhs = C.resolvent(C.Compose(lm, g, b), g, x)
        rhs = C.resolvent(C.Inverse(C.Cocompose(lm, 1.0 / g, C.Inverse(b))), g, x)
        out.append(("iii", cname, _maxgap(lhs, rhs), n))
        for rho in (0.5, 2.0):
            x = draw()
            for tag, cls in (("iv", C.Compose), ("vi", C.Cocompose)):
                lhs = C.resolvent(C.ScaleLeft(rho, cls(lm, g, b)), g / rho, x)
                rhs = C.resolvent(cls(lm, g / rho, C.ScaleLeft(rho, b)), g / rho, x)
                out.append((tag, f"{cname}-rho{rho}", _maxgap(lhs, rhs), n))
        x = draw()
        for tag, cls in (("ixa", C.Compose), ("ixb", C.Cocompose)):
            lhs = C.resolvent(cls(sm, g, cls(lm, g, b)), g, x)
            rhs = C.resolvent(cls(lm.compose(sm), g, b), g, x)
            out.append((tag, cname, _maxgap(lhs, rhs), n))
        for rho in (0.5, 2.0):
            x = draw()
            beta = g / (1.0 + rho * g)
            lhs = C.resolvent(C.Compose(lm, g, C.AddScaledId(b, rho)), g, x)
            rhs = C.resolvent(C.AddScaledId(C.Compose(lm, beta, b), rho), g, x)
            out.append(("x", f"{cname}-rho{rho}", _maxgap(lhs, rhs), n))
        x = draw()
        lhs = C.yosida_value(C.Cocompose(lm, g, b), g, x)
        rhs = C.yosida_value(b, g, x @ lm.matrix.T) @ lm.matrix
        out.append(("xii", cname, _maxgap(lhs, rhs), n))
    return out


def criterion_2(seed=0):
    rows = identity_suite(seed)
    worst = max(r[2] for r in rows)
    tags = sorted({r[0] for r in rows})
    return CriterionResult(2, "identity suite", worst <= 1e-9,
                           f"parts {','.join(tags)} on 1000 samples each, max residual {worst:.3e} (tol 1e-09)",
                           ("invariant", "case", "max_residual", "samples"), rows)


# -- 3: monotonicity -----------------------------------------------------------

def criterion_3(seed=0):
    rows = []
    lm = LinearMap(np.array([[0.7, 0.4], [-0.3, 0.6]]))
    assert lm.norm_estimate <= 1.0
    i = 0
    for bname, b in (("l1", C.Leaf(SubdiffL1(1.0, 2))), ("box", _box([0.0, -1.0], [1.0, 1.0]))):
        for kind, cls in (("compose", C.Compose), ("cocompose", C.Cocompose)):
            i += 1
            node = cls(lm, 0.8, b)
            m = AN.firm_nonexpansive_margin(node, 0.8, 10_000, 4.0, substream_seed(seed, i))
            rows.append(("fne", f"{bname}-{kind}", math.nan, m, 10_000))
    fne_ok = all(r[3] >= -1e-10 for r in rows)
    worst = 0.0
    for alpha in (0.5, 1.0, 2.0):
        for gamma in (0.5, 1.0, 2.0):
            for c in (0.5, 0.8, 1.0):
                i += 1
                node = C.Compose(LinearMap(c * np.eye(2)), gamma, C.Leaf(ScaledIdentity(alpha, 2)))
                s = AN.minty_sample(node, gamma, 3.0, 60, substream_seed(seed, i))
                beta_hat = AN.modulus_estimate(s).beta_hat
                beta = (alpha + 1.0 / gamma) / c ** 2 - 1.0 / gamma
                worst = max(worst, abs(beta_hat - beta))
                rows.append(("beta", f"a{alpha}-g{gamma}-c{c}", beta, beta_hat, s.x.shape[0]))
    ok = fne_ok and worst <= 1e-6
    fmin = min(r[3] for r in rows if r[0] == "fne")
    return CriterionResult(3, "monotonicity and strong monotonicity", ok,
                           f"firm-nonexpansive margin {fmin:.3e} (>= -1e-10); "
                           f"|beta_hat - beta| <= {worst:.3e} on 27 grid points (tol 1e-06)",
                           ("check", "case", "formula", "measured", "samples"), rows)


# -- 4: Douglas-Rachford -------------------------------------------------------

def _dr_reflections(a1, a2, x):
    r1 = 2.0 * atom_resolvent(a1, 1.0, x) - x
    return 0.5 * x + 0.5 * (2.0 * atom_resolvent(a2, 1.0, r1) - r1)


def criterion_4(seed=0, n=1000):
    pairs = [("box-id", NormalCone(Box(np.zeros(1), np.ones(1))), ScaledIdentity(1.0, 1)),
             ("point-zero", NormalCone(Singleton(np.zeros(1))), Zero(1))]
    rows = []
    for i, (name, a1, a2) in enumerate(pairs):
        x = generator(substream_seed(seed, i)).ball(n, 1, 5.0)
        node = C.DouglasRachford(C.Leaf(a1), C.Leaf(a2))
        ref = _dr_reflections(a1, a2, x)
        direct = C.resolvent(node, 1.0, x)
        lifted = C.resolvent(C.dr_via_composition(C.Leaf(a1), C.Leaf(a2)), 1.0, x)
        rows.append((name, _maxgap(direct, ref), _maxgap(lifted, ref), n))
    worst = max(max(r[1], r[2]) for r in rows)
    return CriterionResult(4, "Douglas-Rachford resolvent", worst <= 1e-12,
                           f"node and product-space form vs reflections, max gap {worst:.3e} (tol 1e-12)",
                           ("pair", "node_gap", "lifted_gap", "samples"), rows)


# -- 5: Yosida example ---------------------------------------------------------

def yosida_example(gamma=1.0, a=None):
    a = a or C.Leaf(ScaledIdentity(1.0, 1))
    b = C.ScaleLeft(2.0, C.ScaleRight(a, 2.0))
    return C.Cocompose(LinearMap(0.5 * np.eye(a.dim)), gamma / 3.0, b)


def criterion_5(seed=0):
    node = yosida_example(1.0)
    x = np.array([1.0])
    closed = float(C.resolvent(node, 1.0 / 3.0, x)[0])
    orc = float(inclusion_oracle(node, 1.0 / 3.0, x)[0])
    via_yosida = float(C.resolvent(C.Yosida(C.Leaf(ScaledIdentity(1.0, 1)), 1.0), 1.0 / 3.0, x)[0])
    target = 6.0 / 7.0
    e1, e2, e3 = abs(closed - target), abs(orc - target), abs(via_yosida - target)
    ok = e1 <= 1e-10 and e2 <= 1e-6 and e3 <= 1e-10
    return CriterionResult(5, "Yosida cocomposition example", ok,
                           f"|J - 6/7| = {e1:.1e}, oracle {e2:.1e}, Yosida node {e3:.1e}",
                           ("path", "value", "error"),
                           [("cocompose", closed, e1), ("oracle", orc, e2), ("yosida", via_yosida, e3)])


# -- 6: convergence sweeps -----------------------------------------------------

def sweep_specs(seed=0):
    """The four sweeps of the acceptance run, keyed by a short name."""
    l1 = C.Leaf(SubdiffL1(1.0, 2))
    lm = LinearMap(0.9 * np.eye(2))
    q = LinearMap(0.8 * np.array([[R2, R2]]))
    return {
        "cor515": AN.SweepSpec("Cor515", [1.0, 0.1, 0.01, 0.001], rho=1.0, delta=2.0, n=400,
                               seed=substream_seed(seed, 1), a=_box(0.0, 1.0)),
        "prop74": AN.SweepSpec("Prop74", [0.5, 0.25, 0.1, 0.01, 0.001], rho=1.0, n=400,
                               seed=substream_seed(seed, 2), lmap=q,
                               b=C.Leaf(NormalCone(Ball(np.array([0.3]), 0.5)))),
        "prop510a": AN.SweepSpec("Prop510a", [1.0, 0.1, 0.01, 0.001], rho=1.0, n=400,
                                 seed=substream_seed(seed, 3), lmap=lm, b=l1, limit=C.Leaf(Zero(2))),
        "prop510b": AN.SweepSpec("Prop510b", [0.1, 1.0, 10.0, 100.0], rho=1.0, n=400,
                                 seed=substream_seed(seed, 4), lmap=lm, b=l1,
                                 limit=C.Leaf(NormalCone(Singleton(np.zeros(2))))),
    }


def criterion_6(seed=0):
    reports = {k: AN.gamma_sweep(s, experiment_id=k) for k, s in sweep_specs(seed).items()}
    rows = [(k, r.gamma, r.d_gamma_delta, r.haus_lower, r.haus_upper_bound, r.bound)
            for k, rep in reports.items() for r in rep.rows]
    d515 = [r.d_gamma_delta for r in reports["cor515"].rows]
    ok515 = all(b < a for a, b in zip(d515, d515[1:])) and d515[-1] <= 0.05
    ok74 = all(r.d_gamma_delta <= r.bound + 1e-6 for r in reports["prop74"].rows if r.gamma <= 0.5)
    g510a = reports["prop510a"].rows[-1].d_gamma_delta
    g510b = reports["prop510b"].rows[-1].d_gamma_delta
    ok = ok515 and ok74 and g510a <= 0.02 and g510b <= 0.02
    return CriterionResult(6, "convergence sweeps", ok,
                           f"Cor515 decreasing={ok515} final {d515[-1]:.2e}; Prop74 within bound={ok74}; "
                           f"Prop510 extreme gaps {g510a:.2e}, {g510b:.2e} (tol 0.02)",
                           ("sweep", "gamma", "d", "haus_lower", "haus_upper", "bound"), rows)


# -- 7: mixtures ---------------------------------------------------------------

def mixture_terms():
    return [(0.5, np.array([[1.0, 0.5]]), C.Leaf(SubdiffL1(0.6, 1))),
            (1.2, np.array([[0.3, -0.4], [0.8, 0.1]]), _box([-1.0, 0.0], [0.5, 2.0])),
            (0.8, np.eye(2), C.Leaf(ScaledIdentity(2.0, 2)))]


def criterion_7(seed=0, n=1000):
    rows = []
    for i, cls in enumerate((C.Mixture, C.Comixture)):
        node = cls(0.9, mixture_terms())
        x = generator(substream_seed(seed, i)).ball(n, 2, 4.0)
        gap = _maxgap(C.resolvent(node, 0.9, x), C.resolvent(C.lift_mixture(node), 0.9, x))
        rows.append((cls.__name__.lower(), 3, gap, n))
    worst = max(r[2] for r in rows)
    return CriterionResult(7, "mixture vs product-space lifting", worst <= 1e-10,
                           f"3 blocks, max gap {worst:.3e} (tol 1e-10)",
                           ("node", "blocks", "max_gap", "samples"), rows)


# -- 8: chain ------------------------------------------------------------------

def chain_cases():
    box, l1 = _box(0.0, 1.0), C.Leaf(SubdiffL1(1.0, 1))
    return [("p2-box-l1", C.Chain(1.0, [box, l1])),
            ("p2-l1-box", C.Chain(0.6, [l1, box])),
            ("p3-box-l1-box", C.Chain(0.7, [box, l1, box])),
            ("p3-l1-l1-box", C.Chain(1.2, [l1, l1, box]))]


def criterion_8(seed=0, probes=8):
    rows = []
    for i, (name, node) in enumerate(chain_cases()):
        pts = generator(substream_seed(seed, i)).ball(probes, node.dim, 3.0)
        closed = C.resolvent(node, node.gamma, pts)
        orc = np.array([inclusion_oracle(node, node.gamma, x) for x in pts])
        rows.append((name, node.gamma, probes, _maxgap(closed, orc)))
    worst = max(r[-1] for r in rows)
    return CriterionResult(8, "chain recursion vs inclusion oracle", worst <= 1e-5,
                           f"p=2 and p=3, max gap {worst:.3e} (tol 1e-05)",
                           ("case", "gamma", "probes", "max_gap"), rows)


# -- 9: Fitzpatrick ------------------------------------------------------------

def criterion_9(seed=0, n=2000):
    rows = []
    g = generator(substream_seed(seed, 0))
    x, xs = g.ball(1, 2, 2.0)[0], g.ball(1, 2, 2.0)[0]
    r = AN.fitzpatrick_check(np.eye(2), C.Leaf(ScaledIdentity(1.0, 2)), 1.0, x, xs, n,
                             substream_seed(seed, 1))
    rows.append(("identity", r.min_slack_inner, r.min_slack_exact, r.inner_at_zero, r.samples))
    r0 = AN.fitzpatrick_check(np.array([[1.0, 0.0], [0.0, 0.5]]), C.Leaf(SubdiffL1(1.0, 2)), 0.7,
                              np.zeros(2), np.zeros(2), n, substream_seed(seed, 2))
    rows.append(("origin", r0.min_slack_inner, math.nan, r0.inner_at_zero, r0.samples))
    # x in ker(Id - L^T L) with L != Id: only the first axis is fixed
    rk = AN.fitzpatrick_check(np.array([[1.0, 0.0], [0.0, 0.5]]), C.Leaf(SubdiffL1(0.5, 2)), 1.3,
                              np.array([1.5, 0.0]), g.ball(1, 2, 2.0)[0], n, substream_seed(seed, 4))
    rows.append(("kernel", rk.min_slack_inner, math.nan, rk.inner_at_zero, rk.samples))
    rav, c_avg = AN.average_fitzpatrick_gap([0.3, 0.7], [0.5, 3.0], 0.8, n, substream_seed(seed, 3))
    rows.append(("average", rav, math.nan, c_avg, n))
    ok = (r.min_slack_inner >= -1e-8 and r.min_slack_exact >= -1e-8
          and r0.min_slack_inner >= -1e-8 and rk.min_slack_inner >= -1e-8 and r0.inner_at_zero == 0.0 and r0.f_sampled_lower >= 0.0
          and rav >= -1e-8)
    return CriterionResult(9, "Fitzpatrick inequalities", ok,
                           f"slacks {r.min_slack_inner:.2e}/{r.min_slack_exact:.2e} (L=Id, B=Id), "
                           f"{r0.min_slack_inner:.2e} at the origin, {rk.min_slack_inner:.2e} on ker(Id - L^T L), average {rav:.2e} (>= -1e-8)",
                           ("case", "slack_inner", "slack_exact", "aux", "samples"), rows)


# -- 10: determinism -----------------------------------------------------------

def _same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors


def criterion_10(seed=0, reference=None):
    ids = list(range(1, 10))
    with tempfile.TemporaryDirectory() as tmp:
        first = reference
        if first is None:
            first = os.path.join(tmp, "first")
            write_results([CRITERIA[i](seed) for i in ids], first)
        second = os.path.join(tmp, "second")
        write_results([CRITERIA[i](seed) for i in ids], second)
        same = _same_tree(first, second)
        nfiles = len(os.listdir(second))
    return CriterionResult(10, "determinism", same,
                           f"two runs of criteria 1-9 give {'identical' if same else 'different'} trees "
                           f"({nfiles} files)", ("identical",), [(same,)])


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_results(results, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for r in results:
        path = os.path.join(out_dir, f"criterion_{r.cid:02d}.csv")
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(r.columns) + "\n")
            for row in r.table:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        files.append(path)
    with open(os.path.join(out_dir, "summary.txt"), "w", newline="\n") as fh:
        for r in results:
            fh.write(r.line() + "\n")
    return files


def run_criteria(ids, seed=0, out_dir=None):
    """Run the given criteria in order; criterion 10 reuses the tree just written."""
    results = [CRITERIA[i](seed) for i in ids if i != 10]
    if out_dir is not None:
        write_results(results, out_dir)
    if 10 in ids:
        ref = out_dir if out_dir is not None and ids[:9] == list(range(1, 10)) else None
        results.append(criterion_10(seed, reference=ref))
        if out_dir is not None:
            write_results(results, out_dir)
    return results
