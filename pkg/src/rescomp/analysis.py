"""Sampling-based measurements on operator expressions.

Everything here draws points with the pinned generator of
:mod:`rescomp.rng`, so identical seeds give bit-identical numbers.  All
suprema are sampled and therefore lower estimates; the checks are written
so that sampling can only make them harder to pass.

Graph distances use the product norm ``sqrt(|dx|^2 + |dx*|^2)`` and the
rho-truncation of a graph is its intersection with the product-space ball.
"""
from dataclasses import asdict, dataclass, field
from concurrent.futures import ThreadPoolExecutor
import json
import math

import numpy as np

from . import calculus as C
from .errors import AllPairsDegenerate, BoundUnavailable, KernelViolation
from .linalg import InnerProduct, LinearMap, inverse, operator_norm
from .operators import LinearMonotone, ScaledIdentity
from .oracle import GridSpec, graph_residual, inclusion_oracle  # noqa: F401  (re-export)
from .rng import generator, substream_seed

GRAPH_NORM = "product"
TRUNCATION = "product-ball"


def _rownorm(v):
    return np.sqrt(np.sum(v * v, axis=-1))


# -- graph samples -------------------------------------------------------------

@dataclass
class GraphSample:
    x: np.ndarray
    xstar: np.ndarray
    y: np.ndarray
    gamma_used: float
    region_radius: float
    seed: int

    @property
    def points(self):
        return list(zip(self.x, self.xstar))

    def __len__(self):
        return self.x.shape[0]


def minty_sample(expr, gamma, radius, n, seed, opts=None):
    """Graph points ``(J y, (y - J y)/gamma)`` for ``y`` uniform in ``B(0; radius)``."""
    if n < 2:
        raise ValueError("minty_sample needs n >= 2")
    y = generator(seed).ball(n, expr.dim, radius)
    p = C.resolvent(expr, gamma, y, opts)
    return GraphSample(p, (y - p) / gamma, y, float(gamma), float(radius), int(seed))


# -- monotonicity modulus ------------------------------------------------------

@dataclass
class ModulusReport:
    beta_hat: float
    pair_count: int
    inner_product: InnerProduct = field(repr=False, default=None)


def modulus_estimate(sample, ip=None, eps_pair=None):
    """Smallest ``<dx, dx*> / <dx, dx>`` over all pairs of sampled graph points."""
    x, xs = sample.x, sample.xstar
    n, d = x.shape
    if n < 2:
        raise AllPairsDegenerate("need at least two points")
    ip = ip or InnerProduct.standard(d)
    gram = np.eye(d) if ip.is_standard else ip.gram
    eps = 1e-8 * sample.region_radius if eps_pair is None else eps_pair
    i, j = np.triu_indices(n, k=1)
    dx = x[i] - x[j]
    ds = xs[i] - xs[j]
    gdx = dx @ gram
    num = np.sum(gdx * ds, axis=1)
    den = np.sum(gdx * dx, axis=1)
    ok = np.sqrt(np.maximum(den, 0.0)) > eps
    if not ok.any():
        raise AllPairsDegenerate("every pair is closer than eps_pair")
    return ModulusReport(float(np.min(num[ok] / den[ok])), int(ok.sum()), ip)


def firm_nonexpansive_margin(expr, gamma, n_pairs, radius, seed, opts=None):
    """``min <Jx - Jy, x - y> - |Jx - Jy|^2`` over ``n_pairs`` random pairs."""
    g = generator(seed)
    a = g.ball(n_pairs, expr.dim, radius)
    b = g.ball(n_pairs, expr.dim, radius)
    ja = C.resolvent(expr, gamma, a, opts)
    jb = C.resolvent(expr, gamma, b, opts)
    dj = ja - jb
    return float(np.min(np.sum(dj * (a - b), axis=1) - np.sum(dj * dj, axis=1)))


# -- resolvent distances -------------------------------------------------------

def resolvent_gaps(a1, a2, gamma, x, opts=None):
    return _rownorm(C.resolvent(a1, gamma, x, opts) - C.resolvent(a2, gamma, x, opts))


def d_gamma_delta(a1, a2, gamma, delta, n, seed, opts=None):
    """Sampled ``sup_{|x| <= delta} |J_{gamma A1} x - J_{gamma A2} x|`` (a lower bound)."""
    x = generator(seed).ball(n, a1.dim, delta)
    return float(np.max(resolvent_gaps(a1, a2, gamma, x, opts)))


@dataclass
class MetricRecord:
    gamma: float
    delta: float
    rho: float
    d_gamma_delta: float
    haus_lower: float
    haus_upper_bound: float
    haus_sampled: float = float("nan")
    beta_hat: float = float("nan")
    bound: float = float("nan")
    samples: int = 0
    graph_norm: str = GRAPH_NORM
    truncation: str = TRUNCATION


def _haus_lower(a1, a2, rho, n, seed, opts):
    """Rigorous lower bound on ``haus_rho`` plus a sampled estimate.

    With ``y = x + x*`` the graph of a maximally monotone ``A`` is the graph
    of ``2 J_A - Id`` in the rotated coordinates, so the distance from
    ``(J_1 y, y - J_1 y)`` to ``gra A_2`` lies in ``[g, sqrt(2) g]`` with
    ``g = |J_1 y - J_2 y|``.  Every graph point in the rho-ball has
    ``|y| <= sqrt(2) rho``.
    """
    y = generator(seed).ball(n, a1.dim, math.sqrt(2.0) * rho)
    j1 = C.resolvent(a1, 1.0, y, opts)
    j2 = C.resolvent(a2, 1.0, y, opts)
    gap = _rownorm(j1 - j2)
    in1 = _rownorm(j1) ** 2 + _rownorm(y - j1) ** 2 <= rho * rho
    in2 = _rownorm(j2) ** 2 + _rownorm(y - j2) ** 2 <= rho * rho
    mask = in1 | in2
    if not mask.any():
        return 0.0, 0.0, y
    lower = float(np.max(gap[mask]))
    return lower, math.sqrt(2.0) * lower, y


def hausdorff_estimate(a1, a2, rho, gamma_probe, n, seed, opts=None):
    """``haus_rho`` sandwich: rigorous sampled lower bound and the ``d_{gamma,(1+gamma)rho}`` bound."""
    lower, sampled, y = _haus_lower(a1, a2, rho, n, substream_seed(seed, 0), opts)
    delta = (1.0 + gamma_probe) * rho
    x = generator(substream_seed(seed, 1)).ball(n, a1.dim, delta)
    if gamma_probe == 1.0:
        x = np.vstack([x, y[_rownorm(y) <= delta]])
    d = float(np.max(resolvent_gaps(a1, a2, gamma_probe, x, opts)))
    upper = max(1.0, 1.0 / gamma_probe) * d
    return MetricRecord(float(gamma_probe), delta, float(rho), d, lower, upper,
                        haus_sampled=sampled, samples=n)


def reverse_rho(a1, gamma, delta, opts=None):
    """Radius in the reverse inequality, read as ``max{s, s/gamma}``, ``s = delta + |J 0|``."""
    s = delta + float(np.linalg.norm(C.resolvent(a1, gamma, np.zeros(a1.dim), opts)))
    return max(s, s / gamma)


# -- Fitzpatrick functions -----------------------------------------------------

def fitzpatrick_linear(m, u, ustar):
    """Fitzpatrick function of ``u -> M u`` with ``M`` monotone; ``inf`` off the range."""
    m = np.asarray(m, dtype=float)
    s = 0.5 * (m + m.T)
    w = ustar + u @ m
    from .linalg import pseudo_inverse
    sp = pseudo_inverse(s)
    z = w @ sp.T
    if np.max(np.abs(z @ s.T - w)) > 1e-9 * (1.0 + np.max(np.abs(w))):
        return np.full(w.shape[0], np.inf)
    return 0.25 * np.sum(w * z, axis=1)


def _linear_matrix(expr):
    if isinstance(expr, C.Leaf):
        a = expr.atom
        if isinstance(a, ScaledIdentity):
            return a.alpha * np.eye(a.dim)
        if isinstance(a, LinearMonotone):
            return np.array(a.matrix)
    return None


def _fitz_objective(j, v, u, ustar):
    """``<u, v - j> + <j, u*> - <j, v - j>`` row-wise."""
    r = v - j
    return np.sum(u * r, axis=1) + np.sum(j * ustar, axis=1) - np.sum(j * r, axis=1)


@dataclass
class FitzpatrickReport:
    min_slack_inner: float   # min over samples of obj_B(Ly) - inner_A(y)
    min_slack_exact: float   # min over samples of F_exact - obj_B(Ly)
    f_exact: float
    f_sampled_lower: float
    inner_at_zero: float
    samples: int


def fitzpatrick_check(lmap, b, gamma, x, xstar, n, seed, radius=4.0, tol=1e-10, opts=None):
    """Per-sample check of ``F_{gamma(L <> B)}(x, x*) <= F_{gamma B}(Lx, Lx*)``."""
    lmap = lmap if isinstance(lmap, LinearMap) else LinearMap(lmap)
    m = lmap.matrix
    x = np.asarray(x, dtype=float).reshape(-1)
    xstar = np.asarray(xstar, dtype=float).reshape(-1)
    if lmap.norm_estimate > 1.0 + 1e-12:
        raise ValueError("fitzpatrick_check needs ||L|| <= 1")
    if np.linalg.norm(x - m.T @ (m @ x)) > tol * (1.0 + np.linalg.norm(x)):
        raise KernelViolation("x is not fixed by L^T L")
    node = C.Compose(lmap, gamma, b)
    y = generator(seed).ball(n, lmap.cols, radius)
    y = np.vstack([np.zeros(lmap.cols), y])
    ja = C.resolvent(node, gamma, y, opts)
    inner = _fitz_objective(ja, y, x[None, :], xstar[None, :])
    ly = y @ m.T
    jb = C.resolvent(b, gamma, ly, opts)
    u, ustar = (m @ x)[None, :], (m @ xstar)[None, :]
    outer = _fitz_objective(jb, ly, u, ustar)
    v = generator(substream_seed(seed, 1)).ball(n, lmap.rows, radius)
    jv = C.resolvent(b, gamma, v, opts)
    f_lower = float(np.max(np.concatenate([outer, _fitz_objective(jv, v, u, ustar)])))
    lin = _linear_matrix(b)
    f_exact = float(fitzpatrick_linear(gamma * lin, u, ustar)[0]) if lin is not None else math.nan
    slack_exact = f_exact - float(np.max(outer)) if lin is not None else math.nan
    return FitzpatrickReport(float(np.min(outer - inner)), slack_exact, f_exact, f_lower,
                             float(inner[0]), n + 1)


def average_fitzpatrick_gap(alphas, scales, gamma, n, seed, radius=3.0, opts=None):
    """``min (sum a_k F_{gamma B_k} - F_{gamma rav})`` over samples, ``B_k = c_k Id`` on R^2.

    The averaged operator's scale is read off its resolvent, so the check
    exercises the implementation rather than the algebra alone.
    """
    dim = 2
    node = C.Average(gamma, [(a, C.Leaf(ScaledIdentity(c, dim))) for a, c in zip(alphas, scales)])
    s = float(C.resolvent(node, gamma, np.array([1.0, 0.0]), opts)[0])
    c_avg = 1.0 / s - 1.0
    g = generator(seed)
    u = g.ball(n, dim, radius)
    us = g.ball(n, dim, radius)
    lhs = _rownorm(us + c_avg * u) ** 2 / (4.0 * c_avg)
    rhs = sum(a * _rownorm(us + gamma * c * u) ** 2 / (4.0 * gamma * c)
              for a, c in zip(alphas, scales))
    return float(np.min(rhs - lhs)), c_avg


# -- sweeps --------------------------------------------------------------------

SWEEP_KINDS = ("Prop74", "Prop510a", "Prop510b", "Cor515", "Prop70")


@dataclass
class SweepReport:
    kind: str
    experiment_id: str
    config_hash: str
    rows: list

    COLUMNS = ("gamma", "delta", "rho", "d", "haus_lower", "haus_upper", "beta_hat", "bound")

    def to_csv(self):
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            vals = (r.gamma, r.delta, r.rho, r.d_gamma_delta, r.haus_lower,
                    r.haus_upper_bound, r.beta_hat, r.bound)
            lines.append(",".join(repr(float(v)) for v in vals))
        return "\n".join(lines) + "\n"

    def to_json(self):
        return json.dumps({"kind": self.kind, "experiment_id": self.experiment_id,
                           "config_hash": self.config_hash,
                           "rows": [asdict(r) for r in self.rows]},
                          sort_keys=True, indent=1, allow_nan=True)


def fnv1a64(data):
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg):
    return f"{fnv1a64(canonical_json(cfg).encode('utf-8')):016x}"


@dataclass
class SweepSpec:
    kind: str
    gammas: list
    rho: float = 1.0
    delta: float = None
    n: int = 400
    seed: int = 0
    modulus_n: int = 40
    # operators; which ones are needed depends on the kind
    a: object = None            # Cor515
    lmap: object = None         # Prop74 / Prop510 / Prop70
    b: object = None
    limit: object = None        # Prop510: the declared limit expression
    mode: str = "plain"         # Prop510 / Prop70: "plain" or "co"
    s_map: object = None        # Prop74: S with S L^T invertible
    eta: float = None           # Prop74: declared bound on ran(B o L)
    gamma_fixed: float = 1.0    # Prop70 parameter of the limit
    d_lmap: object = None       # Prop70 perturbations, scaled by t
    d_shift: object = None
    d_gamma: float = 0.0


def _row_pair(spec, t):
    """``(varying, limit, query gamma)`` for one row."""
    k = spec.kind
    if k == "Cor515":
        return C.Yosida(spec.a, t), spec.a, 1.0
    if k == "Prop74":
        return C.Cocompose(spec.lmap, t, spec.b), C.StandardComposition(spec.lmap, spec.b), 1.0
    if k in ("Prop510a", "Prop510b"):
        cls = C.Cocompose if spec.mode == "co" else C.Compose
        return cls(spec.lmap, 1.0, C.ScaleLeft(t, spec.b)), cls(spec.lmap, 1.0, spec.limit), 1.0
    if k == "Prop70":
        cls = C.Cocompose if spec.mode == "co" else C.Compose
        lm = np.array(spec.lmap.matrix)
        if spec.d_lmap is not None:
            lm = lm + t * np.asarray(spec.d_lmap, dtype=float)
        b = spec.b
        if spec.d_shift is not None:
            b = C.TranslateOut(b, t * np.asarray(spec.d_shift, dtype=float))
        g = spec.gamma_fixed * (1.0 + t * spec.d_gamma)
        return cls(LinearMap(lm), g, b), cls(spec.lmap, spec.gamma_fixed, spec.b), spec.gamma_fixed
    raise ValueError(f"unknown sweep kind {k!r}")


def p74_bound(gamma, rho, delta_p, eta):
    """Right-hand side of the rate estimate for ``|J_{L <>*_gamma B} x - J_{L^T B L} x|``."""
    if not gamma < 1.0:
        return math.inf
    w = 2.0 * rho + delta_p
    a = gamma / (1.0 - gamma)
    return math.sqrt(a * a / 4.0 * w * w + a / 4.0 * eta * eta) + a / 2.0 * w


def _p74_eta(spec, delta_p):
    if spec.eta is not None:
        return float(spec.eta)
    m = spec.lmap.matrix
    s = m if spec.s_map is None else np.asarray(getattr(spec.s_map, "matrix", spec.s_map))
    sl = s @ m.T
    try:
        inv = inverse(sl)
    except Exception as exc:
        raise BoundUnavailable("S L^T is not invertible and no range bound was given") from exc
    return operator_norm(inv) * operator_norm(s) * (2.0 * spec.rho + delta_p)


def _sweep_row(spec, idx, t, opts):
    varying, limit, gq = _row_pair(spec, t)
    seed = substream_seed(spec.seed, idx)
    rho = float(spec.rho)
    delta = 2.0 * rho if spec.delta is None else float(spec.delta)
    x = generator(seed).ball(spec.n, varying.dim, delta)
    d = float(np.max(resolvent_gaps(varying, limit, gq, x, opts)))
    lower, sampled, y = _haus_lower(varying, limit, rho, spec.n, substream_seed(seed, 1), opts)
    if gq == 1.0 and delta == 2.0 * rho:
        upper = max(d, float(np.max(resolvent_gaps(varying, limit, 1.0, y, opts))))
    else:
        xu = generator(substream_seed(seed, 2)).ball(spec.n, varying.dim, 2.0 * rho)
        xu = np.vstack([xu, y])
        upper = float(np.max(resolvent_gaps(varying, limit, 1.0, xu, opts)))
    ms = minty_sample(varying, 1.0, 2.0 * rho, spec.modulus_n, substream_seed(seed, 3), opts)
    try:
        beta = modulus_estimate(ms).beta_hat
    except AllPairsDegenerate:
        beta = math.nan   # graph collapsed to (nearly) one point
    bound = math.nan
    if spec.kind == "Prop74":
        delta_p = 2.0 * rho + float(np.linalg.norm(C.resolvent(limit, 1.0, np.zeros(limit.dim), opts)))
        bound = p74_bound(t, rho, delta_p, _p74_eta(spec, delta_p))
    return MetricRecord(float(t), delta, rho, d, lower, upper, haus_sampled=sampled,
                        beta_hat=beta, bound=bound, samples=spec.n)


def gamma_sweep(spec, experiment_id="sweep", cfg_hash="", threads=1, opts=None):
    """One :class:`MetricRecord` per grid value, in grid order."""
    if spec.kind not in SWEEP_KINDS:
        raise ValueError(f"unknown sweep kind {spec.kind!r}")
    g = [float(t) for t in spec.gammas]
    if not g or any(not (t > 0 or (spec.kind == "Prop70" and t >= 0)) for t in g):
        raise ValueError("sweep grid must be nonempty and positive")
    diffs = np.diff(g)
    if not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("sweep grid must be strictly monotone")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(lambda it: _sweep_row(spec, it[0], it[1], opts), enumerate(g)))
    else:
        rows = [_sweep_row(spec, i, t, opts) for i, t in enumerate(g)]
    return SweepReport(spec.kind, experiment_id, cfg_hash, rows)
