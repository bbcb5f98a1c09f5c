"""Brute-force resolvent oracle built on graph membership only.

``inclusion_oracle`` solves ``x in p + gamma A p`` by grid search.  The
search never calls a resolvent: membership in ``gra A`` is decided from
atom residuals, pushed through the defining relations of each node.
Nodes defined by a parallel composition introduce a latent point ``y``
of the inner space, and the search runs over ``y`` instead of ``p``:

* ``L <>_g B``:  ``p = L^T y`` and ``(y, L(p* + p/g) - y/g)`` in ``gra B``
* ``L <>*_g B``: ``p* = L^T y`` and ``(L(p + g p*) - g y, y)`` in ``gra B``
* ``M |> B``:    ``p = M y`` and ``(y, M^T p*)`` in ``gra B``
* ``K^T B K``:   ``p* = K^T y`` and ``(K p, y)`` in ``gra B``
"""
from dataclasses import dataclass
import itertools

import numpy as np

from . import calculus as C
from .errors import DimensionMismatch, OracleAmbiguous, OracleFailure

MAX_SEARCH_DIM = 3


@dataclass(frozen=True)
class GridSpec:
    points: int = 0            # per axis on the coarse grid; 0 picks 41 (dim <= 2) or 21
    refine_tol: float = 1e-10  # final spacing, relative to the search scale
    accept_tol: float = 1e-7   # residual accepted as graph membership, relative
    candidates: int = 4
    max_expand: int = 10
    ambiguity_tol: float = 1e-5


DEFAULT_GRID = GridSpec()


def _norms(v):
    return np.sqrt(np.sum(v * v, axis=-1))


# -- latent descriptions -------------------------------------------------------

@dataclass
class Latent:
    which: str       # "p" or "pstar": the variable equal to adj @ y
    adj: np.ndarray  # maps the latent space into the node's space
    pair: object     # (p, pstar, y) -> (u, ustar) that must lie in gra B
    bres: object     # (u, ustar) -> residual


def _compose_latent(lm, adj, g0, b, co, bres=None):
    bres = bres or (lambda u, us: graph_residual(b, u, us))
    if co:
        def pair(p, ps, y):
            return (p + g0 * ps) @ lm.T - g0 * y, y
        return Latent("pstar", adj, pair, bres)

    def pair(p, ps, y):
        return y, (ps + p / g0) @ lm.T - y / g0
    return Latent("p", adj, pair, bres)


def _chain_bres(chain):
    lm, nm = chain.lifted()
    k, g = chain.block, chain.gamma

    def bres(u, us):
        # (u, us) in gra B^{-1}  iff  u/g - N us in (diag A)(us)
        w = u / g - us @ nm.T
        return sum(graph_residual(a, us[:, i * k:(i + 1) * k], w[:, i * k:(i + 1) * k])
                   for i, a in enumerate(chain.ops))
    return bres


def latent_form(e):
    """The latent description of ``e``, or ``None`` for nodes checked directly."""
    if isinstance(e, (C.Compose, C.Cocompose)):
        m = e.lmap.matrix
        return _compose_latent(m, m.T, e.gamma, e.b, isinstance(e, C.Cocompose))
    if isinstance(e, C.WeightedCompose):
        m = e.lmap.matrix
        return _compose_latent(m, e.pinv, e.gamma, e.b, e.mode == "co")
    if isinstance(e, (C.Mixture, C.Average)):
        return latent_form(C.lift_mixture(e))
    if isinstance(e, C.PsiLift):
        m = e.lifted.matrix
        return _compose_latent(m, m.T, e.gamma, e.b, True)
    if isinstance(e, C.DouglasRachford):
        return latent_form(C.dr_via_composition(e.a1, e.a2))
    if isinstance(e, C.Chain):
        lm, _ = e.lifted()
        glm = e.gamma * lm
        return _compose_latent(glm, glm.T, e.gamma, None, True, _chain_bres(e))
    if isinstance(e, C.Parallel):
        m = e.lmap.matrix
        return Latent("p", m, lambda p, ps, y: (y, ps @ m), lambda u, us: graph_residual(e.b, u, us))
    if isinstance(e, C.StandardComposition):
        m = e.lmap.matrix
        return Latent("pstar", m.T, lambda p, ps, y: (p @ m.T, y),
                      lambda u, us: graph_residual(e.b, u, us))
    return None


# -- graph residuals -----------------------------------------------------------

def graph_residual(e, x, xstar):
    """Nonnegative residual of ``(x, xstar)`` rows against ``gra e``; zero on the graph."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xs = np.atleast_2d(np.asarray(xstar, dtype=float))
    if isinstance(e, C.Leaf):
        return e.atom.residual(x, xs)
    if isinstance(e, C.Inverse):
        return graph_residual(e.a, xs, x)
    if isinstance(e, C.ScaleLeft):
        return graph_residual(e.a, x, xs / e.rho)
    if isinstance(e, C.ScaleRight):
        return graph_residual(e.a, e.rho * x, xs)
    if isinstance(e, C.TranslateOut):
        return graph_residual(e.a, x, xs + e.z)
    if isinstance(e, C.TranslateIn):
        return graph_residual(e.a, x - e.w, xs)
    if isinstance(e, C.AddScaledId):
        return graph_residual(e.a, x, xs - e.rho * x)
    if isinstance(e, C.Yosida):
        return graph_residual(e.a, x - e.lam * xs, xs)
    if isinstance(e, C.DirectSum):
        return sum(graph_residual(b, xi, si)
                   for b, xi, si in zip(e.blocks, e.split(x), e.split(xs)))
    if isinstance(e, C.DRProduct):
        k = e.a1.dim
        u, v, us, vs = x[:, :k], x[:, k:], xs[:, :k], xs[:, k:]
        return graph_residual(e.a1, u, us) + graph_residual(e.a2, vs + 2.0 * u, v)
    if isinstance(e, C.Opaque):
        return graph_residual(e.a, x, xs)
    lat = latent_form(e)
    if lat is None:
        raise TypeError(f"no graph description for {type(e).__name__}")
    return np.array([_latent_membership(lat, xi, si) for xi, si in zip(x, xs)])


def _latent_membership(lat, p, ps, grid=DEFAULT_GRID):
    pinned = p if lat.which == "p" else ps

    def fun(y):
        pp = np.broadcast_to(p, (y.shape[0], p.size))
        pps = np.broadcast_to(ps, (y.shape[0], ps.size))
        u, us = lat.pair(pp, pps, y)
        return _norms(y @ lat.adj.T - pinned) + lat.bres(u, us)

    k = lat.adj.shape[1]
    scale = 1.0 + float(np.linalg.norm(p) + np.linalg.norm(ps))
    best = _search(fun, k, scale, grid)
    return best[0][0]


# -- grid engine ---------------------------------------------------------------

def _grid(center, half, n):
    axes = [np.linspace(c - half, c + half, n) for c in center]
    return np.array(list(itertools.product(*axes))) if len(center) > 1 else axes[0][:, None]


def _search(fun, k, scale, grid):
    """Candidate minimizers ``[(value, y), ...]`` sorted by value."""
    if k > MAX_SEARCH_DIM:
        raise DimensionMismatch(f"oracle search dimension {k} exceeds {MAX_SEARCH_DIM}")
    n = grid.points or (41 if k <= 2 else 21)
    center = np.zeros(k)
    half = 2.0 * scale
    for _ in range(grid.max_expand):
        pts = _grid(center, half, n)
        vals = fun(pts)
        i = int(np.argmin(vals))
        if np.max(np.abs(pts[i] - center)) < half * (1.0 - 1.5 / (n - 1)):
            break
        half *= 4.0
    h = 2.0 * half / (n - 1)
    order = np.argsort(vals, kind="stable")
    seeds = []
    for j in order:
        if all(np.max(np.abs(pts[j] - s)) > 1.5 * h for s in seeds):
            seeds.append(pts[j])
        if len(seeds) == grid.candidates:
            break
    stop = grid.refine_tol * scale
    out = []
    for s in seeds:
        c, hh = s.copy(), h
        val = float(fun(c[None, :])[0])
        while hh > stop:
            local = _grid(c, 2.0 * hh, 9)
            lv = fun(local)
            j = int(np.argmin(lv))
            if lv[j] < val:
                on_edge = np.max(np.abs(local[j] - c)) >= 2.0 * hh * (1 - 1e-12)
                c, val = local[j], float(lv[j])
                if on_edge:
                    continue
            hh *= 0.5
        out.append((val, c))
    out.sort(key=lambda t: t[0])
    return out


def inclusion_oracle(expr, gamma, x, grid=None):
    """``p`` with ``x in p + gamma expr(p)``, found without any resolvent formula."""
    grid = grid or DEFAULT_GRID
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != expr.dim:
        raise DimensionMismatch(f"expression acts on R^{expr.dim}, got {x.size}")
    gamma = float(gamma)
    lat = latent_form(expr)
    scale = 1.0 + float(np.linalg.norm(x))
    if lat is None:
        def to_p(z):
            return z

        def fun(z):
            return graph_residual(expr, z, (x - z) / gamma)
        k = expr.dim
    else:
        adj = lat.adj
        g0 = getattr(expr, "gamma", None) or expr.native_gamma or 1.0
        scale *= max(1.0, 1.0 / g0, 1.0 / gamma, gamma)

        if lat.which == "p":
            def split(y):
                p = y @ adj.T
                return p, (x - p) / gamma
        else:
            def split(y):
                ps = y @ adj.T
                return x - gamma * ps, ps

        def to_p(y):
            return split(y[None, :])[0][0]

        def fun(y):
            p, ps = split(y)
            return lat.bres(*lat.pair(p, ps, y))
        k = adj.shape[1]
    cands = _search(fun, k, scale, grid)
    accept = grid.accept_tol * scale
    if cands[0][0] > accept:
        raise OracleFailure(f"best residual {cands[0][0]:.3e} above {accept:.3e}")
    best = to_p(cands[0][1])
    for val, y in cands[1:]:
        if val <= accept:
            other = to_p(y)
            if np.linalg.norm(other - best) > grid.ambiguity_tol * scale:
                raise OracleAmbiguous(f"two graph points {best} and {other} both fit")
    return best
