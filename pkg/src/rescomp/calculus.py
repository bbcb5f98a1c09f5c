"""Operator expression trees and their resolvents.

An expression is evaluated only through ``J_{gamma A}``.  Leaves are atoms
from :mod:`rescomp.operators`; interior nodes either transform the query
(scaling, translation, inversion, ...) and are therefore exact at every
``gamma``, or carry a native parameter at which a closed form exists
(compositions, mixtures, Douglas-Rachford, chain).  Queries away from the
native parameter go through :func:`reparam_resolvent`.

Change-of-variable recipes used below (``J = J_{gamma A}``):

* ``J_{gamma A^{-1}} x = x - gamma J_{A/gamma}(x/gamma)``
* ``J_{gamma rho A} x``                          for ``rho A``
* ``(1/rho) J_{gamma rho A}(rho x)``             for ``A(rho .)``
* ``J(x + gamma z)``                             for ``A - z``
* ``w + J(x - w)``                               for ``A(. - w)``
* ``J_{beta A}(x/(1+gamma rho))``, ``beta = gamma/(1+gamma rho)``  for ``A + rho Id``
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import (DimensionMismatch, InvalidGamma, NoClosedForm, NotCoisometry,
                     ParseError, ReparamDivergence)
from .linalg import (InnerProduct, LinearMap, as_linear_map, matrix_from_json,
                     matrix_to_json, pseudo_inverse, sqrt_psd)
from .operators import Atom, atom_from_json, atom_to_json
from .rng import generator

GAMMA_MIN = 1e-8
GAMMA_MAX = 1e8
NATIVE_RTOL = 1e-14
AVERAGE_TOL = 1e-12
PSI_MARGIN = 1e-9


@dataclass(frozen=True)
class ReparamOptions:
    tol: float = 1e-10
    max_iter: int = 10_000
    accelerate: bool = True
    memory: int = 5


DEFAULT_OPTIONS = ReparamOptions()


def same_gamma(a, b):
    return abs(a - b) <= NATIVE_RTOL * max(abs(a), abs(b))


def _lmap(m):
    return m if isinstance(m, LinearMap) else LinearMap(m)


def _mat(x):
    return np.asarray(x, dtype=float)


# -- node types ----------------------------------------------------------------

class Expr:
    """Base class of operator expressions."""

    native_gamma = None

    @property
    def dim(self):
        raise NotImplementedError

    def children(self):
        return ()

    def _apply(self, gamma, x, opts):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Leaf(Expr):
    atom: Atom

    @property
    def dim(self):
        return self.atom.dim

    def _apply(self, gamma, x, opts):
        return self.atom.resolvent(gamma, x)


@dataclass(frozen=True, eq=False)
class Inverse(Expr):
    a: Expr

    @property
    def dim(self):
        return self.a.dim

    def children(self):
        return (self.a,)

    def _apply(self, gamma, x, opts):
        return x - gamma * _res(self.a, 1.0 / gamma, x / gamma, opts)


def _positive(name, v):
    v = float(v)
    if not (v > 0 and math.isfinite(v)):
        raise ValueError(f"{name} must be finite and positive, got {v}")
    return v


@dataclass(frozen=True, eq=False)
class ScaleLeft(Expr):
    rho: float
    a: Expr

    def __post_init__(self):
        object.__setattr__(self, "rho", _positive("rho", self.rho))

    @property
    def dim(self):
        return self.a.dim

    def children(self):
        return (self.a,)

    def _apply(self, gamma, x, opts):
        return _res(self.a, gamma * self.rho, x, opts)


@dataclass(frozen=True, eq=False)
class ScaleRight(Expr):
    a: Expr
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "rho", _positive("rho", self.rho))

    @property
    def dim(self):
        return self.a.dim

    def children(self):
        return (self.a,)

    def _apply(self, gamma, x, opts):
        r = self.rho
        return _res(self.a, gamma * r, r * x, opts) / r


def _vec_for(v, dim):
    v = np.array(v, dtype=float).reshape(-1)
    if v.size != dim:
        raise DimensionMismatch(f"vector of length {v.size} does not match dimension {dim}")
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class TranslateOut(Expr):
    """``A - z``."""

    a: Expr
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", _vec_for(self.z, self.a.dim))

    @property
    def dim(self):
        return self.a.dim

    def children(self):
        return (self.a,)

    def _apply(self, gamma, x, opts):
        return _res(self.a, gamma, x + gamma * self.z, opts)


@dataclass(frozen=True, eq=False)
class TranslateIn(Expr):
    """``x -> A(x - w)``."""

    a: Expr
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _vec_for(self.w, self.a.dim))

    @property
    def dim(self):
        return self.a.dim

    def children(self):
        return (self.a,)

    def _apply(self, gamma, x, opts):
        return self.w + _res(self.a, gamma, x - self.w, opts)


@dataclass(frozen=True, eq=False)
class AddScaledId(Expr):
    a: Expr
    rho: float

    def __post_init__(self):
        rho = float(self.rho)
        if not (rho >= 0 and math.isfinite(rho)):
            raise ValueError("AddScaledId needs rho >= 0")
        object.__setattr__(self, "rho", rho)

    @property
    def dim(self):
        return self.a.dim

    def children(self):
        return (self.a,)

    def _apply(self, gamma, x, opts):
        s = 1.0 + gamma * self.rho
        return _res(self.a, gamma / s, x / s, opts)


@dataclass(frozen=True, eq=False)
class Yosida(Expr):
    """``(A^{-1} + lam Id)^{-1}``."""

    a: Expr
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "lam", _positive("lam", self.lam))

    @property
    def dim(self):
        return self.a.dim

    def children(self):
        return (self.a,)

    def expand(self):
        return Inverse(AddScaledId(Inverse(self.a), self.lam))

    def _apply(self, gamma, x, opts):
        return _res(self.expand(), gamma, x, opts)


@dataclass(frozen=True, eq=False)
class Compose(Expr):
    """Resolvent composition ``L <>_gamma B``; ``L`` maps the node's space into ``B``'s."""

    lmap: LinearMap
    gamma: float
    b: Expr

    def __post_init__(self):
        object.__setattr__(self, "lmap", _lmap(self.lmap))
        object.__setattr__(self, "gamma", _positive("gamma", self.gamma))
        if self.lmap.rows != self.b.dim:
            raise DimensionMismatch(f"L has {self.lmap.rows} rows, B acts on R^{self.b.dim}")

    @property
    def native_gamma(self):
        return self.gamma

    @property
    def dim(self):
        return self.lmap.cols

    def children(self):
        return (self.b,)

    def _apply(self, gamma, x, opts):
        m = self.lmap.matrix
        return _res(self.b, gamma, x @ m.T, opts) @ m


@dataclass(frozen=True, eq=False)
class Cocompose(Expr):
    """Resolvent cocomposition ``L <>*_gamma B``."""

    lmap: LinearMap
    gamma: float
    b: Expr

    def __post_init__(self):
        object.__setattr__(self, "lmap", _lmap(self.lmap))
        object.__setattr__(self, "gamma", _positive("gamma", self.gamma))
        if self.lmap.rows != self.b.dim:
            raise DimensionMismatch(f"L has {self.lmap.rows} rows, B acts on R^{self.b.dim}")

    @property
    def native_gamma(self):
        return self.gamma

    @property
    def dim(self):
        return self.lmap.cols

    def children(self):
        return (self.b,)

    def _apply(self, gamma, x, opts):
        m = self.lmap.matrix
        lx = x @ m.T
        return x - (lx - _res(self.b, gamma, lx, opts)) @ m


@dataclass(frozen=True, eq=False)
class MixtureTerm:
    alpha: float
    lmap: LinearMap
    b: Expr

    def __post_init__(self):
        object.__setattr__(self, "alpha", _positive("alpha", self.alpha))
        object.__setattr__(self, "lmap", _lmap(self.lmap))
        if self.lmap.rows != self.b.dim:
            raise DimensionMismatch("mixture term: L rows must match B dimension")


def _terms(terms):
    out = tuple(t if isinstance(t, MixtureTerm) else MixtureTerm(*t) for t in terms)
    if not out:
        raise ValueError("a mixture needs at least one term")
    if len({t.lmap.cols for t in out}) != 1:
        raise DimensionMismatch("mixture terms act on different spaces")
    return out


@dataclass(frozen=True, eq=False)
class Mixture(Expr):
    gamma: float
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "gamma", _positive("gamma", self.gamma))
        object.__setattr__(self, "terms", _terms(self.terms))

    co = False

    @property
    def native_gamma(self):
        return self.gamma

    @property
    def dim(self):
        return self.terms[0].lmap.cols

    def children(self):
        return tuple(t.b for t in self.terms)

    def _apply(self, gamma, x, opts):
        acc = np.zeros_like(x)
        for t in self.terms:
            m = t.lmap.matrix
            lx = x @ m.T
            j = _res(t.b, gamma, lx, opts)
            acc += t.alpha * ((lx - j) if self.co else j) @ m
        return x - acc if self.co else acc


@dataclass(frozen=True, eq=False)
class Comixture(Mixture):
    co = True


@dataclass(frozen=True, eq=False)
class Average(Expr):
    """Resolvent average; weights must sum to one."""

    gamma: float
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "gamma", _positive("gamma", self.gamma))
        terms = tuple((_positive("alpha", a), b) for a, b in self.terms)
        if not terms:
            raise ValueError("average needs at least one term")
        if abs(sum(a for a, _ in terms) - 1.0) > AVERAGE_TOL:
            raise ValueError("average weights must sum to 1")
        if len({b.dim for _, b in terms}) != 1:
            raise DimensionMismatch("averaged operators act on different spaces")
        object.__setattr__(self, "terms", terms)

    @property
    def native_gamma(self):
        return self.gamma

    @property
    def dim(self):
        return self.terms[0][1].dim

    def children(self):
        return tuple(b for _, b in self.terms)

    def as_mixture(self):
        eye = LinearMap.identity(self.dim)
        return Mixture(self.gamma, [(a, eye, b) for a, b in self.terms])

    def _apply(self, gamma, x, opts):
        return self.as_mixture()._apply(gamma, x, opts)


@dataclass(frozen=True, eq=False)
class DouglasRachford(Expr):
    """Composition whose parameter-one resolvent is the DR operator of ``(A1, A2)``."""

    a1: Expr
    a2: Expr
    native_gamma = 1.0

    def __post_init__(self):
        if self.a1.dim != self.a2.dim:
            raise DimensionMismatch("Douglas-Rachford operands act on different spaces")

    @property
    def dim(self):
        return self.a1.dim

    def children(self):
        return (self.a1, self.a2)

    def _apply(self, gamma, x, opts):
        r1 = 2.0 * _res(self.a1, 1.0, x, opts) - x
        r2 = 2.0 * _res(self.a2, 1.0, r1, opts) - r1
        return 0.5 * x + 0.5 * r2


@dataclass(frozen=True, eq=False)
class DRProduct(Expr):
    """``(x, y) -> A1 x  x  (A2^{-1} y - 2x)``; may fail to be monotone."""

    a1: Expr
    a2: Expr

    def __post_init__(self):
        if self.a1.dim != self.a2.dim:
            raise DimensionMismatch("operands act on different spaces")

    @property
    def dim(self):
        return 2 * self.a1.dim

    def children(self):
        return (self.a1, self.a2)

    def _apply(self, gamma, x, opts):
        k = self.a1.dim
        u, v = x[:, :k], x[:, k:]
        a = _res(self.a1, gamma, u, opts)
        b = _res(Inverse(self.a2), gamma, v + 2.0 * gamma * a, opts)
        return np.hstack([a, b])


@dataclass(frozen=True, eq=False)
class Chain(Expr):
    """Operator on ``K^{p-1}`` built from ``p >= 2`` operators on ``K``.

    The resolvent at the native parameter runs the forward recursion
    ``x1 = J z1``, ``xk = J(zk + x_{k-1} - z_{k-1})``,
    ``xp = J(x1 + x_{p-1} - z_{p-1})`` and returns ``z + gamma^2 (x_{k+1} - x_k)_k``.
    """

    gamma: float
    ops: tuple

    def __post_init__(self):
        object.__setattr__(self, "gamma", _positive("gamma", self.gamma))
        ops = tuple(self.ops)
        if len(ops) < 2:
            raise ValueError("chain needs at least two operators")
        if len({a.dim for a in ops}) != 1:
            raise DimensionMismatch("chain operators act on different spaces")
        object.__setattr__(self, "ops", ops)

    @property
    def native_gamma(self):
        return self.gamma

    @property
    def block(self):
        return self.ops[0].dim

    @property
    def dim(self):
        return (len(self.ops) - 1) * self.block

    def children(self):
        return self.ops

    def chain_points(self, z, opts=DEFAULT_OPTIONS):
        """The points ``x_1..x_p`` of the recursion, stacked as columns blocks."""
        k, p = self.block, len(self.ops)
        zs = [z[:, i * k:(i + 1) * k] for i in range(p - 1)]
        xs = [_res(self.ops[0], 1.0, zs[0], opts)]
        for i in range(1, p - 1):
            xs.append(_res(self.ops[i], 1.0, zs[i] + xs[i - 1] - zs[i - 1], opts))
        xs.append(_res(self.ops[-1], 1.0, xs[0] + xs[-1] - zs[-1], opts))
        return np.hstack(xs)

    def _apply(self, gamma, z, opts):
        k = self.block
        xs = self.chain_points(z, opts)
        return z + gamma ** 2 * (xs[:, k:] - xs[:, :-k])

    def lifted(self):
        """``(L, N)``: the difference map and the coupling part of ``B/gamma``."""
        k, p = self.block, len(self.ops)
        eye = np.eye(k)
        lm = np.zeros((p * k, (p - 1) * k))
        for i in range(p - 1):
            lm[i * k:(i + 1) * k, i * k:(i + 1) * k] = eye
            lm[(i + 1) * k:(i + 2) * k, i * k:(i + 1) * k] = -eye
        nm = np.zeros((p * k, p * k))
        for i in range(1, p):
            nm[i * k:(i + 1) * k, (i - 1) * k:i * k] -= eye
        nm[(p - 1) * k:, :k] -= eye
        return lm, nm


@dataclass(frozen=True, eq=False)
class WeightedCompose(Expr):
    """Composition with ``L`` viewed from the space with Gram matrix ``L^T L + P_ker``."""

    lmap: LinearMap
    gamma: float
    b: Expr
    mode: str = "plain"
    pinv: np.ndarray = field(init=False, repr=False)
    inner_product: InnerProduct = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "lmap", _lmap(self.lmap))
        object.__setattr__(self, "gamma", _positive("gamma", self.gamma))
        if self.mode not in ("plain", "co"):
            raise ValueError("mode must be 'plain' or 'co'")
        if self.lmap.rows != self.b.dim:
            raise DimensionMismatch("L rows must match B dimension")
        pinv = pseudo_inverse(self.lmap.matrix)
        pinv.setflags(write=False)
        object.__setattr__(self, "pinv", pinv)
        object.__setattr__(self, "inner_product", InnerProduct.weighted(self.lmap))

    @property
    def native_gamma(self):
        return self.gamma

    @property
    def dim(self):
        return self.lmap.cols

    def children(self):
        return (self.b,)

    def _apply(self, gamma, x, opts):
        m = self.lmap.matrix
        lx = x @ m.T
        j = _res(self.b, gamma, lx, opts)
        if self.mode == "plain":
            return j @ self.pinv.T
        return x - (lx - j) @ self.pinv.T


@dataclass(frozen=True, eq=False)
class PsiLift(Expr):
    """Cocomposition with the coisometry ``(x, y) -> Lx + (I - L L^T)^{1/2} y``."""

    lmap: LinearMap
    gamma: float
    b: Expr
    lifted: LinearMap = field(init=False, repr=False)

    def __post_init__(self):
        lm = _lmap(self.lmap)
        object.__setattr__(self, "lmap", lm)
        object.__setattr__(self, "gamma", _positive("gamma", self.gamma))
        if lm.rows != self.b.dim:
            raise DimensionMismatch("L rows must match B dimension")
        if not lm.norm_estimate < 1.0 - PSI_MARGIN:
            raise ValueError(f"PsiLift needs ||L|| < 1, got {lm.norm_estimate}")
        m = lm.matrix
        root = sqrt_psd(np.eye(lm.rows) - m @ m.T)
        object.__setattr__(self, "lifted", LinearMap(np.hstack([m, root])))

    @property
    def native_gamma(self):
        return self.gamma

    @property
    def dim(self):
        return self.lmap.cols + self.lmap.rows

    def children(self):
        return (self.b,)

    def coisometry_residual(self):
        m = self.lifted.matrix
        return float(np.max(np.abs(m @ m.T - np.eye(m.shape[0]))))

    def _apply(self, gamma, x, opts):
        return Cocompose(self.lifted, self.gamma, self.b)._apply(gamma, x, opts)


@dataclass(frozen=True, eq=False)
class DirectSum(Expr):
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ValueError("direct sum needs at least one block")
        object.__setattr__(self, "blocks", blocks)

    @property
    def dim(self):
        return sum(b.dim for b in self.blocks)

    def children(self):
        return self.blocks

    def split(self, x):
        out, i = [], 0
        for b in self.blocks:
            out.append(x[..., i:i + b.dim])
            i += b.dim
        return out

    def _apply(self, gamma, x, opts):
        return np.hstack([_res(b, gamma, xi, opts) for b, xi in zip(self.blocks, self.split(x))])


@dataclass(frozen=True, eq=False)
class Parallel(Expr):
    """Parallel composition ``M |> B = (M B^{-1} M^T)^{-1}``, ``M`` mapping ``B``'s space out."""

    lmap: LinearMap
    b: Expr

    def __post_init__(self):
        object.__setattr__(self, "lmap", _lmap(self.lmap))
        if self.lmap.cols != self.b.dim:
            raise DimensionMismatch("M columns must match B dimension")

    @property
    def dim(self):
        return self.lmap.rows

    def children(self):
        return (self.b,)

    def _apply(self, gamma, x, opts):
        mu = self.lmap.adjoint().scaled_coisometry_factor()
        if mu is None:
            raise NoClosedForm("parallel composition needs M^T M = mu I")
        m = self.lmap.matrix
        u = (x @ m) / mu ** 1.5
        return math.sqrt(mu) * (_res(self.b, gamma / mu, u, opts) @ m.T)


@dataclass(frozen=True, eq=False)
class StandardComposition(Expr):
    """``K^T B K``."""

    lmap: LinearMap
    b: Expr

    def __post_init__(self):
        object.__setattr__(self, "lmap", _lmap(self.lmap))
        if self.lmap.rows != self.b.dim:
            raise DimensionMismatch("K rows must match B dimension")

    @property
    def dim(self):
        return self.lmap.cols

    def children(self):
        return (self.b,)

    def _apply(self, gamma, x, opts):
        mu = self.lmap.scaled_coisometry_factor()
        if mu is None:
            raise NoClosedForm("standard composition needs K K^T = mu I")
        m = self.lmap.matrix
        kx = x @ m.T
        return x - ((kx - _res(self.b, mu * gamma, kx, opts)) @ m) / mu


# -- evaluation ----------------------------------------------------------------

def _res(expr, gamma, x, opts):
    g0 = expr.native_gamma
    if g0 is None:
        return expr._apply(gamma, x, opts)
    if same_gamma(gamma, g0):
        return expr._apply(g0, x, opts)
    return _reparam(expr, g0, gamma, x, opts)


def _check_gamma(gamma):
    gamma = float(gamma)
    if not (GAMMA_MIN <= gamma <= GAMMA_MAX):
        raise InvalidGamma(f"gamma={gamma!r} outside [{GAMMA_MIN}, {GAMMA_MAX}]")
    return gamma


def _batch(expr, x):
    x = np.asarray(x, dtype=float)
    x2 = x.reshape(1, -1) if x.ndim == 1 else x
    if x2.ndim != 2 or x2.shape[1] != expr.dim:
        raise DimensionMismatch(f"expression acts on R^{expr.dim}, got shape {x.shape}")
    return x2


def resolvent(expr, gamma, x, opts=None):
    """``J_{gamma A} x`` for a point ``x`` of shape ``(d,)`` or a batch ``(n, d)``."""
    gamma = _check_gamma(gamma)
    opts = opts or DEFAULT_OPTIONS
    x2 = _batch(expr, x)
    out = _res(expr, gamma, x2, opts)
    return out[0] if np.ndim(x) == 1 else out


def yosida_value(expr, gamma, x, opts=None):
    """``(x - J_{gamma A} x) / gamma``, the Yosida approximation evaluated at ``x``."""
    return (np.asarray(x, dtype=float) - resolvent(expr, gamma, x, opts)) / gamma


# -- reparameterization --------------------------------------------------------

def _fixed_point(step, z0, q, opts):
    """Fixed point of a ``q``-contraction, row by row, with safeguarded Anderson mixing."""
    n = z0.shape[0]
    out = np.empty_like(z0)
    rows = np.arange(n)
    z = z0.copy()
    g = step(z, rows)
    f = g - z
    accel = opts.accelerate and q > 0.5
    hist_f, hist_g = [], []
    target = opts.tol * max(1.0 - q, 0.0)
    for _ in range(opts.max_iter):
        rn = np.sqrt(np.sum(f * f, axis=1))
        floor = 8 * np.finfo(float).eps * (1.0 + np.sqrt(np.sum(g * g, axis=1)))
        done = rn <= np.maximum(target, floor)
        if done.any():
            out[rows[done]] = g[done]
            keep = ~done
            rows, z, g, f = rows[keep], z[keep], g[keep], f[keep]
            hist_f = [h[keep] for h in hist_f]
            hist_g = [h[keep] for h in hist_g]
            rn = rn[keep]
            if rows.size == 0:
                return out
        if accel and hist_f:
            df = np.stack(hist_f, axis=1)
            dg = np.stack(hist_g, axis=1)
            gram = np.einsum("nkd,njd->nkj", df, df)
            rhs = np.einsum("nkd,nd->nk", df, f)
            k = gram.shape[1]
            reg = 1e-12 * np.einsum("nkk->n", gram)[:, None, None] + 1e-300
            theta = np.linalg.solve(gram + reg * np.eye(k), rhs[..., None])[..., 0]
            z_new = g - np.einsum("nkd,nk->nd", dg, theta)
        else:
            z_new = g
        g_new = step(z_new, rows)
        f_new = g_new - z_new
        if accel and hist_f:
            bad = np.sqrt(np.sum(f_new * f_new, axis=1)) > rn
            if bad.any():
                z_new[bad] = g[bad]
                g_new[bad] = step(g[bad], rows[bad])
                f_new[bad] = g_new[bad] - z_new[bad]
        if accel:
            hist_f.append(f_new - f)
            hist_g.append(g_new - g)
            if len(hist_f) > opts.memory:
                hist_f.pop(0)
                hist_g.pop(0)
        z, g, f = z_new, g_new, f_new
    raise ReparamDivergence(f"no fixed point within {opts.max_iter} iterations "
                            f"(contraction factor {q:.4g}, {rows.size} rows left)")


def _reparam(expr, g0, mu, x, opts):
    t = g0 / mu
    q_direct = abs(1.0 - t)
    if q_direct <= 0.5:
        def step(p, idx):
            return expr._apply(g0, t * x[idx] + (1.0 - t) * p, opts)
        return _fixed_point(step, x.copy(), q_direct, opts)
    # Peaceman-Rachford on A + (. - x)/mu at step g0; the quadratic part is a
    # (g0 - mu)/(g0 + mu)-contraction after reflection.
    def jc(z, idx):
        return (z + t * x[idx]) / (1.0 + t)

    def step(z, idx):
        r = 2.0 * jc(z, idx) - z
        return 2.0 * expr._apply(g0, r, opts) - r

    q = abs(g0 - mu) / (g0 + mu)
    return jc(_fixed_point(step, x.copy(), q, opts), np.arange(x.shape[0]))


def reparam_resolvent(expr, mu, x, opts=None):
    """``J_{mu A} x`` from the resolvent at the node's native parameter only."""
    mu = _check_gamma(mu)
    opts = opts or DEFAULT_OPTIONS
    g0 = expr.native_gamma
    x2 = _batch(expr, x)
    if g0 is None or same_gamma(g0, mu):
        out = _res(expr, mu, x2, opts)
    else:
        out = _reparam(expr, g0, mu, x2, opts)
    return out[0] if np.ndim(x) == 1 else out


@dataclass(frozen=True, eq=False)
class Opaque(Expr):
    """Wraps an expression and pretends it is exact only at ``gamma0``."""

    a: Expr
    gamma0: float

    @property
    def native_gamma(self):
        return self.gamma0

    @property
    def dim(self):
        return self.a.dim

    def children(self):
        return (self.a,)

    def _apply(self, gamma, x, opts):
        return _res(self.a, gamma, x, opts)


# -- constructions -------------------------------------------------------------

def lift_mixture(node):
    """Product-space form of a (co)mixture or average as a single (co)composition."""
    if isinstance(node, Average):
        node = node.as_mixture()
    if not isinstance(node, Mixture):
        raise TypeError("lift_mixture expects a Mixture, Comixture or Average")
    big = np.vstack([math.sqrt(t.alpha) * t.lmap.matrix for t in node.terms])
    blocks = [ScaleLeft(math.sqrt(t.alpha), ScaleRight(t.b, 1.0 / math.sqrt(t.alpha)))
              for t in node.terms]
    cls = Cocompose if node.co else Compose
    return cls(LinearMap(big), node.gamma, DirectSum(blocks))


def dr_via_composition(a1, a2):
    """The Douglas-Rachford operator as ``L <>_1 B`` with ``L x = (x, -x)``."""
    k = a1.dim
    lm = np.vstack([np.eye(k), -np.eye(k)])
    return Compose(LinearMap(lm), 1.0, DRProduct(a1, a2))


def coisometry_collapse(lmap, b, gamma=None):
    """``(L^T |> B, L^T B L)``, equal to ``(L <>_gamma B, L <>*_gamma B)`` for a coisometry."""
    lmap = _lmap(lmap)
    if not lmap.is_coisometry:
        raise NotCoisometry("L L^T differs from the identity")
    return Parallel(lmap.adjoint(), b), StandardComposition(lmap, b)


@dataclass
class ParallelCheckReport:
    max_residual: float
    collapse_gap: float
    samples: int


def parallel_composition_check(lmap, b, gamma, n=200, seed=0, radius=3.0, opts=None):
    """Check sampled graph points of ``L <>_gamma B`` against ``L^T |> (B + Psi/gamma)``.

    For ``y`` in a ball, ``p = J y`` and ``p* = (y - p)/gamma`` must admit
    ``v`` with ``p = L^T v`` and ``L p* - Psi v / gamma`` in ``B v``.  For a
    coisometry the report also holds the gap to the ``L^T |> B`` resolvent.
    """
    lmap = _lmap(lmap)
    if not isinstance(b, Leaf):
        raise TypeError("parallel_composition_check handles atom operands only")
    if lmap.norm_estimate > 1.0 + 1e-12:
        raise ValueError("parallel_composition_check needs ||L|| <= 1")
    m = lmap.matrix
    psi = np.eye(lmap.rows) - m @ m.T
    node = Compose(lmap, gamma, b)
    y = generator(seed).ball(n, lmap.cols, radius)
    p = resolvent(node, gamma, y, opts)
    pstar = (y - p) / gamma
    v = b.atom.resolvent(gamma, y @ m.T)
    r1 = np.sqrt(np.sum((p - v @ m) ** 2, axis=1))
    r2 = b.atom.residual(v, pstar @ m.T - (v @ psi.T) / gamma)
    gap = float("nan")
    if lmap.is_coisometry:
        par = coisometry_collapse(lmap, b)[0]
        gap = float(np.max(np.abs(resolvent(par, gamma, y, opts) - p)))
    return ParallelCheckReport(float(np.max(r1 + r2)), gap, n)


# -- serialization -------------------------------------------------------------

def _lm_json(lm):
    return matrix_to_json(lm.matrix)


def _lm_from(obj):
    return LinearMap(matrix_from_json(obj))


def to_json(e):
    if isinstance(e, Leaf):
        return {"type": "leaf", "atom": atom_to_json(e.atom)}
    if isinstance(e, Inverse):
        return {"type": "inverse", "a": to_json(e.a)}
    if isinstance(e, ScaleLeft):
        return {"type": "scale_left", "rho": e.rho, "a": to_json(e.a)}
    if isinstance(e, ScaleRight):
        return {"type": "scale_right", "rho": e.rho, "a": to_json(e.a)}
    if isinstance(e, TranslateOut):
        return {"type": "translate_out", "z": e.z.tolist(), "a": to_json(e.a)}
    if isinstance(e, TranslateIn):
        return {"type": "translate_in", "w": e.w.tolist(), "a": to_json(e.a)}
    if isinstance(e, AddScaledId):
        return {"type": "add_scaled_id", "rho": e.rho, "a": to_json(e.a)}
    if isinstance(e, Yosida):
        return {"type": "yosida", "lam": e.lam, "a": to_json(e.a)}
    if isinstance(e, (Compose, Cocompose)):
        kind = "compose" if isinstance(e, Compose) else "cocompose"
        return {"type": kind, "L": _lm_json(e.lmap), "gamma": e.gamma, "b": to_json(e.b)}
    if isinstance(e, Mixture):
        return {"type": "comixture" if e.co else "mixture", "gamma": e.gamma,
                "terms": [{"alpha": t.alpha, "L": _lm_json(t.lmap), "b": to_json(t.b)}
                          for t in e.terms]}
    if isinstance(e, Average):
        return {"type": "average", "gamma": e.gamma,
                "terms": [{"alpha": a, "b": to_json(b)} for a, b in e.terms]}
    if isinstance(e, DouglasRachford):
        return {"type": "douglas_rachford", "a1": to_json(e.a1), "a2": to_json(e.a2)}
    if isinstance(e, DRProduct):
        return {"type": "dr_product", "a1": to_json(e.a1), "a2": to_json(e.a2)}
    if isinstance(e, Chain):
        return {"type": "chain", "gamma": e.gamma, "ops": [to_json(a) for a in e.ops]}
    if isinstance(e, WeightedCompose):
        return {"type": "weighted_compose", "L": _lm_json(e.lmap), "gamma": e.gamma,
                "b": to_json(e.b), "mode": e.mode}
    if isinstance(e, PsiLift):
        return {"type": "psi_lift", "L": _lm_json(e.lmap), "gamma": e.gamma, "b": to_json(e.b)}
    if isinstance(e, DirectSum):
        return {"type": "direct_sum", "blocks": [to_json(b) for b in e.blocks]}
    if isinstance(e, Parallel):
        return {"type": "parallel", "M": _lm_json(e.lmap), "b": to_json(e.b)}
    if isinstance(e, StandardComposition):
        return {"type": "standard_composition", "K": _lm_json(e.lmap), "b": to_json(e.b)}
    if isinstance(e, Opaque):
        return {"type": "opaque", "gamma0": e.gamma0, "a": to_json(e.a)}
    raise TypeError(f"cannot serialize {type(e).__name__}")


def from_json(obj):
    if not isinstance(obj, dict):
        raise ParseError(f"expression must be a JSON object, got {type(obj).__name__}")
    try:
        kind = obj["type"]
        f = from_json
        if kind == "leaf":
            return Leaf(atom_from_json(obj["atom"]))
        if kind == "inverse":
            return Inverse(f(obj["a"]))
        if kind == "scale_left":
            return ScaleLeft(obj["rho"], f(obj["a"]))
        if kind == "scale_right":
            return ScaleRight(f(obj["a"]), obj["rho"])
        if kind == "translate_out":
            return TranslateOut(f(obj["a"]), obj["z"])
        if kind == "translate_in":
            return TranslateIn(f(obj["a"]), obj["w"])
        if kind == "add_scaled_id":
            return AddScaledId(f(obj["a"]), obj["rho"])
        if kind == "yosida":
            return Yosida(f(obj["a"]), obj["lam"])
        if kind == "compose":
            return Compose(_lm_from(obj["L"]), obj["gamma"], f(obj["b"]))
        if kind == "cocompose":
            return Cocompose(_lm_from(obj["L"]), obj["gamma"], f(obj["b"]))
        if kind in ("mixture", "comixture"):
            cls = Comixture if kind == "comixture" else Mixture
            return cls(obj["gamma"], [(t["alpha"], _lm_from(t["L"]), f(t["b"]))
                                      for t in obj["terms"]])
        if kind == "average":
            return Average(obj["gamma"], [(t["alpha"], f(t["b"])) for t in obj["terms"]])
        if kind == "douglas_rachford":
            return DouglasRachford(f(obj["a1"]), f(obj["a2"]))
        if kind == "dr_product":
            return DRProduct(f(obj["a1"]), f(obj["a2"]))
        if kind == "chain":
            return Chain(obj["gamma"], [f(a) for a in obj["ops"]])
        if kind == "weighted_compose":
            return WeightedCompose(_lm_from(obj["L"]), obj["gamma"], f(obj["b"]),
                                   obj.get("mode", "plain"))
        if kind == "psi_lift":
            return PsiLift(_lm_from(obj["L"]), obj["gamma"], f(obj["b"]))
        if kind == "direct_sum":
            return DirectSum([f(b) for b in obj["blocks"]])
        if kind == "parallel":
            return Parallel(_lm_from(obj["M"]), f(obj["b"]))
        if kind == "standard_composition":
            return StandardComposition(_lm_from(obj["K"]), f(obj["b"]))
        if kind == "opaque":
            return Opaque(f(obj["a"]), obj["gamma0"])
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed {obj.get('type')!r} node: {exc}") from exc
    raise ParseError(f"unknown expression type {obj.get('type')!r}")
