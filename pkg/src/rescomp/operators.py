"""Atomic maximally monotone operators with closed-form resolvents.

Every atom works on batches: points are rows of a 2-D array.  Each atom
knows its resolvent ``J_{gamma A}`` for all ``gamma > 0`` and a graph
residual that is zero exactly on ``gra A``.  The residuals use the graph
descriptions (KKT conditions for normal cones) rather than projections,
so they can serve as an independent membership test.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotPSD, ParseError
from .linalg import as_matrix, as_vector, solve, symmetric_eig

PSD_TOL = 1e-10


def _rows(x, dim):
    x = np.asarray(x, dtype=float)
    x2 = x.reshape(1, -1) if x.ndim == 1 else x
    if x2.shape[-1] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {x2.shape[-1]}")
    return x2


def _frozen_vec(v):
    v = np.array(as_vector(v), dtype=float)
    v.setflags(write=False)
    return v


def _norms(x):
    return np.sqrt(np.sum(x * x, axis=-1))


# -- convex sets ---------------------------------------------------------------

class ConvexSet:
    dim: int

    def project(self, x):
        raise NotImplementedError

    def kkt_residual(self, x, xstar):
        """Zero iff ``xstar`` lies in the normal cone of the set at ``x``."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen_vec(self.lo), _frozen_vec(self.hi)
        if lo.shape != hi.shape:
            raise DimensionMismatch("box bounds differ in length")
        if np.any(lo > hi):
            raise ValueError("box needs lo <= hi coordinatewise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    def project(self, x):
        return np.clip(x, self.lo, self.hi)

    def kkt_residual(self, x, xstar):
        below = np.maximum(self.lo - x, 0.0)
        above = np.maximum(x - self.hi, 0.0)
        # positive multipliers need x at hi, negative ones need x at lo
        up = np.minimum(np.maximum(xstar, 0.0), np.maximum(self.hi - x, 0.0))
        down = np.minimum(np.maximum(-xstar, 0.0), np.maximum(x - self.lo, 0.0))
        return np.sum(below + above + up + down, axis=-1)


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen_vec(self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.size

    def project(self, x):
        d = x - self.center
        n = _norms(d)[..., None]
        scale = np.where(n > self.radius, self.radius / np.where(n > 0, n, 1.0), 1.0)
        return self.center + d * scale

    def kkt_residual(self, x, xstar):
        d = x - self.center
        dist = _norms(d)
        infeas = np.maximum(dist - self.radius, 0.0)
        snorm = _norms(xstar)
        comp = np.minimum(snorm, np.maximum(self.radius - dist, 0.0))
        u = d / np.where(dist > 0, dist, 1.0)[..., None]
        along = np.maximum(np.sum(xstar * u, axis=-1), 0.0)
        lateral = _norms(xstar - along[..., None] * u)
        lateral = np.where(dist > 0, lateral, snorm)
        return infeas + comp + lateral


@dataclass(frozen=True, eq=False)
class Singleton(ConvexSet):
    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", _frozen_vec(self.point))

    @property
    def dim(self):
        return self.point.size

    def project(self, x):
        return np.broadcast_to(self.point, np.shape(x)).copy()

    def kkt_residual(self, x, xstar):
        return _norms(x - self.point)


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """``{x : <normal, x> <= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        a = _frozen_vec(self.normal)
        if not np.any(a):
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.normal.size

    def project(self, x):
        a = self.normal
        excess = np.maximum(x @ a - self.offset, 0.0)
        return x - (excess / (a @ a))[..., None] * a

    def kkt_residual(self, x, xstar):
        a = self.normal
        an = np.linalg.norm(a)
        u = a / an
        slack = (x @ a - self.offset) / an
        along = np.maximum(xstar @ u, 0.0)
        lateral = _norms(xstar - along[..., None] * u)
        return np.maximum(slack, 0.0) + lateral + np.minimum(along, np.maximum(-slack, 0.0))


@dataclass(frozen=True, eq=False)
class AffineSubspace(ConvexSet):
    """``offset + span(basis columns)``; the basis is orthonormalized on construction."""

    basis: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        b = as_matrix(self.basis)
        off = _frozen_vec(self.offset)
        if b.shape[0] != off.size:
            raise DimensionMismatch("basis rows must match offset length")
        if b.shape[1] and np.max(np.abs(b.T @ b - np.eye(b.shape[1]))) <= 4 * np.finfo(float).eps:
            # already orthonormal (e.g. reloaded from JSON): keep it bit for bit
            b = b.copy()
            b.setflags(write=False)
            object.__setattr__(self, "basis", b)
            object.__setattr__(self, "offset", off)
            return
        q = []
        for col in b.T:
            v = col.copy()
            for e in q:
                v -= (e @ v) * e
            for e in q:
                v -= (e @ v) * e
            nv = np.linalg.norm(v)
            if nv > 1e-12 * max(np.linalg.norm(col), 1.0):
                q.append(v / nv)
        basis = np.array(q).T if q else np.zeros((off.size, 0))
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "offset", off)

    @property
    def dim(self):
        return self.offset.size

    def project(self, x):
        d = x - self.offset
        return self.offset + (d @ self.basis) @ self.basis.T

    def kkt_residual(self, x, xstar):
        d = x - self.offset
        off_plane = d - (d @ self.basis) @ self.basis.T
        in_plane = xstar @ self.basis
        return _norms(off_plane) + _norms(in_plane)


def project(c, x):
    """Nearest point of ``c`` to ``x`` (row-wise for batches)."""
    x2 = _rows(x, c.dim)
    out = c.project(x2)
    return out[0] if np.ndim(x) == 1 else out


# -- atoms ---------------------------------------------------------------------

class Atom:
    dim: int

    def resolvent(self, gamma, x):
        raise NotImplementedError

    def residual(self, x, xstar):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Zero(Atom):
    dim: int

    def resolvent(self, gamma, x):
        return np.array(x, dtype=float)

    def residual(self, x, xstar):
        return _norms(xstar)


@dataclass(frozen=True, eq=False)
class ScaledIdentity(Atom):
    alpha: float
    dim: int

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("scaled identity needs alpha >= 0")
        object.__setattr__(self, "alpha", float(self.alpha))

    def resolvent(self, gamma, x):
        return x / (1.0 + gamma * self.alpha)

    def residual(self, x, xstar):
        return _norms(xstar - self.alpha * x)


@dataclass(frozen=True, eq=False)
class LinearMonotone(Atom):
    """``x -> M x``; the symmetric part must be PSD unless ``unchecked``."""

    matrix: np.ndarray
    unchecked: bool = False

    def __post_init__(self):
        m = np.array(as_matrix(self.matrix))
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatch("linear monotone atom needs a square matrix")
        if not self.unchecked:
            w, _ = symmetric_eig(0.5 * (m + m.T))
            if w[0] < -PSD_TOL:
                raise NotPSD(f"symmetric part has eigenvalue {w[0]:.3e} < 0; not monotone")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def resolvent(self, gamma, x):
        a = np.eye(self.dim) + gamma * self.matrix
        return solve(a, np.asarray(x, dtype=float).T).T

    def residual(self, x, xstar):
        return _norms(xstar - x @ self.matrix.T)


@dataclass(frozen=True, eq=False)
class NormalCone(Atom):
    cset: ConvexSet

    @property
    def dim(self):
        return self.cset.dim

    def resolvent(self, gamma, x):
        return self.cset.project(x)

    def residual(self, x, xstar):
        return self.cset.kkt_residual(x, xstar)


@dataclass(frozen=True, eq=False)
class SubdiffL1(Atom):
    """Subdifferential of ``lam * ||.||_1``."""

    lam: float
    dim: int

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("l1 weight must be positive")
        object.__setattr__(self, "lam", float(self.lam))

    def resolvent(self, gamma, x):
        t = gamma * self.lam
        return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)

    def residual(self, x, xstar):
        lam = self.lam
        outside = np.maximum(np.abs(xstar) - lam, 0.0)
        off_face = np.minimum(np.abs(x), np.abs(xstar - lam * np.sign(x)))
        return np.sum(outside + off_face, axis=-1)


@dataclass(frozen=True, eq=False)
class ConstantShift(Atom):
    """``base + v``."""

    shift: np.ndarray
    base: Atom

    def __post_init__(self):
        v = _frozen_vec(self.shift)
        if v.size != self.base.dim:
            raise DimensionMismatch("shift length must match the base atom")
        object.__setattr__(self, "shift", v)

    @property
    def dim(self):
        return self.base.dim

    def resolvent(self, gamma, x):
        return self.base.resolvent(gamma, x - gamma * self.shift)

    def residual(self, x, xstar):
        return self.base.residual(x, xstar - self.shift)


def atom_resolvent(atom, gamma, x):
    """``J_{gamma A} x`` for a single point or a batch of rows."""
    if not gamma > 0 or not np.isfinite(gamma):
        raise ValueError("gamma must be finite and positive")
    x2 = _rows(x, atom.dim)
    out = atom.resolvent(float(gamma), x2)
    return out[0] if np.ndim(x) == 1 else out


def inclusion_residual(atom, x, xstar, tol=0.0):
    """Nonnegative graph-membership score of ``(x, xstar)``; values <= tol read as 0."""
    x2, s2 = _rows(x, atom.dim), _rows(xstar, atom.dim)
    r = atom.residual(x2, s2)
    r = np.where(r <= tol, 0.0, r)
    return float(r[0]) if np.ndim(x) == 1 else r


# -- serialization -------------------------------------------------------------

def set_to_json(c):
    if isinstance(c, Box):
        return {"type": "box", "lo": c.lo.tolist(), "hi": c.hi.tolist()}
    if isinstance(c, Ball):
        return {"type": "ball", "center": c.center.tolist(), "radius": c.radius}
    if isinstance(c, Singleton):
        return {"type": "singleton", "point": c.point.tolist()}
    if isinstance(c, Halfspace):
        return {"type": "halfspace", "normal": c.normal.tolist(), "offset": c.offset}
    if isinstance(c, AffineSubspace):
        return {"type": "affine", "basis": c.basis.T.tolist(), "offset": c.offset.tolist(),
                "dim": c.dim}
    raise TypeError(f"unknown set {c!r}")


def set_from_json(obj):
    kind = obj.get("type")
    if kind == "box":
        return Box(obj["lo"], obj["hi"])
    if kind == "ball":
        return Ball(obj["center"], obj["radius"])
    if kind == "singleton":
        return Singleton(obj["point"])
    if kind == "halfspace":
        return Halfspace(obj["normal"], obj["offset"])
    if kind == "affine":
        cols = obj["basis"]
        basis = np.array(cols, dtype=float).T if cols else np.zeros((obj["dim"], 0))
        if basis.shape[1] == 0:
            return _point_subspace(obj["offset"])
        return AffineSubspace(basis, obj["offset"])
    raise ParseError(f"unknown set type {kind!r}")


def _point_subspace(offset):
    off = _frozen_vec(offset)
    sub = object.__new__(AffineSubspace)
    basis = np.zeros((off.size, 0))
    basis.setflags(write=False)
    object.__setattr__(sub, "basis", basis)
    object.__setattr__(sub, "offset", off)
    return sub


ATOM_TYPES = ("zero", "scaled_identity", "linear", "normal_cone", "subdiff_l1", "shift")


def atom_to_json(a):
    if isinstance(a, Zero):
        return {"type": "zero", "dim": a.dim}
    if isinstance(a, ScaledIdentity):
        return {"type": "scaled_identity", "alpha": a.alpha, "dim": a.dim}
    if isinstance(a, LinearMonotone):
        from .linalg import matrix_to_json
        out = {"type": "linear", "matrix": matrix_to_json(a.matrix)}
        if a.unchecked:
            out["unchecked"] = True
        return out
    if isinstance(a, NormalCone):
        return {"type": "normal_cone", "set": set_to_json(a.cset)}
    if isinstance(a, SubdiffL1):
        return {"type": "subdiff_l1", "lam": a.lam, "dim": a.dim}
    if isinstance(a, ConstantShift):
        return {"type": "shift", "v": a.shift.tolist(), "base": atom_to_json(a.base)}
    raise TypeError(f"unknown atom {a!r}")


def atom_from_json(obj):
    from .linalg import matrix_from_json
    try:
        kind = obj["type"]
        if kind == "zero":
            return Zero(int(obj["dim"]))
        if kind == "scaled_identity":
            return ScaledIdentity(obj["alpha"], int(obj["dim"]))
        if kind == "linear":
            return LinearMonotone(matrix_from_json(obj["matrix"]), bool(obj.get("unchecked", False)))
        if kind == "normal_cone":
            return NormalCone(set_from_json(obj["set"]))
        if kind == "subdiff_l1":
            return SubdiffL1(obj["lam"], int(obj["dim"]))
        if kind == "shift":
            return ConstantShift(obj["v"], atom_from_json(obj["base"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed atom {obj!r}: {exc}") from exc
    raise ParseError(f"unknown atom type {obj.get('type')!r}")
