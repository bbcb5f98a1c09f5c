"""Dense real linear algebra for small dimensions (n <= 64).

Vectors and matrices are plain float64 numpy arrays.  The kernels that
matter for exactness (spectral norm, elimination, Jacobi eigen/SVD) are
written out here so their tolerances and seeding are pinned; numpy is used
only for array arithmetic.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, IterationLimit, NotPSD, NotSymmetric, Singular
from .rng import generator

MAX_DIM = 64
CLASSIFY_TOL = 1e-10
RANK_TOL = 1e-10


def as_vector(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector entries must be finite")
    return x


def as_matrix(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2 or a.size == 0:
        raise DimensionMismatch(f"expected a nonempty matrix, got shape {a.shape}")
    if max(a.shape) > MAX_DIM:
        raise DimensionMismatch(f"dimension {max(a.shape)} exceeds {MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# -- spectral norm -----------------------------------------------------------

def operator_norm(m, tol=1e-12, max_iter=100_000):
    """Largest singular value of ``m`` by power iteration on ``m.T @ m``.

    The seed vector is the normalized all-ones vector.  If it lies in the
    kernel (or the iteration stagnates at zero) one restart is made from a
    fixed pseudo-random vector.  Every 50 steps the iteration matrix is
    squared, so clustered top singular values still converge quickly.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = as_matrix(m)
    if not np.any(m):
        return 0.0
    gram = m.T @ m
    n = gram.shape[0]
    starts = [np.ones(n) / np.sqrt(n)]
    restart = generator(0x5EED).normals((n,))
    starts.append(restart / np.linalg.norm(restart))
    for v in starts:
        a = gram
        for it in range(max_iter):
            w = gram @ v
            lam = float(v @ w)
            if np.linalg.norm(w) == 0.0:
                break
            if np.linalg.norm(w - lam * v) <= tol * abs(lam):
                return float(np.sqrt(max(lam, 0.0)))
            if it % 50 == 49:
                # clustered top singular values: iterate with a squared power instead
                a = a @ a
                a = a / np.max(np.abs(a))
            u = a @ v
            un = np.linalg.norm(u)
            if un == 0.0:
                break
            v = u / un
        else:
            raise IterationLimit(f"power iteration did not converge in {max_iter} steps")
    return 0.0


# -- elimination ---------------------------------------------------------------

def solve(a, b):
    """Solve ``a x = b`` by Gaussian elimination with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides (one per column).
    """
    a = as_matrix(a)
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionMismatch(f"solve needs a square matrix, got {a.shape}")
    b = np.asarray(b, dtype=float)
    vec = b.ndim == 1
    rhs = b.reshape(n, -1).copy() if b.shape[0] == n else None
    if rhs is None:
        raise DimensionMismatch(f"rhs has {b.shape[0]} rows, matrix has {n}")
    work = a.copy()
    pivot_tol = 1e-12 * np.max(np.abs(a))
    for k in range(n):
        p = k + int(np.argmax(np.abs(work[k:, k])))
        if abs(work[p, k]) <= pivot_tol:
            raise Singular(f"pivot {abs(work[p, k]):.3e} below {pivot_tol:.3e} at column {k}")
        if p != k:
            work[[k, p]] = work[[p, k]]
            rhs[[k, p]] = rhs[[p, k]]
        factors = work[k + 1:, k] / work[k, k]
        work[k + 1:, k:] -= np.outer(factors, work[k, k:])
        rhs[k + 1:] -= np.outer(factors, rhs[k])
    x = np.empty_like(rhs)
    for k in range(n - 1, -1, -1):
        x[k] = (rhs[k] - work[k, k + 1:] @ x[k + 1:]) / work[k, k]
    return x[:, 0] if vec else x


def inverse(a):
    a = as_matrix(a)
    return solve(a, np.eye(a.shape[0]))


# -- Jacobi methods ------------------------------------------------------------

def symmetric_eig(s, tol=1e-10, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, q)`` with ascending eigenvalues ``w`` and orthonormal
    eigenvectors in the columns of ``q``.
    """
    s = as_matrix(s)
    n = s.shape[0]
    if s.shape[1] != n:
        raise DimensionMismatch("eigen-decomposition needs a square matrix")
    scale = max(np.max(np.abs(s)), 1.0)
    if np.max(np.abs(s - s.T)) > tol * scale:
        raise NotSymmetric(f"asymmetry {np.max(np.abs(s - s.T)):.3e} exceeds tolerance")
    a = 0.5 * (s + s.T)
    q = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= 1e-15 * max(np.linalg.norm(a), 1e-300):
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if apr == 0.0:
                    continue
                theta = (a[r, r] - a[p, p]) / (2.0 * apr)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                ap, ar = a[:, p].copy(), a[:, r].copy()
                a[:, p], a[:, r] = c * ap - sn * ar, sn * ap + c * ar
                ap, ar = a[p, :].copy(), a[r, :].copy()
                a[p, :], a[r, :] = c * ap - sn * ar, sn * ap + c * ar
                qp, qr = q[:, p].copy(), q[:, r].copy()
                q[:, p], q[:, r] = c * qp - sn * qr, sn * qp + c * qr
    else:
        raise IterationLimit("cyclic Jacobi did not converge")
    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], q[:, order]


def jacobi_svd(m, max_sweeps=100):
    """Thin SVD ``m = u @ diag(sv) @ vt`` by one-sided (Hestenes) Jacobi."""
    m = as_matrix(m)
    rows, cols = m.shape
    if rows < cols:
        u, sv, vt = jacobi_svd(m.T, max_sweeps)
        return vt.T, sv, u.T
    # work on a copy scaled to max entry 1 so squared norms neither under- nor overflow
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    if scale == 0.0:
        return np.zeros((rows, cols)), np.zeros(cols), np.eye(cols)
    work = m / scale
    v = np.eye(cols)
    eps = np.finfo(float).eps
    tol = max(rows, 1) * eps
    # columns below this squared norm are numerically zero and never rotated
    floor = (eps * np.linalg.norm(work)) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for p in range(cols - 1):
            for r in range(p + 1, cols):
                alpha = work[:, p] @ work[:, p]
                beta = work[:, r] @ work[:, r]
                if alpha <= floor or beta <= floor:
                    continue
                gamma = work[:, p] @ work[:, r]
                if abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if abs(zeta) > 1e150:
                    t = 0.5 / zeta
                else:
                    t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta)) if zeta != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                wp, wr = work[:, p].copy(), work[:, r].copy()
                work[:, p], work[:, r] = c * wp - s * wr, s * wp + c * wr
                vp, vr = v[:, p].copy(), v[:, r].copy()
                v[:, p], v[:, r] = c * vp - s * vr, s * vp + c * vr
        if not rotated:
            break
    else:
        raise IterationLimit("one-sided Jacobi SVD did not converge")
    sv = np.linalg.norm(work, axis=0)
    order = np.argsort(-sv)
    sv, work, v = sv[order], work[:, order], v[:, order]
    u = np.zeros_like(work)
    nz = sv > 0
    u[:, nz] = work[:, nz] / sv[nz]
    sv = sv * scale
    return u, sv, v.T


def pseudo_inverse(m, rank_tol=RANK_TOL):
    """Moore-Penrose inverse through the Jacobi SVD."""
    if isinstance(m, LinearMap):
        m = m.matrix
    m = as_matrix(m)
    u, sv, vt = jacobi_svd(m)
    if sv.size == 0 or sv[0] == 0.0:
        return np.zeros((m.shape[1], m.shape[0]))
    keep = sv > rank_tol * sv[0]
    return (vt[keep].T / sv[keep]) @ u[:, keep].T


def sqrt_psd(s, tol=1e-10):
    """Symmetric PSD square root; eigenvalues in [-tol, 0) are clamped to 0."""
    w, q = symmetric_eig(s, tol=tol)
    if w[0] < -tol:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} below -{tol:g}")
    root = (q * np.sqrt(np.clip(w, 0.0, None))) @ q.T
    return 0.5 * (root + root.T)


# -- linear maps -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearMap:
    """A dense matrix viewed as a map ``R^cols -> R^rows``.

    ``norm_estimate`` and the isometry/coisometry flags are computed once at
    construction; the flags are decided against ``tol`` on the max-entry
    norm of ``M^T M - I`` and ``M M^T - I``.
    """

    matrix: np.ndarray
    tol: float = CLASSIFY_TOL
    norm_estimate: float = field(init=False)
    is_isometry: bool = field(init=False)
    is_coisometry: bool = field(init=False)

    def __post_init__(self):
        m = _frozen(as_matrix(self.matrix))
        object.__setattr__(self, "matrix", m)
        try:
            norm = operator_norm(m)
        except IterationLimit:
            norm = float(jacobi_svd(m)[1][0])
        object.__setattr__(self, "norm_estimate", norm)
        iso = np.max(np.abs(m.T @ m - np.eye(m.shape[1]))) <= self.tol
        coiso = np.max(np.abs(m @ m.T - np.eye(m.shape[0]))) <= self.tol
        object.__setattr__(self, "is_isometry", bool(iso))
        object.__setattr__(self, "is_coisometry", bool(coiso))

    @classmethod
    def identity(cls, n, scale=1.0):
        return cls(scale * np.eye(n))

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def cols(self):
        return self.matrix.shape[1]

    @property
    def shape(self):
        return self.matrix.shape

    def adjoint(self):
        return LinearMap(self.matrix.T, tol=self.tol)

    def compose(self, other):
        """The map ``self o other``."""
        if other.rows != self.cols:
            raise DimensionMismatch(f"cannot compose {self.shape} after {other.shape}")
        return LinearMap(self.matrix @ other.matrix, tol=self.tol)

    def scaled_coisometry_factor(self):
        """``mu`` with ``M M^T = mu I`` (within tol), else ``None``."""
        g = self.matrix @ self.matrix.T
        mu = float(np.trace(g)) / g.shape[0]
        if mu > 0 and np.max(np.abs(g - mu * np.eye(g.shape[0]))) <= self.tol * max(1.0, mu):
            return mu
        return None

    def __call__(self, x):
        return apply(self, x)

    def __eq__(self, other):
        return isinstance(other, LinearMap) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())


def as_linear_map(obj):
    return obj if isinstance(obj, LinearMap) else LinearMap(obj)


def apply(lmap, x):
    """Matrix-vector product; a 2-D ``x`` is treated as a batch of rows."""
    lmap = as_linear_map(lmap)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != lmap.cols:
        raise DimensionMismatch(f"map expects dimension {lmap.cols}, got {x.shape[-1]}")
    return x @ lmap.matrix.T


def apply_adjoint(lmap, y):
    lmap = as_linear_map(lmap)
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != lmap.rows:
        raise DimensionMismatch(f"adjoint expects dimension {lmap.rows}, got {y.shape[-1]}")
    return y @ lmap.matrix


# -- inner products ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InnerProduct:
    """Standard dot product, or the weighted form built from a map ``L``.

    The weighted form is ``<x, y>_X = <Lx, Ly> + <x, P y>`` with ``P`` the
    projector onto ``ker L``; its Gram matrix is ``L^T L + P``.
    """

    dim: int
    lmap: LinearMap = None
    kernel_projector: np.ndarray = None
    gram: np.ndarray = None

    @classmethod
    def standard(cls, dim):
        return cls(dim=int(dim))

    @classmethod
    def weighted(cls, lmap, rank_tol=RANK_TOL):
        lmap = as_linear_map(lmap)
        n = lmap.cols
        proj = np.eye(n) - pseudo_inverse(lmap.matrix, rank_tol) @ lmap.matrix
        proj = _frozen(0.5 * (proj + proj.T))
        gram = _frozen(lmap.matrix.T @ lmap.matrix + proj)
        return cls(dim=n, lmap=lmap, kernel_projector=proj, gram=gram)

    @property
    def is_standard(self):
        return self.gram is None

    def dot(self, x, y):
        return weighted_dot(self, x, y)

    def norm(self, x):
        return np.sqrt(np.maximum(weighted_dot(self, x, x), 0.0))


def weighted_dot(ip, x, y):
    """Inner product of ``x`` and ``y`` (row-wise for 2-D inputs)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != ip.dim or y.shape[-1] != ip.dim:
        raise DimensionMismatch(f"inner product on R^{ip.dim} got {x.shape[-1]} and {y.shape[-1]}")
    if ip.gram is None:
        return np.sum(x * y, axis=-1)
    return np.sum((x @ ip.gram) * y, axis=-1)


# -- serialization -------------------------------------------------------------

def matrix_to_json(m):
    if isinstance(m, LinearMap):
        m = m.matrix
    m = np.asarray(m, dtype=float)
    return {"rows": int(m.shape[0]), "cols": int(m.shape[1]), "data": [float(v) for v in m.ravel()]}


def matrix_from_json(obj):
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed matrix object: {exc}") from exc
    if len(data) != rows * cols:
        raise DimensionMismatch(f"matrix data has {len(data)} entries, expected {rows * cols}")
    return np.array(data, dtype=float).reshape(rows, cols)
