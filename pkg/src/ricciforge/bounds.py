"""Pointwise curvature data, sectional-curvature extrema and the traceless eigenvalue bound."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.linalg
from scipy.optimize import minimize, minimize_scalar

from .errors import BoundViolationError, DimensionMismatchError
from .tensors import check_positive, curvature_symmetry_defects, kulkarni_nomizu, sym2_eigen


@dataclass
class PointCurvatureData:
    """Metric, curvature tensor and Ricci tensor at one point."""

    g: np.ndarray
    riem: np.ndarray
    ric: np.ndarray = field(default=None)

    def __post_init__(self):
        self.g = check_positive(self.g)
        self.riem = np.asarray(self.riem, dtype=float)
        n = self.g.shape[0]
        if self.riem.shape != (n,) * 4:
            raise DimensionMismatchError("curvature tensor does not match the metric")
        if max(curvature_symmetry_defects(self.riem)) > 1e-12:
            raise ValueError("curvature tensor lacks the algebraic curvature symmetries")
        ric = ricci_trace(self.riem, self.g)
        if self.ric is None:
            self.ric = ric
        elif np.max(np.abs(self.ric - ric)) > 1e-11 * max(np.max(np.abs(ric)), 1.0):
            raise ValueError("Ricci tensor is not the trace of the curvature tensor")

    @property
    def n(self):
        return self.g.shape[0]

    @property
    def ric_min(self):
        return float(sym2_eigen(self.ric, self.g)[0][0])

    def orthonormal(self):
        """The same data in a g-orthonormal frame (metric becomes the identity)."""
        e = np.linalg.inv(np.linalg.cholesky(self.g)).T  # columns orthonormal
        riem = np.einsum("abcd,ai,bj,ck,dl->ijkl", self.riem, e, e, e, e)
        return PointCurvatureData(np.eye(self.n), riem)

    def sectional(self, u, v):
        """``Riem(u, v, u, v) / (|u|^2 |v|^2 - <u, v>^2)``."""
        num = np.einsum("abcd,a,b,c,d->", self.riem, u, v, u, v)
        uu, vv, uv = u @ self.g @ u, v @ self.g @ v, u @ self.g @ v
        return float(num / (uu * vv - uv * uv))


def ricci_trace(riem, g):
    """``Ric_kj = g^ab Riem_akbj``."""
    return np.einsum("ab,akbj->kj", np.linalg.inv(g), riem)


def constant_curvature_data(n, K, g=None):
    g = np.eye(n) if g is None else np.asarray(g, dtype=float)
    return PointCurvatureData(g, 0.5 * K * kulkarni_nomizu(g, g))


def product_curvature_data(blocks):
    """Orthonormal-frame model of a product of constant-curvature factors ``[(dim, K), ...]``."""
    n = sum(d for d, _ in blocks)
    riem = np.zeros((n,) * 4)
    start = 0
    for d, K in blocks:
        p = np.zeros((n, n))
        p[start:start + d, start:start + d] = np.eye(d)
        riem += 0.5 * K * kulkarni_nomizu(p, p)
        start += d
    return PointCurvatureData(np.eye(n), riem)


def random_curvature_data(n, rng, terms=4, random_metric=True, amplitude=1.0, base_curvature=0.0):
    """Sum of Kulkarni-Nomizu products of random symmetric matrices, on a random metric.

    ``base_curvature`` adds a constant-curvature part so that near-equality
    cases are also sampled.
    """
    riem = np.zeros((n,) * 4)
    for _ in range(terms):
        a = rng.standard_normal((n, n))
        b = rng.standard_normal((n, n))
        riem += kulkarni_nomizu(a + a.T, b + b.T) * rng.uniform(-0.5, 0.5) * amplitude
    if random_metric:
        m = rng.standard_normal((n, n)) * 0.3
        g = np.eye(n) + 0.5 * (m + m.T)
        g = g if np.linalg.eigvalsh(g).min() > 0.2 else np.eye(n)
    else:
        g = np.eye(n)
    return PointCurvatureData(g, riem + 0.5 * base_curvature * kulkarni_nomizu(g, g))


# -- sectional curvature -----------------------------------------------------------------------

def curvature_operator(data: PointCurvatureData):
    """Matrix of the curvature operator on orthonormal 2-vectors ``e_a ^ e_b``, ``a < b``."""
    on = data.orthonormal()
    pairs = list(combinations(range(data.n), 2))
    R = np.array([[on.riem[a, b, c, d] for c, d in pairs] for a, b in pairs])
    return 0.5 * (R + R.T), pairs


def _hodge_star4(pairs):
    """Hodge star on 2-vectors of an oriented orthonormal frame in dimension four."""
    idx = {p: i for i, p in enumerate(pairs)}
    S = np.zeros((6, 6))
    for (a, b) in pairs:
        c, d = [i for i in range(4) if i not in (a, b)]
        sign = np.linalg.det(np.eye(4)[[a, b, c, d]])
        S[idx[(c, d)], idx[(a, b)]] = sign
    return S


def eigen_bounds(data: PointCurvatureData):
    """Rigorous ``(lower, upper)`` brackets of the sectional curvatures.

    Uses the extreme eigenvalues of the curvature operator; in dimension four
    the star operator shifts the spectrum without changing decomposable
    values, and the best shift is used on each side.
    """
    n = data.n
    if n == 2:
        k = float(data.orthonormal().riem[0, 1, 0, 1])
        return k, k
    R, pairs = curvature_operator(data)
    if n != 4:
        w = np.linalg.eigvalsh(R)
        return float(w[0]), float(w[-1])
    S = _hodge_star4(pairs)
    lo = minimize_scalar(lambda mu: -np.linalg.eigvalsh(R + mu * S)[0], bounds=(-50, 50), method="bounded",
                         options={"xatol": 1e-12})
    hi = minimize_scalar(lambda mu: np.linalg.eigvalsh(R + mu * S)[-1], bounds=(-50, 50), method="bounded",
                         options={"xatol": 1e-12})
    lower = max(-lo.fun, np.linalg.eigvalsh(R)[0])
    upper = min(hi.fun, np.linalg.eigvalsh(R)[-1])
    return float(lower), float(upper)


def _structured_planes(n):
    basis = np.eye(n)
    vecs = list(basis)
    for a, b in combinations(range(n), 2):
        vecs.append((basis[a] + basis[b]) / np.sqrt(2))
        vecs.append((basis[a] - basis[b]) / np.sqrt(2))
    for u, v in combinations(vecs, 2):
        yield u, v


def grid_search_extrema(data: PointCurvatureData, rng, samples=10_000, refine=4):
    """Sampled sectional extrema over 2-planes, polished by local optimization."""
    on = data.orthonormal()
    n = data.n
    planes = list(_structured_planes(n))
    U = rng.standard_normal((samples, n))
    V = rng.standard_normal((samples, n))
    planes += list(zip(U, V))
    U = np.array([p[0] for p in planes], dtype=float)
    V = np.array([p[1] for p in planes], dtype=float)
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    V -= np.einsum("sa,sa->s", U, V)[:, None] * U
    vn = np.linalg.norm(V, axis=1)
    ok = vn > 1e-8
    U, V = U[ok], V[ok] / vn[ok, None]
    K = np.einsum("abcd,sa,sb,sc,sd->s", on.riem, U, V, U, V)

    def quotient(x, sign):
        u = x[:n] / np.linalg.norm(x[:n])
        v = x[n:] - (u @ x[n:]) * u
        nv = np.linalg.norm(v)
        if nv < 1e-8:
            return np.inf
        v = v / nv
        return sign * np.einsum("abcd,a,b,c,d->", on.riem, u, v, u, v)

    extremes = []
    for sign, order in ((1.0, np.argsort(K)), (-1.0, np.argsort(-K))):
        best = sign * K[order[0]]
        for i in order[:refine]:
            res = minimize(quotient, np.concatenate([U[i], V[i]]), args=(sign,), method="BFGS",
                           options={"gtol": 1e-12})
            if np.isfinite(res.fun):
                best = min(best, res.fun)
        extremes.append(sign * best)
    return float(extremes[0]), float(extremes[1]), len(planes)


def sectional_extrema(data: PointCurvatureData, method="grid_search", rng=None, samples=10_000):
    """``(K_min, K_max)`` over 2-planes by sampling or by the curvature-operator bracket."""
    if data.n not in (2, 3, 4):
        raise ValueError("sectional extrema are supported for n = 2, 3, 4")
    if method == "eigen_bound":
        return eigen_bounds(data)
    if method == "grid_search":
        rng = np.random.default_rng(0) if rng is None else rng
        kmin, kmax, _ = grid_search_extrema(data, rng, samples)
        return kmin, kmax
    raise ValueError(f"unknown method {method!r}")


# -- traceless eigenvalue bound ------------------------------------------------------------------

def traceless_basis(n):
    """Frobenius-orthonormal basis of traceless symmetric ``n x n`` matrices."""
    mats = []
    for a, b in combinations(range(n), 2):
        m = np.zeros((n, n))
        m[a, b] = m[b, a] = 2 ** -0.5
        mats.append(m)
    for k in range(1, n):
        m = np.zeros((n, n))
        m[np.arange(k), np.arange(k)] = 1.0
        m[k, k] = -k
        mats.append(m / np.sqrt(k * (k + 1)))
    return mats


def ric_minus_riem(data: PointCurvatureData, u):
    """``(Ric o u - Riem o u)`` in an orthonormal frame."""
    a = data.ric @ u
    return 0.5 * (a + a.T) - np.einsum("ikjl,kl->ij", data.riem, u)


def traceless_operator_spectrum(data: PointCurvatureData):
    """Eigenvalues of ``Ric o - Riem o`` restricted to traceless symmetric tensors."""
    on = data.orthonormal()
    basis = traceless_basis(data.n)
    M = np.array([[np.sum(b * ric_minus_riem(on, c)) for c in basis] for b in basis])
    return scipy.linalg.eigvalsh(0.5 * (M + M.T))


def fujitani_bound(ric_min, k_min, k_max, n):
    return min(2 * ric_min - (n - 2) * k_max, n * k_min)


def fujitani_check(data: PointCurvatureData, method="eigen_bound", rng=None, samples=10_000, tol=1e-10):
    """Exact traceless minimum against ``min{2 Ric_min - (n-2) K_max, n K_min}``.

    Raises :class:`BoundViolationError` when the minimum falls below the bound.
    """
    k_min, k_max = sectional_extrema(data, method, rng, samples)
    ric_min = data.ric_min
    bound = fujitani_bound(ric_min, k_min, k_max, data.n)
    exact = float(traceless_operator_spectrum(data)[0])
    row = {"Ric_min": ric_min, "K_min": k_min, "K_max": k_max, "bound": bound,
           "exact_min": exact, "margin": exact - bound}
    if exact < bound - tol:
        raise BoundViolationError(f"traceless minimum {exact:.6g} below bound {bound:.6g}")
    return row
