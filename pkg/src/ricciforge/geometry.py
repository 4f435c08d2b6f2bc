"""Riemannian geometry of a metric given as a tensor field.

:class:`Geometry` works on any :class:`~ricciforge.fields.TensorField`
backend.  With jets it is exact pointwise calculus on a chart; with torus
grid fields it is the global pseudo-spectral calculus.  All tensors are fully
covariant; indices are raised explicitly with ``ginv``.

Conventions (fixed so that round spheres have positive curvature and
``Delta cos(x1) = +cos(x1)`` on a flat chart):

* ``R^l_kij = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik``
* ``Riem_lkij = g_lp R^p_kij``, sectional curvature ``K(e_a, e_b) = Riem_abab``
* ``Ric_kj = R^i_kij``, ``Delta = -g^ij nabla_i nabla_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import jets as J
from .errors import MissingDirectionError, ParameterGuardError
from .fields import contract, sym
from .tensors import kulkarni_nomizu, ric_action, riem_action

SQRT2 = math.sqrt(2.0)
_IDX = "abcdefg"


def check_kappa(kappa, n):
    """Reject the two excluded values of kappa for Ein-type operators."""
    for bad, label in ((-1.0 / n, "-1/n"), (-1.0 / (2 * (n - 1)), "-1/(2(n-1))")):
        if abs(kappa - bad) < 1e-14:
            raise ParameterGuardError(f"kappa = {kappa} hits the excluded value {label} for n={n}")


def ein4_constants(a, kappa, lam, n):
    """``(b, c)`` making the trace of the 4-tensor proportional to Ein."""
    b = (kappa * (1 + a * (n - 2)) - a) / (2 * (n - 1))
    c = (1 + (n - 2) * a) * lam / (2 * (n - 1))
    return b, c


class Geometry:
    """Levi-Civita calculus of the metric ``g`` (shape ``(n, n)``)."""

    def __init__(self, g, ginv=None):
        self.g = g
        self.n = g.shape[0]
        if ginv is not None:
            self.__dict__["ginv"] = ginv

    # -- metric data --------------------------------------------------------------
    @cached_property
    def ginv(self):
        return self.g.inv(spd=True)

    @cached_property
    def christoffel(self):
        """``Gamma[k, i, j] = Gamma^k_ij``."""
        dg = self.g.d()  # dg[l, i, j] = d_l g_ij
        # first[i, j, l] = (d_i g_jl + d_j g_il - d_l g_ij) / 2
        first = 0.5 * (dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0))
        return contract("kl,ijl->kij", self.ginv, first)

    @cached_property
    def riemann_up(self):
        """``R[l, k, i, j] = R^l_kij``."""
        G = self.christoffel
        dG = G.d()  # dG[i, l, j, k] = d_i Gamma^l_jk
        t1 = dG.transpose(1, 3, 0, 2)
        quad = contract("lim,mjk->lkij", G, G)
        return t1 - t1.transpose(0, 1, 3, 2) + quad - quad.transpose(0, 1, 3, 2)

    @cached_property
    def riemann(self):
        """Fully covariant ``Riem_lkij``."""
        return contract("pl,lkij->pkij", self.g, self.riemann_up)

    @cached_property
    def ricci(self):
        return sym(contract("ikij->kj", self.riemann_up))

    @cached_property
    def scalar(self):
        return contract("kj,kj->", self.ginv, self.ricci)

    @property
    def budget(self):
        """Jet orders still exact in the curvature (jets only)."""
        return getattr(self.ricci, "valid", None)

    # -- first-order building blocks ---------------------------------------------
    def cov(self, t):
        """Covariant derivative, derivative index first: ``out[m, ...] = nabla_m t``."""
        rank = len(t.shape)
        out = t.d()
        idx = _IDX[:rank]
        for s in range(rank):
            src = idx[:s] + "z" + idx[s + 1:]
            out = out - contract(f"zy{idx[s]},{src}->y{idx}", self.christoffel, t)
        return out

    def hessian_cov(self, t):
        """``out[i, j, ...] = nabla_i nabla_j t``."""
        return self.cov(self.cov(t))

    def trace(self, u):
        return contract("ij,ij->", self.ginv, u)

    def inner(self, u, v):
        return contract("ia,jb,ij,ab->", self.ginv, self.ginv, u, v)

    def raise_all(self, u):
        return contract("ia,jb,ab->ij", self.ginv, self.ginv, u)

    def lower_all(self, u):
        return contract("ia,jb,ab->ij", self.g, self.g, u)

    def scalar_times(self, f, t):
        idx = _IDX[:len(t.shape)]
        return contract(f",{idx}->{idx}", f, t)

    def endo(self, r, omega):
        """Symmetric 2-tensor as endomorphism of 1-forms: ``(r w)_j = r^k_j w_k``."""
        return contract("kl,lj,k->j", self.ginv, r, omega)

    def endo_inverse(self, r, omega):
        m = contract("jl,lk->jk", r, self.ginv)
        return contract("jk,k->j", m.inv(), omega)

    # -- section 2 operators ------------------------------------------------------
    def rough_laplacian(self, t):
        idx = _IDX[:len(t.shape)]
        return -contract(f"ij,ij{idx}->{idx}", self.ginv, self.hessian_cov(t))

    def div(self, u):
        """``(div u)_i = -nabla^j u_ji``."""
        return -contract("jk,kji->i", self.ginv, self.cov(u))

    def codiff(self, omega):
        """``d* w = -nabla^i w_i``."""
        return -contract("ij,ij->", self.ginv, self.cov(omega))

    def d(self, f):
        return f.d()

    def d_form(self, omega):
        """Exterior derivative of a 1-form: ``(dw)_ij = d_i w_j - d_j w_i``."""
        dw = omega.d()
        return dw - dw.transpose(1, 0)

    def codiff_2form(self, alpha):
        """``(d* a)_j = -nabla^i a_ij``."""
        return -contract("mi,mij->j", self.ginv, self.cov(alpha))

    def killing_sym(self, omega):
        """``(L w)_ij = (nabla_i w_j + nabla_j w_i) / 2``."""
        return sym(self.cov(omega))

    def ric_action(self, u):
        return ric_action(self.ricci, u, self.ginv)

    def riem_action(self, u):
        return riem_action(self.riemann, u, self.ginv)

    def lichnerowicz(self, u):
        return self.rough_laplacian(u) + 2.0 * (self.ric_action(u) - self.riem_action(u))

    def hodge(self, omega):
        """``Delta_H = Delta + Ric`` on 1-forms."""
        return self.rough_laplacian(omega) + self.endo(self.ricci, omega)

    def hodge_dd(self, omega):
        """``d d* + d* d`` assembled from exterior derivatives (cross-check path)."""
        return self.d(self.codiff(omega)) + self.codiff_2form(self.d_form(omega))

    def bianchi(self, u):
        """``B_g(u) = div u + d(Tr u) / 2``."""
        return self.div(u) + 0.5 * self.d(self.trace(u))

    def gen_bianchi(self, e, kappa):
        n = self.n
        check_kappa(kappa, n)
        coef = (2 * kappa + 1) / (2 * (1 + kappa * n))
        return self.div(e) + coef * self.d(self.trace(e))

    def D(self, u):
        """``(Du)_kij = (nabla_k u_ij - nabla_j u_ik) / sqrt 2``."""
        nu = self.cov(u)
        return (nu - nu.transpose(2, 1, 0)) / SQRT2

    def D_star(self, t):
        """Formal adjoint of :meth:`D` on 3-tensors."""
        nt = self.cov(t)  # nt[m, a, b, c] = nabla_m t_abc
        t1 = contract("mk,mkij->ij", self.ginv, nt)
        t3 = contract("mk,mijk->ij", self.ginv, nt)
        return (-t1 - t1.transpose(1, 0) + t3 + t3.transpose(1, 0)) / (2 * SQRT2)

    def kodaira(self, u):
        """``D*D + L L*`` with ``L* = div``."""
        return self.D_star(self.D(u)) + self.killing_sym(self.div(u))

    # -- curvature operators -------------------------------------------------------
    def ein(self, kappa, lam):
        """``Ric + kappa R g + Lambda g``."""
        check_kappa(kappa, self.n)
        return self.ricci + self.scalar_times(kappa * self.scalar, self.g) + lam * self.g

    def ein4(self, a, kappa, lam):
        check_kappa(kappa, self.n)
        b, c = ein4_constants(a, kappa, lam, self.n)
        inner = a * self.ricci + self.scalar_times(b * self.scalar, self.g) + c * self.g
        return self.riemann + kulkarni_nomizu(self.g, inner)

    def trace4(self, t):
        """Contraction of slots 1 and 3, mapping Riem to Ric."""
        return contract("ab,akbj->kj", self.ginv, t)

    def ric_contra(self):
        return contract("ia,ab,bj->ij", self.ginv, self.ricci, self.ginv)

    def bianchi_contra(self, rbar):
        return self.bianchi(contract("ia,ab,bj->ij", self.g, rbar, self.g))

    def T_gR(self, r, h):
        """``[T(g,R)h]_j = (nabla^k R^l_j + nabla^l R^k_j - nabla_j R^kl) h_kl / 2``."""
        nr = self.cov(r)
        gi = self.ginv
        t1 = contract("km,lb,mbj,kl->j", gi, gi, nr, h)
        t2 = contract("lm,kb,mbj,kl->j", gi, gi, nr, h)
        t3 = contract("ka,lb,jab,kl->j", gi, gi, nr, h)
        return 0.5 * (t1 + t2 - t3)

    def T_Eh(self, e, h):
        """``T(E,h)_j = (nabla_k E_jl + nabla_l E_kj - nabla_j E_kl) h^kl / 2``."""
        ne = self.cov(e)
        hup = self.raise_all(h)
        t1 = contract("kjl,kl->j", ne, hup)
        t2 = contract("lkj,kl->j", ne, hup)
        t3 = contract("jkl,kl->j", ne, hup)
        return 0.5 * (t1 + t2 - t3)

    # -- gauge operators -----------------------------------------------------------
    def gauge_operator(self, omega, variant="ricci", kappa=0.0, lam=0.0):
        """``B_g(L_g w) + A w`` with ``A`` = Ric, -Ric or Ein by variant."""
        bl = self.bianchi(self.killing_sym(omega))
        if variant == "ricci":
            return bl + self.endo(self.ricci, omega)
        if variant == "contra":
            return bl - self.endo(self.ricci, omega)
        if variant == "ein":
            return bl + self.endo(self.ein(kappa, lam), omega)
        raise ValueError(f"unknown gauge variant {variant!r}")

    def gauge_operator_closed_form(self, omega, variant="ricci", kappa=0.0, lam=0.0):
        """The same operators written through the Hodge Laplacian."""
        hw = self.hodge(omega)
        if variant == "ricci":
            return 0.5 * hw
        if variant == "contra":
            return 0.5 * (hw - 4.0 * self.endo(self.ricci, omega))
        if variant == "ein":
            check_kappa(kappa, self.n)
            return 0.5 * hw + self.scalar_times(kappa * self.scalar, omega) + lam * omega
        raise ValueError(f"unknown gauge variant {variant!r}")

    def ricci_parallel_defect(self):
        """``(|nabla Ric|, |Ric|)`` at the base point (jets) or sup over nodes."""
        return _size(self.cov(self.ricci)), _size(self.ricci)


def _size(t):
    v = t.value() if hasattr(t, "value") else np.asarray(t)
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


# -- operator dispatch ---------------------------------------------------------------

_ORDER_NEEDED = {
    "rough_laplacian": 2, "lichnerowicz": 2, "hodge": 2, "kodaira": 2,
    "divergence": 1, "killing_sym": 1, "bianchi": 1, "gen_bianchi": 1,
    "D": 1, "D_star": 1, "bianchi_contra": 1, "codifferential": 1,
    "ein": 0, "ein4": 0, "ric_contra": 0,
}

OPERATOR_TAGS = tuple(_ORDER_NEEDED)


@dataclass(frozen=True)
class OpRequest:
    tag: str
    field: object = None
    kappa: float = 0.0
    lam: float = 0.0
    a: float = 0.0

    def __post_init__(self):
        if self.tag not in _ORDER_NEEDED:
            raise ValueError(f"unknown operator tag {self.tag!r}")


def operator_apply(req: OpRequest, geom: Geometry):
    """Evaluate one tagged operator on ``req.field`` with geometry ``geom``."""
    tag, u = req.tag, req.field
    if tag in ("ein", "ein4", "gen_bianchi"):
        check_kappa(req.kappa, geom.n)
    table = {
        "rough_laplacian": lambda: geom.rough_laplacian(u),
        "lichnerowicz": lambda: geom.lichnerowicz(u),
        "hodge": lambda: geom.hodge(u),
        "kodaira": lambda: geom.kodaira(u),
        "divergence": lambda: geom.div(u),
        "codifferential": lambda: geom.codiff(u),
        "killing_sym": lambda: geom.killing_sym(u),
        "bianchi": lambda: geom.bianchi(u),
        "gen_bianchi": lambda: geom.gen_bianchi(u, req.kappa),
        "D": lambda: geom.D(u),
        "D_star": lambda: geom.D_star(u),
        "ein": lambda: geom.ein(req.kappa, req.lam),
        "ein4": lambda: geom.ein4(req.a, req.kappa, req.lam),
        "ric_contra": lambda: geom.ric_contra(),
        "bianchi_contra": lambda: geom.bianchi_contra(u),
    }
    return table[tag]()


# -- chart metrics as jets -------------------------------------------------------------

@dataclass(frozen=True)
class ChartMetricJet:
    """Metric jet on a chart, optionally with a perturbation direction ``h``."""

    g: J.Jet
    h: J.Jet | None = None

    @property
    def dim(self):
        return self.g.dim

    @property
    def order(self):
        return self.g.order

    def perturbed(self):
        """``g + t h`` as a jet carrying the tangent direction."""
        if self.h is None:
            raise MissingDirectionError("linearization needs a direction h")
        return self.g.with_tangent(self.h)

    def geometry(self):
        return Geometry(self.g)

    def perturbed_geometry(self):
        return Geometry(self.perturbed())


def _eye(alg):
    return J.constant(alg, np.eye(alg.dim))


def flat_metric(alg):
    return _eye(alg)


def conformal_metric(factor):
    """``factor * delta`` for a scalar jet ``factor``."""
    return factor * _eye(factor.alg)


def constant_curvature_metric(alg, K=1.0, coords=None):
    """Stereographic chart ``4 delta / (1 + K |x|^2)^2`` of curvature ``K``.

    ``coords`` restricts the metric to a subset of the chart variables.
    """
    coords = list(range(alg.dim)) if coords is None else list(coords)
    xs = J.coordinates(alg)
    r2 = sum((xs[i] * xs[i] for i in coords), J.constant(alg, 0.0))
    factor = 4.0 * J.power(1.0 + K * r2, -2.0)
    eye = np.zeros((alg.dim, alg.dim))
    eye[coords, coords] = 1.0
    return factor * J.constant(alg, eye)


def product_metric(alg, blocks):
    """Block-diagonal product of constant-curvature factors.

    ``blocks`` is a list of ``(block_dim, K)``.
    """
    start = 0
    g = None
    for size, K in blocks:
        piece = constant_curvature_metric(alg, K, coords=range(start, start + size))
        g = piece if g is None else g + piece
        start += size
    if start != alg.dim:
        raise ValueError("block dimensions do not add up to the chart dimension")
    return g


def random_sym2(alg, rng, amplitude=1.0):
    return J.random_jet(alg, rng, (alg.dim, alg.dim), amplitude, symmetric=True)


def random_metric(alg, rng, amplitude=0.1):
    """``delta + amplitude * (random symmetric polynomial jets)``."""
    return _eye(alg) + random_sym2(alg, rng, amplitude)


def christoffel(chart: ChartMetricJet):
    return chart.geometry().christoffel


def curvature(chart: ChartMetricJet):
    geom = chart.geometry()
    return geom.riemann, geom.ricci, geom.scalar


def covariant_derivative(t, geom: Geometry):
    return geom.cov(t)


def rough_laplacian(u, geom: Geometry):
    return geom.rough_laplacian(u)
