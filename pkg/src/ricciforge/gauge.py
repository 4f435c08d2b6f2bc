"""Gauge-fixed prescribed-curvature maps and their linearizations at zero.

Each map is written against :class:`~ricciforge.geometry.Geometry`, so the
same code evaluates on jets (pointwise identity checks) and on torus grids
(the global solve).  ``base`` is the geometry of the fixed background ``g``;
``pert`` is the geometry of ``g + h``.  ``proj`` is a linear map on
symmetric 2-tensors (a kernel projection or a pointwise surrogate of one);
``None`` means zero.
"""

from __future__ import annotations

from .fields import contract
from .geometry import Geometry, check_kappa


def _apply(proj, h):
    return None if proj is None else proj(h)


def ricci_gauge_map(base: Geometry, pert: Geometry, h, r=None, proj=None):
    """``Ric(g+h) - R(h,r) - L_g{ Ric_g^-1 B_{g+h}[R(h,r)] }``

    with ``R(h,r) = Ric(g) + r - Pi(h)/2``.
    """
    target = base.ricci
    if r is not None:
        target = target + r
    p = _apply(proj, h)
    if p is not None:
        target = target - 0.5 * p
    omega = base.endo_inverse(base.ricci, pert.bianchi(target))
    return pert.ricci - target - base.killing_sym(omega)


def ricci_gauge_linearization(base: Geometry, h, proj=None):
    """``Delta_L h / 2 + Pi(h) / 2`` (valid on Ricci-parallel backgrounds)."""
    out = 0.5 * base.lichnerowicz(h)
    p = _apply(proj, h)
    return out if p is None else out + 0.5 * p


def contra_gauge_map(base: Geometry, pert: Geometry, h, rbar=None, proj=None):
    """``g[Ricbar(g+h) - Rbar(h,r)]g + L_g{ Ric_g^-1 Bbar_{g+h}[Rbar(h,r)] }``

    with ``Rbar(h,r) = Ricbar(g) + r - g^-1 Pibar(h) g^-1 / 2``.
    """
    gi = base.ginv
    target = base.ric_contra()
    if rbar is not None:
        target = target + rbar
    p = _apply(proj, h)
    if p is not None:
        target = target - 0.5 * contract("ia,ab,bj->ij", gi, p, gi)
    diff = pert.ric_contra() - target
    lowered = contract("ia,ab,bj->ij", base.g, diff, base.g)
    omega = base.endo_inverse(base.ricci, pert.bianchi_contra(target))
    return lowered + base.killing_sym(omega)


def contra_gauge_linearization(base: Geometry, h, proj=None):
    """``Delta_L h / 2 - 2 Ric o h + Pibar(h) / 2`` (Einstein backgrounds)."""
    out = 0.5 * base.lichnerowicz(h) - 2.0 * base.ric_action(h)
    p = _apply(proj, h)
    return out if p is None else out + 0.5 * p


def ein_target(base: Geometry, h, e, kappa, lam, proj=None):
    """``E = Ein(g) + e - Pi~(h) / 2``."""
    target = base.ein(kappa, lam)
    if e is not None:
        target = target + e
    p = _apply(proj, h)
    if p is not None:
        target = target - 0.5 * p
    return target


def ein_gauge_map(base: Geometry, pert: Geometry, h, e, kappa, lam, proj=None):
    """``Ric(g+h) - E + (kappa Tr_{g+h}E + Lambda)/(1+kappa n) (g+h) - L_g Ein_g^-1 calB_{g+h}(E)``.

    Returns ``(F, omega, E)`` so callers can reuse the gauge 1-form.
    """
    n = base.n
    check_kappa(kappa, n)
    target = ein_target(base, h, e, kappa, lam, proj)
    ein_g = base.ein(kappa, lam)
    omega = base.endo_inverse(ein_g, pert.gen_bianchi(target, kappa))
    tr = pert.trace(target)
    coef = (kappa * tr + lam) * (1.0 / (1 + kappa * n))
    F = pert.ricci - target + pert.scalar_times(coef, pert.g) - base.killing_sym(omega)
    return F, omega, target


def ein_gauge_linearization(base: Geometry, h, kappa, lam, proj=None):
    """Derivative of :func:`ein_gauge_map` in ``h`` at zero on Ricci-parallel backgrounds.

    ``Delta_L h/2 + Pi~h/2 + (kappa Tr Ein h + Lambda h - kappa <Ein,h> g
    - kappa Tr(Pi~h) g / 2) / (1+kappa n)
    - (n-2) kappa / (2(1+kappa n)) L Ein^-1 d<Ein,h>``
    """
    n = base.n
    check_kappa(kappa, n)
    ein_g = base.ein(kappa, lam)
    s = 1.0 / (1 + kappa * n)
    out = 0.5 * base.lichnerowicz(h)
    out = out + base.scalar_times(kappa * s * base.trace(ein_g), h) + (lam * s) * h
    out = out - base.scalar_times(kappa * s * base.inner(ein_g, h), base.g)
    p = _apply(proj, h)
    if p is not None:
        out = out + 0.5 * p - base.scalar_times(0.5 * kappa * s * base.trace(p), base.g)
    c = (n - 2) * kappa / (2 * (1 + kappa * n))
    if c != 0.0:
        grad = base.d(base.inner(ein_g, h))
        out = out - c * base.killing_sym(base.endo_inverse(ein_g, grad))
    return out


def ein_gauge_operator(pert: Geometry, base: Geometry, omega, kappa, lam):
    """``P_{g+h} w = B_{g+h} L_g w + Ein_g w``."""
    return pert.bianchi(base.killing_sym(omega)) + base.endo(base.ein(kappa, lam), omega)
