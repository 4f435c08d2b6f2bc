"""Pointwise multilinear algebra for tensors of rank at most four.

Functions accept plain arrays and, where it makes sense, any
:class:`~ricciforge.fields.TensorField` (jets or grid fields), because they
are written with :func:`~ricciforge.fields.contract`.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DegenerateMetricError, DimensionMismatchError
from .fields import contract


def sym_pairs(n):
    """Upper-triangle index pairs in row-major order: 11, 12, ..., nn."""
    return [(i, j) for i in range(n) for j in range(i, n)]


def component_labels(n, rank=2):
    if rank == 0:
        return ""
    if rank == 1:
        return ",".join(str(i + 1) for i in range(n))
    return ",".join(f"{i + 1}{j + 1}" for i, j in sym_pairs(n))


def check_positive(g, what="metric"):
    g = np.asarray(g, dtype=float)
    scale = max(np.max(np.abs(g)), 1e-300)
    if np.linalg.eigvalsh(0.5 * (g + g.T)).min() <= 1e-10 * scale:
        raise DegenerateMetricError(f"{what} is not positive definite")
    return g


def kulkarni_nomizu(a, b):
    """``(a o b)_ijkl = a_ik b_jl + a_jl b_ik - a_il b_jk - a_jk b_il``."""
    if a.shape != b.shape:
        raise DimensionMismatchError("Kulkarni-Nomizu factors must share a shape")
    ab = contract("ik,jl->ijkl", a, b)
    return ab + ab.transpose(1, 0, 3, 2) - ab.transpose(0, 1, 3, 2) - ab.transpose(1, 0, 2, 3)


def curvature_symmetry_defects(R):
    """Max defects of the algebraic curvature symmetries of a 4-tensor array.

    Returns ``(antisym_12, antisym_34, pair_exchange, first_bianchi)``,
    each relative to ``max|R|``.
    """
    R = np.asarray(R, dtype=float)
    scale = max(np.max(np.abs(R)), 1e-300)
    anti12 = np.max(np.abs(R + R.transpose(1, 0, 2, 3)))
    anti34 = np.max(np.abs(R + R.transpose(0, 1, 3, 2)))
    pair = np.max(np.abs(R - R.transpose(2, 3, 0, 1)))
    bianchi = np.max(np.abs(R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2)))
    return tuple(float(v / scale) for v in (anti12, anti34, pair, bianchi))


def is_algebraic_curvature(R, tol=1e-12):
    return max(curvature_symmetry_defects(R)) <= tol


def sym2_eigen(s, g):
    """Generalized eigenpairs of ``s v = lambda g v``, ascending.

    Eigenvectors are the columns of the returned matrix, g-orthonormal.
    """
    s = np.asarray(s, dtype=float)
    g = check_positive(g)
    if s.shape != g.shape:
        raise DimensionMismatchError("s and g must have the same shape")
    w, v = scipy.linalg.eigh(0.5 * (s + s.T), g)
    return w, v


# -- index gymnastics ---------------------------------------------------------------

_LETTERS = "abcdefgh"


def _slot_spec(rank, slot, new):
    idx = _LETTERS[:rank]
    return idx, idx[:slot] + new + idx[slot + 1:], idx[slot]


def raise_index(t, ginv, slot):
    """Raise ``slot`` using the inverse metric ``ginv``."""
    rank = len(t.shape)
    if not 0 <= slot < rank:
        raise IndexError(f"slot {slot} out of range for rank {rank}")
    src, dst, old = _slot_spec(rank, slot, "z")
    return contract(f"z{old},{src}->{dst}", ginv, t)


def lower_index(t, g, slot):
    return raise_index(t, g, slot)


def trace(t, ginv, i=0, j=1):
    """Metric trace over slots ``i`` and ``j``."""
    rank = len(t.shape)
    if i == j or not (0 <= i < rank and 0 <= j < rank):
        raise IndexError(f"invalid trace slots ({i}, {j}) for rank {rank}")
    idx = list(_LETTERS[:rank])
    a, b = idx[i], idx[j]
    out = "".join(c for k, c in enumerate(idx) if k not in (i, j))
    return contract(f"{a}{b},{''.join(idx)}->{out}", ginv, t)


def inner(u, v, ginv):
    """Full metric contraction of two covariant tensors of equal rank."""
    rank = len(u.shape)
    if len(v.shape) != rank:
        raise DimensionMismatchError("inner product needs equal ranks")
    up, lo = "abcd"[:rank], "efgh"[:rank]
    mats = ",".join(f"{up[k]}{lo[k]}" for k in range(rank))
    operands = [ginv] * rank
    return contract(f"{up},{mats},{lo}->", u, *operands, v)


def index_ops(t, g, mode, *, slots=(0, 1), other=None):
    """Dispatch for the metric operations ``raise``, ``lower``, ``trace``, ``inner_product``.

    ``g`` is the covariant metric; its inverse is computed here for plain arrays.
    """
    g = np.asarray(g, dtype=float)
    ginv = np.linalg.inv(check_positive(g))
    if mode == "raise":
        return raise_index(t, ginv, slots[0])
    if mode == "lower":
        return lower_index(t, g, slots[0])
    if mode == "trace":
        return trace(t, ginv, *slots)
    if mode == "inner_product":
        return inner(t, t if other is None else other, ginv)
    raise ValueError(f"unknown index operation {mode!r}")


# -- operators of a curvature tensor on symmetric 2-tensors -----------------------

def ric_action(ric, u, ginv):
    """``(Ric o u)_ij = (Ric_ik u^k_j + Ric_jk u^k_i) / 2``."""
    a = contract("ik,kl,lj->ij", ric, ginv, u)
    return 0.5 * (a + a.transpose(1, 0))


def riem_action(riem, u, ginv):
    """``(Riem o u)_ij = Riem_ikjl u^kl``."""
    return contract("ikjl,ka,lb,ab->ij", riem, ginv, ginv, u)
