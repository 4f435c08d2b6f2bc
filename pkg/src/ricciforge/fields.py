"""Duck-typed tensor-field interface shared by the jet and grid backends.

Geometry formulas are written once against this interface.  A field stores
its tensor axes first and its "point" axes last: the Taylor-coefficient axis
for jets, the grid axes for torus fields.  Constant tensors may be passed to
:func:`contract` as plain numpy arrays.
"""

from __future__ import annotations

import numpy as np


class TensorField:
    """Marker base class; concrete backends implement the methods below."""

    shape: tuple
    dim: int

    def d(self):  # pragma: no cover - interface
        """Coordinate gradient, new derivative axis in front."""
        raise NotImplementedError

    @classmethod
    def contract2(cls, xs, x, ys, y, outs):  # pragma: no cover - interface
        raise NotImplementedError

    def constant_like(self, value):  # pragma: no cover - interface
        raise NotImplementedError

    def transpose(self, *axes):  # pragma: no cover - interface
        raise NotImplementedError

    @property
    def T(self):
        return self.transpose(*reversed(range(len(self.shape))))


def _parse(spec):
    lhs, out = spec.replace(" ", "").split("->")
    return lhs.split(","), out


def contract(spec, *operands):
    """Einstein summation over tensor axes, with backend point-wise products.

    ``spec`` follows :func:`numpy.einsum` syntax restricted to explicit
    output.  Operands are reduced pairwise from the left; any operand may be
    a constant ``numpy.ndarray``.
    """
    ins, out = _parse(spec)
    if len(ins) != len(operands):
        raise ValueError(f"spec {spec!r} expects {len(ins)} operands, got {len(operands)}")
    cls = next((type(o) for o in operands if isinstance(o, TensorField)), None)
    if cls is None:
        return np.einsum(spec, *operands)
    if len(operands) == 1:
        return cls.contract1(ins[0], operands[0], out)
    cur_s, cur = ins[0], operands[0]
    for k in range(1, len(operands)):
        nxt_s, nxt = ins[k], operands[k]
        if k == len(operands) - 1:
            keep = out
        else:
            later = set("".join(ins[k + 1:]) + out)
            seen = []
            for ch in cur_s + nxt_s:
                if ch in later and ch not in seen:
                    seen.append(ch)
            keep = "".join(seen)
        cur = _contract_pair(cls, cur_s, cur, nxt_s, nxt, keep)
        cur_s = keep
    return cur


def _contract_pair(cls, xs, x, ys, y, outs):
    if not isinstance(x, TensorField) and not isinstance(y, TensorField):
        return np.einsum(f"{xs},{ys}->{outs}", x, y)
    return cls.contract2(xs, x, ys, y, outs)


def sym(a):
    """Symmetric part over the last two tensor axes of a rank-2 field."""
    return 0.5 * (a + a.transpose(1, 0))
