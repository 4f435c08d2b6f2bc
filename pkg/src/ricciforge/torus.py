"""Pseudo-spectral tensor calculus on the flat torus ``[0, 2pi)^n``.

:class:`GridTensor` implements the field interface used by
:class:`~ricciforge.geometry.Geometry`, so curvature and every geometric
operator are evaluated on the grid by the same formulas as on jets.
Products of two fields are dealiased with the 2/3 rule; derivatives are
exact on the trigonometric interpolant with the Nyquist mode removed.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import cached_property
from numbers import Number

import numpy as np

from .errors import (
    DegenerateMetricError,
    DimensionMismatchError,
    KernelAmbiguityError,
    ZeroMultiplierError,
)
from .fields import TensorField
from .geometry import Geometry, OpRequest, operator_apply
from .tensors import component_labels, sym_pairs

_MAX_N = {2: 128, 3: 32}
_P = "UVW"  # einsum letters reserved for grid axes
KERNEL_RTOL = 1e-8


@dataclass(frozen=True)
class TorusGrid:
    n: int
    N: int
    dealias: bool = True

    def __post_init__(self):
        if self.n not in _MAX_N:
            raise ValueError(f"torus dimension must be 2 or 3, got {self.n}")
        N = self.N
        if N < 8 or N & (N - 1):
            raise ValueError(f"points per axis must be a power of two >= 8, got {N}")
        if N > _MAX_N[self.n]:
            raise ValueError(f"N={N} exceeds the desk-scale limit {_MAX_N[self.n]} for n={self.n}")

    @property
    def spacing(self):
        return 2 * np.pi / self.N

    @property
    def cell_volume(self):
        return self.spacing ** self.n

    @property
    def volume(self):
        return (2 * np.pi) ** self.n

    @property
    def point_shape(self):
        return (self.N,) * self.n

    @cached_property
    def coords(self):
        x = np.arange(self.N) * self.spacing
        return np.meshgrid(*([x] * self.n), indexing="ij")

    @cached_property
    def wavenumbers(self):
        """Integer wavenumbers on the rfft layout, one array per axis."""
        full = np.fft.fftfreq(self.N, 1.0 / self.N)
        half = np.fft.rfftfreq(self.N, 1.0 / self.N)
        axes = [full] * (self.n - 1) + [half]
        return np.meshgrid(*axes, indexing="ij")

    @cached_property
    def k2(self):
        return sum(k * k for k in self.wavenumbers)

    @cached_property
    def derivative_factors(self):
        """``i k_j`` with the Nyquist mode zeroed."""
        out = []
        for k in self.wavenumbers:
            f = 1j * k
            f[np.abs(k) == self.N // 2] = 0.0
            out.append(f)
        return out

    @cached_property
    def dealias_mask(self):
        cut = self.N / 3.0
        mask = np.ones(self.wavenumbers[0].shape, dtype=bool)
        for k in self.wavenumbers:
            mask &= np.abs(k) < cut
        return mask

    @cached_property
    def resolved_band(self):
        """Largest ``|k_i|`` kept by the dealiasing filter."""
        return int(np.ceil(self.N / 3.0) - 1)

    def fft(self, a):
        return np.fft.rfftn(a, axes=self._axes(a))

    def ifft(self, a):
        return np.fft.irfftn(a, s=self.point_shape, axes=self._axes(a))

    def _axes(self, a):
        return tuple(range(a.ndim - self.n, a.ndim))

    def filter(self, a):
        if not self.dealias:
            return a
        return self.ifft(self.fft(a) * self.dealias_mask)


class GridTensor(TensorField):
    """Tensor field sampled on a :class:`TorusGrid`; grid axes trail the tensor axes."""

    __array_priority__ = 100

    def __init__(self, grid: TorusGrid, data):
        data = np.asarray(data, dtype=float)
        if data.shape[data.ndim - grid.n:] != grid.point_shape:
            raise DimensionMismatchError(f"data shape {data.shape} does not end in {grid.point_shape}")
        self.grid = grid
        self.data = data

    @property
    def shape(self):
        return self.data.shape[:self.data.ndim - self.grid.n]

    @property
    def dim(self):
        return self.grid.n

    def value(self):
        return self.data

    def _new(self, data):
        return GridTensor(self.grid, data)

    def constant_like(self, value):
        value = np.asarray(value, dtype=float)
        return self._new(np.broadcast_to(value[(...,) + (None,) * self.grid.n],
                                         value.shape + self.grid.point_shape).copy())

    def _tensor_const(self, arr):
        arr = np.asarray(arr, dtype=float)
        return arr[(...,) + (None,) * self.grid.n]

    # -- arithmetic ------------------------------------------------------------------
    def _other(self, other):
        if isinstance(other, GridTensor):
            if other.grid != self.grid:
                raise DimensionMismatchError("fields live on different grids")
            return other.data
        if isinstance(other, Number):
            return other
        return self._tensor_const(other)

    def __add__(self, other):
        return self._new(self.data + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._new(self.data - self._other(other))

    def __rsub__(self, other):
        return self._new(self._other(other) - self.data)

    def __neg__(self):
        return self._new(-self.data)

    def __mul__(self, other):
        if isinstance(other, GridTensor):
            a, b = self.data, other.data
            if len(other.shape) == 0:
                b = b[(None,) * len(self.shape)]
            elif len(self.shape) == 0:
                a = a[(None,) * len(other.shape)]
            return self._new(self.grid.filter(a * b))
        return self._new(self.data * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Number):
            return self._new(self.data / other)
        return NotImplemented

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return self._new(self.data[idx])

    def transpose(self, *axes):
        r = len(self.shape)
        return self._new(self.data.transpose(*axes, *range(r, r + self.grid.n)))

    # -- contraction -----------------------------------------------------------------
    @classmethod
    def contract1(cls, xs, x, outs):
        p = _P[:x.grid.n]
        return x._new(np.einsum(f"{xs}{p}->{outs}{p}", x.data))

    @classmethod
    def contract2(cls, xs, x, ys, y, outs):
        if not isinstance(x, GridTensor):
            p = _P[:y.grid.n]
            return y._new(np.einsum(f"{xs},{ys}{p}->{outs}{p}", np.asarray(x, float), y.data))
        p = _P[:x.grid.n]
        if not isinstance(y, GridTensor):
            return x._new(np.einsum(f"{xs}{p},{ys}->{outs}{p}", x.data, np.asarray(y, float)))
        if x.grid != y.grid:
            raise DimensionMismatchError("fields live on different grids")
        prod = np.einsum(f"{xs}{p},{ys}{p}->{outs}{p}", x.data, y.data, optimize=True)
        return x._new(x.grid.filter(prod))

    # -- calculus --------------------------------------------------------------------
    def d(self):
        """Spectral gradient, derivative axis in front."""
        if not np.all(np.isfinite(self.data)):
            raise ValueError("field has non-finite values")
        fh = self.grid.fft(self.data)
        parts = [self.grid.ifft(fh * f) for f in self.grid.derivative_factors]
        return self._new(np.stack(parts))

    def inv(self, spd=False, min_eig=0.1):
        """Per-node matrix inverse; ``spd`` enforces positive definiteness above ``min_eig``."""
        if len(self.shape) != 2:
            raise DimensionMismatchError("inverse needs a rank-2 field")
        r = self.grid.n
        mats = np.moveaxis(self.data, (0, 1), (r, r + 1))
        if spd:
            eig = np.linalg.eigvalsh(0.5 * (mats + np.swapaxes(mats, -1, -2)))
            low = eig[..., 0]
            if np.min(low) <= min_eig:
                node = tuple(int(i) for i in np.unravel_index(np.argmin(low), low.shape))
                raise DegenerateMetricError(
                    f"metric not positive definite at node {node}: min eigenvalue {low[node]:.3g}")
        inv = np.linalg.inv(mats)
        return self._new(self.grid.filter(np.moveaxis(inv, (r, r + 1), (0, 1))))

    def sup_norm(self):
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0


# -- constructors -------------------------------------------------------------------------

def constant_field(grid: TorusGrid, value):
    value = np.asarray(value, dtype=float)
    return GridTensor(grid, np.broadcast_to(value[(...,) + (None,) * grid.n],
                                            value.shape + grid.point_shape).copy())


def identity_metric(grid: TorusGrid):
    return constant_field(grid, np.eye(grid.n))


def scalar_field(grid: TorusGrid, func):
    """Sample ``func(*coords)`` on the grid."""
    return GridTensor(grid, np.asarray(func(*grid.coords), dtype=float) + np.zeros(grid.point_shape))


def random_band_limited(grid: TorusGrid, rng, shape=(), band=None, symmetric=False, amplitude=1.0):
    """Real random field with modes ``|k_i| <= band`` (default: the dealiased band)."""
    band = grid.resolved_band if band is None else band
    spec_shape = shape + grid.wavenumbers[0].shape
    c = rng.standard_normal(spec_shape) + 1j * rng.standard_normal(spec_shape)
    mask = np.ones(grid.wavenumbers[0].shape, dtype=bool)
    for k in grid.wavenumbers:
        mask &= np.abs(k) <= band
    data = grid.ifft(c * mask)
    data *= amplitude / max(np.max(np.abs(data)), 1e-300)
    if symmetric:
        data = 0.5 * (data + np.swapaxes(data, 0, 1))
    return GridTensor(grid, data)


# -- spectral derivative and geometry ---------------------------------------------------

def spectral_derivative(f: GridTensor, axis: int, tail_tol=1e-8):
    """``d f / d x_axis``; warns when the top third of the spectrum carries energy."""
    if not np.all(np.isfinite(f.data)):
        raise ValueError("field has non-finite values")
    g = f.grid
    fh = g.fft(f.data)
    energy = np.abs(fh) ** 2
    total = energy.sum()
    if total > 0 and energy[..., ~g.dealias_mask].sum() > tail_tol * total:
        warnings.warn("field is not well resolved: spectral tail above tolerance", stacklevel=2)
    return f._new(g.ifft(fh * g.derivative_factors[axis]))


def grid_geometry(h: GridTensor) -> Geometry:
    """Geometry of ``delta + h``; fails with the offending node if not positive definite."""
    g = identity_metric(h.grid) + h
    geom = Geometry(g)
    geom.ginv  # noqa: B018 - validate positivity up front
    return geom


def apply_operator_grid(tag, field, h=None, kappa=0.0, lam=0.0, a=0.0):
    """Evaluate a tagged operator on ``field`` for the metric ``delta + h``."""
    grid = field.grid
    geom = grid_geometry(h if h is not None else constant_field(grid, np.zeros((grid.n, grid.n))))
    return operator_apply(OpRequest(tag, field, kappa, lam, a), geom)


# -- L2 pairing and packing ---------------------------------------------------------------

def l2_inner(u: GridTensor, v: GridTensor):
    """Flat L2 pairing: full component contraction, grid sum times cell volume."""
    return float(np.sum(u.data * v.data) * u.grid.cell_volume)


def l2_norm(u: GridTensor):
    return l2_inner(u, u) ** 0.5


def pack_sym(u: GridTensor):
    """Components ``11, 12, ..., nn`` stacked on a leading axis."""
    return np.stack([u.data[i, j] for i, j in sym_pairs(u.grid.n)])


def unpack_sym(grid: TorusGrid, comps):
    n = grid.n
    out = np.zeros((n, n) + comps.shape[1:], dtype=comps.dtype)
    for c, (i, j) in enumerate(sym_pairs(n)):
        out[i, j] = comps[c]
        out[j, i] = comps[c]
    return out


def _pack(u: GridTensor):
    r = len(u.shape)
    if r == 2:
        return pack_sym(u)
    if r == 1:
        return u.data
    return u.data[None]


def _unpack(grid, comps, rank):
    if rank == 2:
        return unpack_sym(grid, comps)
    if rank == 1:
        return comps
    return comps[0]


# -- Fourier multipliers ---------------------------------------------------------------------

class MultiplierOperator:
    """Constant-coefficient operator as one ``m x m`` matrix per Fourier mode.

    ``matrices`` has shape ``rfft_shape + (m, m)`` and acts on the packed
    components of rank-``rank`` fields (``11, 12, ..., nn`` for rank 2).
    """

    def __init__(self, grid: TorusGrid, matrices, rank=2, name="multiplier"):
        self.grid = grid
        self.matrices = np.asarray(matrices)
        self.rank = rank
        self.name = name
        m = self.matrices.shape[-1]
        expected = {0: 1, 1: grid.n, 2: grid.n * (grid.n + 1) // 2}[rank]
        if m != expected or self.matrices.shape[:-2] != grid.wavenumbers[0].shape:
            raise DimensionMismatchError("multiplier matrices do not match grid and rank")

    @classmethod
    def scalar(cls, grid, values, rank=2, name="multiplier"):
        m = {0: 1, 1: grid.n, 2: grid.n * (grid.n + 1) // 2}[rank]
        mats = np.asarray(values)[..., None, None] * np.eye(m)
        return cls(grid, mats, rank, name)

    @property
    def components(self):
        return component_labels(self.grid.n, self.rank)

    def _spectral(self, f):
        if len(f.shape) != self.rank:
            raise DimensionMismatchError(f"{self.name} acts on rank-{self.rank} fields")
        return self.grid.fft(_pack(f))

    def _back(self, fh):
        return GridTensor(self.grid, _unpack(self.grid, self.grid.ifft(fh), self.rank))

    def apply(self, f: GridTensor):
        fh = self._spectral(f)
        out = np.einsum("...ab,b...->a...", self.matrices, fh)
        return self._back(out)

    __call__ = apply

    def singular_modes(self, rtol=KERNEL_RTOL):
        s = np.linalg.svd(self.matrices, compute_uv=False)
        scale = max(np.max(s), 1e-300)
        return s[..., -1] < rtol * scale

    def smallest_singular(self):
        s = np.linalg.svd(self.matrices, compute_uv=False)
        return float(np.min(s[..., -1]))

    def mode_of(self, idx):
        return tuple(int(k[idx]) for k in self.grid.wavenumbers)

    def inverse(self, f: GridTensor):
        bad = self.singular_modes()
        if np.any(bad):
            idx = tuple(int(i[0]) for i in np.nonzero(bad))
            mode = self.mode_of(idx)
            raise ZeroMultiplierError(f"{self.name} has a zero multiplier at mode {mode}", mode=mode)
        fh = self._spectral(f)
        rhs = np.moveaxis(fh, 0, -1)[..., None]
        sol = np.linalg.solve(self.matrices, rhs)[..., 0]
        return self._back(np.moveaxis(sol, -1, 0))

    def __add__(self, other):
        return MultiplierOperator(self.grid, self.matrices + other.matrices, self.rank, self.name)


def multiplier_inverse(op: MultiplierOperator, f: GridTensor):
    return op.inverse(f)


def laplacian_multiplier(grid, rank=2, shift=0.0):
    """``Delta + shift`` on flat-torus tensors (also ``Delta_L`` and ``Delta_H`` there)."""
    return MultiplierOperator.scalar(grid, grid.k2 + shift, rank, name="laplacian")


# -- kernels and projections -----------------------------------------------------------------

@dataclass
class KernelBasis:
    fields: list
    tag: str

    def gram(self):
        k = len(self.fields)
        return np.array([[l2_inner(self.fields[i], self.fields[j]) for j in range(k)] for i in range(k)])


class L2Projection:
    """``Pi(h) = sum_i <h, h_i> h_i`` for an L2-orthonormal basis."""

    def __init__(self, basis: KernelBasis):
        self.basis = basis

    def coefficients(self, h):
        return [l2_inner(h, b) for b in self.basis.fields]

    def __call__(self, h):
        out = 0.0 * h
        for c, b in zip(self.coefficients(h), self.basis.fields):
            out = out + c * b
        return out


def _classify(values, rtol=KERNEL_RTOL, margin=1e3):
    scale = max(np.max(np.abs(values)), 1e-300)
    thr = rtol * scale
    a = np.abs(values)
    grey = (a >= thr) & (a < margin * thr)
    if np.any(grey):
        raise KernelAmbiguityError(
            f"eigenvalue {a[grey].min():.3g} lies just above the kernel threshold {thr:.3g}; review the threshold")
    return a < thr


def kernel_and_projection(op, grid: TorusGrid | None = None):
    """Kernel basis and L2 projection of a flat-torus multiplier operator.

    ``op`` is a :class:`MultiplierOperator` or a tag (``lichnerowicz``,
    ``rough_laplacian``, ``hodge``) resolved on ``grid``.
    """
    if isinstance(op, str):
        tag = op
        rank = 1 if tag == "hodge" else 2
        if tag not in ("lichnerowicz", "rough_laplacian", "hodge"):
            raise ValueError(f"no flat-torus multiplier for tag {tag!r}")
        op = laplacian_multiplier(grid, rank)
    else:
        tag, grid = op.name, op.grid
    vals, vecs = np.linalg.eig(op.matrices)
    in_kernel = _classify(vals)
    n, r = grid.n, op.rank
    fields, seen = [], set()
    for idx in zip(*np.nonzero(in_kernel)):
        mode_idx, e = idx[:-1], idx[-1]
        k = np.array([w[mode_idx] for w in grid.wavenumbers])
        if tuple(-k) in seen and np.any(k):
            continue  # the conjugate mode gives the same real fields
        seen.add(tuple(k))
        v = np.real_if_close(vecs[mode_idx + (slice(None), e)])
        phase = sum(kk * x for kk, x in zip(k, grid.coords))
        shapes = [np.cos(phase)] if not np.any(k) else [np.cos(phase), np.sin(phase)]
        for s in shapes:
            for part in (np.real(v), np.imag(v)):
                if np.max(np.abs(part)) < 1e-14:
                    continue
                comps = part[:, None] * s.reshape(1, -1)
                comps = comps.reshape((-1,) + grid.point_shape)
                fields.append(GridTensor(grid, _unpack(grid, comps, r)))
    basis = _orthonormalize(fields)
    kb = KernelBasis(basis, tag)
    return kb, L2Projection(kb)


def _orthonormalize(fields, tol=1e-10):
    out = []
    for f in fields:
        v = f
        for b in out:
            v = v - l2_inner(v, b) * b
        nrm = l2_norm(v)
        if nrm > tol * max(l2_norm(f), 1e-300):
            out.append(v / nrm)
    return out


# -- dense fallback ------------------------------------------------------------------------------

def trig_basis(grid: TorusGrid, rank=2, band=None):
    """L2-orthonormal real trigonometric basis of rank-``rank`` fields with ``|k_i| <= band``."""
    band = grid.resolved_band if band is None else band
    n = grid.n
    seen, half = set(), []
    for k in np.ndindex(*([2 * band + 1] * n)):
        k = np.array(k) - band
        if tuple(-k) not in seen:
            seen.add(tuple(k))
            half.append(k)
    if rank == 2:
        comps = []
        for i, j in sym_pairs(n):
            e = np.zeros((n, n))
            e[i, j] = e[j, i] = 1.0 if i == j else 2 ** -0.5
            comps.append(e)
    elif rank == 1:
        comps = list(np.eye(n))
    else:
        comps = [np.array(1.0)]
    vol = grid.volume
    out = []
    for k in half:
        phase = sum(kk * x for kk, x in zip(k, grid.coords))
        if not np.any(k):
            shapes = [np.ones(grid.point_shape) / vol ** 0.5]
        else:
            shapes = [np.cos(phase) * (2 / vol) ** 0.5, np.sin(phase) * (2 / vol) ** 0.5]
        for s in shapes:
            for e in comps:
                out.append(GridTensor(grid, e[(...,) + (None,) * n] * s))
    return out


def dense_spectrum(apply, grid: TorusGrid, rank=2, band=None):
    """Eigenvalues of the Galerkin matrix ``<b_i, A b_j>`` on :func:`trig_basis`."""
    basis = trig_basis(grid, rank, band)
    images = [apply(b) for b in basis]
    A = np.array([[l2_inner(bi, im) for im in images] for bi in basis])
    return np.linalg.eigvalsh(0.5 * (A + A.T)), float(np.max(np.abs(A - A.T)))


# -- field serialization ---------------------------------------------------------------------

def field_header(f: GridTensor, fmt):
    r = len(f.shape)
    return {"n": f.grid.n, "N": f.grid.N, "rank": r,
            "components": component_labels(f.grid.n, r), "format": fmt}


def write_field(path, f: GridTensor, fmt="binary"):
    """JSON header line, then node values row-major (one row per node, packed components)."""
    if fmt not in ("binary", "csv"):
        raise ValueError(f"unknown field format {fmt!r}")
    comps = _pack(f)
    rows = comps.reshape(comps.shape[0], -1).T
    header = json.dumps(field_header(f, fmt), sort_keys=True)
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(header.encode() + b"\n")
            fh.write(np.ascontiguousarray(rows, dtype="<f8").tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(header + "\n")
            np.savetxt(fh, rows, delimiter=",", fmt="%.17g")


def read_field(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        body = fh.read()
    grid = TorusGrid(header["n"], header["N"])
    m = max(1, len(header["components"].split(","))) if header["rank"] else 1
    if header["format"] == "binary":
        rows = np.frombuffer(body, dtype="<f8").reshape(-1, m)
    else:
        rows = np.loadtxt(body.decode().splitlines(), delimiter=",", ndmin=2)
    comps = rows.T.reshape((m,) + grid.point_shape)
    return GridTensor(grid, _unpack(grid, comps, header["rank"]))
