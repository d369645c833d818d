"""Symmetric tensor algebra and analytic Gaussian-polynomial phantoms.

Indices are 0-based throughout: a rank-m multi-index over R^n is a tuple of
m integers in ``range(n)``.  Symmetric tensors are stored packed, one complex
value per sorted multi-index, in lexicographic order.

A :class:`Phantom` is a finite sum of lumps.  Every component of a lump is
``P(x - c) * exp(-a |x - c|^2)`` with a polynomial ``P`` stored as a dense
coefficient array.  The family is closed under the inner derivative, the
divergence, shifts and the Fourier transform, which is what makes exact
oracles available everywhere downstream.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "sym_dim",
    "multi_indices",
    "canonical",
    "multiplicity",
    "index_table",
    "xi_powers",
    "SymTensor",
    "symmetrize_partial",
    "Lump",
    "Phantom",
    "inner_derivative",
    "divergence",
    "phantom_fourier",
]


# ---------------------------------------------------------------------------
# multi-index bookkeeping
# ---------------------------------------------------------------------------

def sym_dim(n: int, m: int) -> int:
    """Dimension of the space of rank-``m`` symmetric tensors over R^n."""
    if int(n) != n or int(m) != m:
        raise ValueError("n and m must be integers")
    if n < 1:
        raise ValueError(f"dimension n must be >= 1, got {n}")
    if m < 0:
        raise ValueError(f"rank m must be >= 0, got {m}")
    return math.comb(n + m - 1, m)


@lru_cache(maxsize=None)
def multi_indices(n: int, m: int) -> tuple[tuple[int, ...], ...]:
    """Canonical (non-decreasing) multi-indices in lexicographic order."""
    sym_dim(n, m)
    return tuple(itertools.combinations_with_replacement(range(n), m))


@lru_cache(maxsize=None)
def index_table(n: int, m: int) -> dict[tuple[int, ...], int]:
    return {idx: pos for pos, idx in enumerate(multi_indices(n, m))}


def canonical(index: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(int(i) for i in index))


def multiplicity(index: Sequence[int]) -> int:
    """Number of distinct orderings of ``index``."""
    counts = np.bincount(np.asarray(index, dtype=int)) if len(index) else []
    out = math.factorial(len(index))
    for c in counts:
        out //= math.factorial(int(c))
    return out


def xi_powers(xi: np.ndarray, m: int, weighted: bool = True) -> np.ndarray:
    """Monomials ``xi^I`` for every canonical rank-``m`` index.

    With ``weighted=True`` each monomial is multiplied by the multiplicity of
    its index, so that ``sum(comps * xi_powers(xi, m))`` is the full
    contraction ``<f, xi^m>``.  Returns shape ``xi.shape[:-1] + (ncomp,)``.
    """
    xi = np.asarray(xi)
    n = xi.shape[-1]
    cols = []
    for idx in multi_indices(n, m):
        v = np.ones(xi.shape[:-1], dtype=xi.dtype)
        for i in idx:
            v = v * xi[..., i]
        if weighted:
            v = v * multiplicity(idx)
        cols.append(v)
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# SymTensor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymTensor:
    """Packed symmetric tensor of rank ``rank`` over R^``dim``."""

    rank: int
    dim: int
    comps: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.comps, dtype=complex).reshape(-1)
        expected = sym_dim(self.dim, self.rank)
        if comps.size != expected:
            raise ValueError(
                f"rank-{self.rank} tensor over R^{self.dim} needs {expected} components, got {comps.size}"
            )
        comps.setflags(write=False)
        object.__setattr__(self, "comps", comps)

    @classmethod
    def zeros(cls, rank: int, dim: int) -> "SymTensor":
        return cls(rank, dim, np.zeros(sym_dim(dim, rank), dtype=complex))

    @classmethod
    def from_dense(cls, u: np.ndarray) -> "SymTensor":
        """Pack a dense tensor; ``u`` is symmetrized first."""
        u = np.asarray(u, dtype=complex)
        m, n = u.ndim, (u.shape[0] if u.ndim else 2)
        if m:
            u = symmetrize_partial(u, m)
        comps = [u[idx] if m else u[()] for idx in multi_indices(n, m)]
        return cls(m, n, np.array(comps))

    def __getitem__(self, index) -> complex:
        if isinstance(index, (int, np.integer)):
            index = (index,)
        index = canonical(index)
        if len(index) != self.rank or any(i < 0 or i >= self.dim for i in index):
            raise IndexError(f"bad multi-index {index} for rank {self.rank}, dim {self.dim}")
        return complex(self.comps[index_table(self.dim, self.rank)[index]])

    def to_dense(self) -> np.ndarray:
        out = np.empty((self.dim,) * self.rank, dtype=complex)
        table = index_table(self.dim, self.rank)
        for idx in itertools.product(range(self.dim), repeat=self.rank):
            out[idx] = self.comps[table[canonical(idx)]]
        return out

    def contract(self, xi: np.ndarray) -> complex:
        """``<f, xi^m>``."""
        return complex(np.sum(self.comps * xi_powers(np.asarray(xi, dtype=float), self.rank)))

    def norm2(self) -> float:
        """Squared Euclidean norm summed over *all* index tuples."""
        w = np.array([multiplicity(i) for i in multi_indices(self.dim, self.rank)])
        return float(np.sum(w * np.abs(self.comps) ** 2))


def symmetrize_partial(u: np.ndarray, r: int) -> np.ndarray:
    """Average of a dense tensor over all permutations of its first ``r`` axes."""
    u = np.asarray(u)
    if r < 0 or r > u.ndim:
        raise ValueError(f"cannot symmetrize {r} indices of a rank-{u.ndim} tensor")
    if r <= 1:
        return u.copy()
    rest = tuple(range(r, u.ndim))
    acc = np.zeros_like(u, dtype=np.result_type(u, float))
    for perm in itertools.permutations(range(r)):
        acc += np.transpose(u, perm + rest)
    return acc / math.factorial(r)


# ---------------------------------------------------------------------------
# dense multivariate polynomial helpers (coefficient arrays, poly axes last)
# ---------------------------------------------------------------------------

def _degree(c: np.ndarray, n: int) -> int:
    return c.shape[-1] - 1 if n else 0


def _resize(c: np.ndarray, n: int, deg: int) -> np.ndarray:
    """Pad or truncate every polynomial axis to length ``deg + 1``."""
    lead = c.ndim - n
    out = np.zeros(c.shape[:lead] + (deg + 1,) * n, dtype=complex)
    cur = min(deg, _degree(c, n))
    sl = (Ellipsis,) + (slice(0, cur + 1),) * n
    out[sl] = c[sl]
    return out


def _trim(c: np.ndarray, n: int) -> np.ndarray:
    lead = c.ndim - n
    nz = np.argwhere(np.abs(c) > 0)
    deg = int(nz[:, lead:].max()) if nz.size else 0
    return _resize(c, n, deg)


def _mul_coord(c: np.ndarray, n: int, d: int) -> np.ndarray:
    """Multiply a polynomial by its ``d``-th variable."""
    c = _resize(c, n, _degree(c, n) + 1)
    return np.roll(c, 1, axis=c.ndim - n + d)


def _diff(c: np.ndarray, n: int, d: int) -> np.ndarray:
    """Partial derivative in the ``d``-th variable."""
    axis = c.ndim - n + d
    deg = _degree(c, n)
    out = np.zeros_like(c)
    if deg == 0:
        return out
    k = np.arange(1, deg + 1)
    shape = [1] * c.ndim
    shape[axis] = deg
    src = np.take(c, k, axis=axis) * k.reshape(shape)
    idx = [slice(None)] * c.ndim
    idx[axis] = slice(0, deg)
    out[tuple(idx)] = src
    return out


def _power_table(u: np.ndarray, deg: int) -> np.ndarray:
    """``u**j`` for j = 0..deg, stacked on a new last axis."""
    out = np.empty(u.shape + (deg + 1,), dtype=np.result_type(u, float))
    out[..., 0] = 1.0
    for j in range(1, deg + 1):
        out[..., j] = out[..., j - 1] * u
    return out


_LETTERS = "abcdefgh"


def _poly_eval(c: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Evaluate ``c[comp, b0, ..., b_{n-1}]`` at points ``u[..., n]``.

    Returns ``u.shape[:-1] + (ncomp,)``.
    """
    n = u.shape[-1]
    deg = _degree(c, n)
    flat = u.reshape(-1, n)
    tables = [_power_table(flat[:, d], deg) for d in range(n)]
    letters = _LETTERS[:n]
    spec = "z" + letters + "," + ",".join("N" + l for l in letters) + "->Nz"
    out = np.einsum(spec, c, *tables, optimize=True)
    return out.reshape(u.shape[:-1] + (c.shape[0],))


def _multilinear(c: np.ndarray, n: int, mat: np.ndarray) -> np.ndarray:
    """Apply ``mat[old_degree, new_degree]`` independently along every polynomial axis."""
    lead = c.ndim - n
    for d in range(n):
        axis = lead + d
        c = np.moveaxis(np.tensordot(c, mat, axes=([axis], [0])), -1, axis)
    return c


@lru_cache(maxsize=None)
def _hermite_table(deg: int, width: float) -> np.ndarray:
    """Row ``j``: coefficients of ``h_j`` with F[x^j e^{-a x^2}](y) = h_j(y) e^{-y^2/4a} / sqrt(2a)."""
    table = np.zeros((deg + 1, deg + 1), dtype=complex)
    table[0, 0] = 1.0
    for j in range(deg):
        h = table[j]
        dh = np.zeros_like(h)
        dh[:-1] = h[1:] * np.arange(1, deg + 1)
        yh = np.zeros_like(h)
        yh[1:] = h[:-1]
        table[j + 1] = 1j * (dh - yh / (2.0 * width))
    return table


# ---------------------------------------------------------------------------
# phantoms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lump:
    """One Gaussian-polynomial lump.

    ``coeffs[comp, b_0, ..., b_{n-1}]`` is the coefficient of
    ``prod_d (x_d - c_d)**b_d`` in canonical component ``comp``.
    """

    center: np.ndarray
    width: float
    coeffs: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(-1)
        coeffs = np.asarray(self.coeffs, dtype=complex)
        n = center.size
        if not self.width > 0 or not np.isfinite(self.width):
            raise ValueError(f"lump width must be positive, got {self.width}")
        if coeffs.ndim != n + 1 or len(set(coeffs.shape[1:])) > 1:
            raise ValueError(f"coefficient array must have shape (ncomp,) + (deg+1,)*{n}")
        center.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "width", float(self.width))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def degree(self) -> int:
        return _degree(self.coeffs, self.dim)

    @classmethod
    def gaussian(cls, center, width: float, tensor, rank: int | None = None) -> "Lump":
        """Degree-0 lump with constant coefficient ``tensor`` (packed or SymTensor)."""
        center = np.asarray(center, dtype=float)
        comps = tensor.comps if isinstance(tensor, SymTensor) else np.atleast_1d(np.asarray(tensor, dtype=complex))
        coeffs = comps.reshape((-1,) + (1,) * center.size)
        return cls(center, width, coeffs)

    @classmethod
    def from_monomials(cls, center, width: float, ncomp: int, terms: dict) -> "Lump":
        """Build from ``{exponent tuple: packed coefficients}``."""
        center = np.asarray(center, dtype=float)
        n = center.size
        deg = max((sum(e) for e in terms), default=0)
        coeffs = np.zeros((ncomp,) + (deg + 1,) * n, dtype=complex)
        for exps, val in terms.items():
            coeffs[(slice(None),) + tuple(exps)] += np.asarray(val, dtype=complex).reshape(ncomp)
        return cls(center, width, coeffs)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = x - self.center
        env = np.exp(-self.width * np.sum(u * u, axis=-1))
        return _poly_eval(self.coeffs, u) * env[..., None]

    def partial(self, d: int) -> np.ndarray:
        """Coefficients of the ``d``-th partial derivative (same center and width)."""
        n = self.dim
        c = _resize(self.coeffs, n, self.degree + 1)
        return _trim(_diff(c, n, d) - 2.0 * self.width * _mul_coord(self.coeffs, n, d), n)

    def spectral_coeffs(self) -> np.ndarray:
        """Polynomial part of the Fourier transform.

        The transform is ``S(y) * exp(-i<y,c> - |y|^2/(4a))`` with ``S`` returned here.
        """
        n = self.dim
        table = _hermite_table(self.degree, self.width)
        return _multilinear(self.coeffs, n, table) * (2.0 * self.width) ** (-n / 2)

    def fourier(self, y: np.ndarray, spectral: np.ndarray | None = None) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        s = self.spectral_coeffs() if spectral is None else spectral
        env = np.exp(-1j * (y @ self.center) - np.sum(y * y, axis=-1) / (4.0 * self.width))
        return _poly_eval(s, y) * env[..., None]


@dataclass(frozen=True)
class Phantom:
    """Rank-``rank`` symmetric tensor field on R^``dim``, a finite sum of lumps."""

    rank: int
    dim: int
    lumps: tuple[Lump, ...] = ()

    def __post_init__(self):
        ncomp = sym_dim(self.dim, self.rank)
        lumps = tuple(self.lumps)
        for lump in lumps:
            if lump.dim != self.dim:
                raise ValueError(f"lump in R^{lump.dim} inside a phantom on R^{self.dim}")
            if lump.coeffs.shape[0] != ncomp:
                raise ValueError(f"lump has {lump.coeffs.shape[0]} components, rank {self.rank} needs {ncomp}")
        object.__setattr__(self, "lumps", lumps)

    @property
    def ncomp(self) -> int:
        return sym_dim(self.dim, self.rank)

    @classmethod
    def zero(cls, rank: int, dim: int = 2) -> "Phantom":
        return cls(rank, dim, ())

    def __add__(self, other: "Phantom") -> "Phantom":
        if (self.rank, self.dim) != (other.rank, other.dim):
            raise ValueError("cannot add phantoms of different rank or dimension")
        return Phantom(self.rank, self.dim, self.lumps + other.lumps)

    def scaled(self, factor: complex) -> "Phantom":
        return Phantom(self.rank, self.dim, tuple(
            Lump(l.center, l.width, l.coeffs * factor) for l in self.lumps))

    def shifted(self, a) -> "Phantom":
        """The field ``x -> f(x + a)``."""
        a = np.asarray(a, dtype=float)
        return Phantom(self.rank, self.dim, tuple(
            Lump(l.center - a, l.width, l.coeffs) for l in self.lumps))

    def component(self, index) -> "Phantom":
        """Scalar phantom of the component ``f_index``."""
        pos = index_table(self.dim, self.rank)[canonical(index)]
        return Phantom(0, self.dim, tuple(
            Lump(l.center, l.width, l.coeffs[pos:pos + 1]) for l in self.lumps))

    def evaluate(self, x) -> np.ndarray:
        """Packed components at points ``x[..., dim]``; shape ``x.shape[:-1] + (ncomp,)``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.ncomp,), dtype=complex)
        for lump in self.lumps:
            out += lump.evaluate(x)
        return out

    def at(self, x) -> SymTensor:
        return SymTensor(self.rank, self.dim, self.evaluate(np.asarray(x, dtype=float))[...].reshape(-1))

    def fourier(self, y) -> np.ndarray:
        """Componentwise Fourier transform with kernel ``exp(-i<y,x>) / (2 pi)^(n/2)``."""
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1] + (self.ncomp,), dtype=complex)
        for lump in self.lumps:
            out += lump.fourier(y)
        return out

    def fourier_directional(self, y, direction, order: int) -> np.ndarray:
        """``<direction, d/dy>^order`` applied to the Fourier transform, exactly."""
        y = np.asarray(y, dtype=float)
        e = np.asarray(direction, dtype=float)
        n = self.dim
        out = np.zeros(y.shape[:-1] + (self.ncomp,), dtype=complex)
        for lump in self.lumps:
            s = lump.spectral_coeffs()
            for _ in range(order):
                grown = _resize(s, n, _degree(s, n) + 1)
                new = -1j * float(e @ lump.center) * grown
                for d in range(n):
                    new = new + e[d] * _diff(grown, n, d)
                    new = new - e[d] / (2.0 * lump.width) * _mul_coord(s, n, d)
                s = new
            out += lump.fourier(y, spectral=s)
        return out

    def d(self) -> "Phantom":
        """Inner derivative: symmetrized gradient, rank ``m + 1``."""
        m, n = self.rank, self.dim
        src_table = index_table(n, m)
        targets = multi_indices(n, m + 1)
        lumps = []
        for lump in self.lumps:
            partials = [lump.partial(d) for d in range(n)]
            deg = max(_degree(p, n) for p in partials)
            partials = [_resize(p, n, deg) for p in partials]
            coeffs = np.zeros((len(targets),) + (deg + 1,) * n, dtype=complex)
            for pos, idx in enumerate(targets):
                for k in range(m + 1):
                    rest = idx[:k] + idx[k + 1:]
                    coeffs[pos] += partials[idx[k]][src_table[rest]]
                coeffs[pos] /= m + 1
            lumps.append(Lump(lump.center, lump.width, coeffs))
        return Phantom(m + 1, n, tuple(lumps))

    def div(self) -> "Phantom":
        """Divergence: ``(delta f)_{i..} = sum_p d f_{p i..} / dx^p``, rank ``m - 1``."""
        m, n = self.rank, self.dim
        if m == 0:
            raise ValueError("divergence of a rank-0 field is undefined")
        src_table = index_table(n, m)
        targets = multi_indices(n, m - 1)
        lumps = []
        for lump in self.lumps:
            partials = [lump.partial(d) for d in range(n)]
            deg = max(_degree(p, n) for p in partials)
            partials = [_resize(p, n, deg) for p in partials]
            coeffs = np.zeros((len(targets),) + (deg + 1,) * n, dtype=complex)
            for pos, idx in enumerate(targets):
                for p in range(n):
                    coeffs[pos] += partials[p][src_table[canonical((p,) + idx)]]
            lumps.append(Lump(lump.center, lump.width, coeffs))
        return Phantom(m - 1, n, tuple(lumps))

    def to_dict(self) -> dict:
        """Plain-data form (see :meth:`from_dict`)."""
        lumps = []
        for l in self.lumps:
            terms = []
            for pos in np.argwhere(np.abs(l.coeffs) > 0):
                comp, exps = int(pos[0]), [int(e) for e in pos[1:]]
                val = complex(l.coeffs[tuple(pos)])
                terms.append({
                    "component": list(multi_indices(self.dim, self.rank)[comp]),
                    "exponents": exps,
                    "re": val.real,
                    "im": val.imag,
                })
            lumps.append({"center": [float(c) for c in l.center], "width": l.width, "terms": terms})
        return {"rank": self.rank, "dim": self.dim, "lumps": lumps}

    @classmethod
    def from_dict(cls, data: dict) -> "Phantom":
        rank, dim = int(data["rank"]), int(data.get("dim", 2))
        ncomp = sym_dim(dim, rank)
        table = index_table(dim, rank)
        lumps = []
        for ld in data.get("lumps", []):
            terms: dict = {}
            for t in ld.get("terms", []):
                idx = canonical(t.get("component", []))
                if idx not in table:
                    raise ValueError(f"component {t.get('component')} invalid for rank {rank}, dim {dim}")
                exps = tuple(int(e) for e in t.get("exponents", [0] * dim))
                if len(exps) != dim or min(exps) < 0:
                    raise ValueError(f"bad exponents {exps}")
                vec = terms.setdefault(exps, np.zeros(ncomp, dtype=complex))
                vec[table[idx]] += complex(t.get("re", 0.0), t.get("im", 0.0))
            lumps.append(Lump.from_monomials(ld["center"], float(ld["width"]), ncomp, terms))
        return cls(rank, dim, tuple(lumps))


def inner_derivative(f: Phantom, x) -> SymTensor:
    """``(df)(x)`` for an analytic phantom."""
    return f.d().at(x)


def divergence(f: Phantom, x) -> SymTensor:
    """``(delta f)(x)`` for an analytic phantom."""
    return f.div().at(x)


def phantom_fourier(f: Phantom, y) -> SymTensor:
    """Exact Fourier transform of ``f`` at a single frequency ``y``."""
    return SymTensor(f.rank, f.dim, f.fourier(np.asarray(y, dtype=float)).reshape(-1))
