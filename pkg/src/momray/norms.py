"""H^s_t norms on R^n and on TS^1, Reshetnyak identities and stability bounds.

On ``R^n`` the norm is ``int |y|^(2t) (1+|y|^2)^(s-t) |f^(y)|^2 dy``, summed
over all index tuples of a tensor field.  On ``TS^1`` it is

    (1/2pi) int_0^2pi int |q|^(2t) (1+q^2)^(s-t) |phi^(q, th)|^2 dq dth,

with ``phi^`` the Fourier transform in ``p``.  Functions returning a norm
return the square root; reports carry squared quantities.

The ``q`` integral is a midpoint sum on the half-sample-shifted frequency
grid of the zero-padded sinogram, so ``q = 0`` is never evaluated.  The
weight ``|q|^gamma`` is not smooth at the origin, which costs the plain sum
an error of order ``dq^(1+gamma)``; the leading terms of that error are
known in closed form (Hurwitz zeta values at ``1/2``) and are subtracted
using one-sided extrapolations of the smooth factor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import roots_jacobi, zeta

from .inversion import FieldGrid
from .sphere import SinogramGrid, d_theta
from .tensor import Phantom, multi_indices, multiplicity
from .xray import sinogram_values

__all__ = [
    "SobolevWeight",
    "NormReport",
    "SphereGrid",
    "DEFAULT_WEIGHTS",
    "DEFAULT_LADDER",
    "Spectrum",
    "spectrum",
    "hst_norm_rn",
    "hst_norm_ts",
    "hst_inner_ts",
    "reshetnyak_constant",
    "reshetnyak_m0",
    "reshetnyak_m1_2d",
    "reshetnyak_m2_2d",
    "data_norm_h1",
    "data_norm_h2",
    "stability_checks",
]


@dataclass(frozen=True)
class SobolevWeight:
    """The pair ``(s, t)`` of the weight ``|y|^(2t) (1+|y|^2)^(s-t)``."""

    s: float
    t: float

    def shifted(self, delta: float) -> "SobolevWeight":
        return SobolevWeight(self.s + delta, self.t + delta)

    def check_rn(self, n: int) -> None:
        if not self.t > -n / 2:
            raise ValueError(f"H^s_t(R^{n}) needs t > {-n / 2}, got t = {self.t}")

    def check_ts(self, n: int = 2) -> None:
        if not self.t > -(n - 1) / 2:
            raise ValueError(f"H^s_t(TS^{n - 1}) needs t > {-(n - 1) / 2}, got t = {self.t}")

    def __call__(self, r) -> np.ndarray:
        r = np.abs(np.asarray(r, dtype=float))
        return r ** (2 * self.t) * (1 + r * r) ** (self.s - self.t)


DEFAULT_WEIGHTS = (SobolevWeight(0.0, 0.0), SobolevWeight(1.0, 0.0), SobolevWeight(0.0, -0.25))


@dataclass(frozen=True)
class SphereGrid:
    """Sampling of ``TS^1`` used for the data side of the identities."""

    theta_count: int = 512
    p_count: int = 1024
    p_max: float = 12.0
    pad: int = 8

    def empty(self) -> SinogramGrid:
        return SinogramGrid.zeros(self.theta_count, self.p_count, self.p_max)

    def sinograms(self, f: Phantom, top: int | None = None) -> list[SinogramGrid]:
        """``I^0 f .. I^top f`` (``top`` defaults to the rank of ``f``)."""
        g = self.empty()
        top = f.rank if top is None else top
        return [g.with_values(sinogram_values(f, k, g.p, g.theta)) for k in range(top + 1)]


DEFAULT_LADDER = (
    SphereGrid(128, 256, 12.0, 2),
    SphereGrid(256, 512, 12.0, 4),
    SphereGrid(512, 1024, 12.0, 8),
)


@dataclass
class NormReport:
    """Both sides of a norm identity and the labeled right-hand terms.

    Each term records its ``coefficient``, the bare ``value`` (a squared
    norm or a real part of an inner product) and its ``contribution``
    ``prefactor * coefficient * value`` to ``rhs``.
    """

    name: str
    weight: SobolevWeight
    lhs: float
    rhs: float
    terms: list[dict] = field(default_factory=list)
    prefactor: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def rel_residual(self) -> float:
        return abs(self.rhs - self.lhs) / max(self.lhs, np.finfo(float).tiny)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "s": self.weight.s,
            "t": self.weight.t,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "rel_residual": self.rel_residual,
            "prefactor": self.prefactor,
            "terms": self.terms,
            "meta": self.meta,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


# ---------------------------------------------------------------------------
# spectra on TS^1
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Spectrum:
    """Samples of ``phi^(q, theta)`` at ``q = (j + 1/2) dq`` (FFT order)."""

    coeffs: np.ndarray
    q: np.ndarray
    dq: float
    dtheta: float

    def hilbert(self) -> "Spectrum":
        return self._with(np.sign(self.q)[None, :] * self.coeffs)

    def __mul__(self, c: complex) -> "Spectrum":
        return self._with(c * self.coeffs)

    __rmul__ = __mul__

    def __add__(self, other: "Spectrum") -> "Spectrum":
        return self._with(self.coeffs + other.coeffs)

    def __sub__(self, other: "Spectrum") -> "Spectrum":
        return self._with(self.coeffs - other.coeffs)

    def __neg__(self) -> "Spectrum":
        return self._with(-self.coeffs)

    def _with(self, coeffs) -> "Spectrum":
        return Spectrum(coeffs, self.q, self.dq, self.dtheta)

    def same_grid(self, other: "Spectrum") -> bool:
        return (self.coeffs.shape == other.coeffs.shape and self.dq == other.dq
                and self.dtheta == other.dtheta)


def spectrum(g: SinogramGrid, pad: int = 8) -> Spectrum:
    """Fourier transform in ``p`` on the half-shifted grid of the ``pad``-times padded sinogram."""
    if pad < 1 or int(pad) != pad:
        raise ValueError("pad must be a positive integer")
    n = g.p_count
    big = n * int(pad)
    lo = (big - n) // 2
    v = np.zeros((g.theta_count, big), dtype=complex)
    v[:, lo:lo + n] = g.values
    dp = g.dp
    p0 = g.p[0] - lo * dp
    j = np.arange(big)
    shift = np.exp(-1j * np.pi * j / big)
    dq = 2 * np.pi / (big * dp)
    q = (np.fft.fftfreq(big, d=1.0 / big) + 0.5) * dq
    coeffs = np.fft.fft(v * shift[None, :], axis=1)
    coeffs *= dp / np.sqrt(2 * np.pi) * np.exp(-1j * q * p0)[None, :]
    return Spectrum(coeffs, q, dq, g.dtheta)


def _as_spectrum(x, pad: int) -> Spectrum:
    return x if isinstance(x, Spectrum) else spectrum(x, pad)


def _one_sided(vals: np.ndarray, h: float) -> tuple[float, float]:
    """Value and slope at 0 of a smooth function sampled at ``h/2, 3h/2, 5h/2``."""
    f1, f2, f3 = vals
    return (15 * f1 - 10 * f2 + 3 * f3) / 8, (-2 * f1 + 3 * f2 - f3) / h


def _midpoint_with_correction(integrand: np.ndarray, q: np.ndarray, dq: float, gamma: float,
                              correct: bool) -> complex:
    """``int |q|^gamma F(q) dq`` from samples of ``F`` on the half-shifted grid."""
    total = np.sum(np.abs(q) ** gamma * integrand) * dq
    # |q|^gamma is smooth for even integer gamma and the plain sum is already spectral
    if not correct or (float(gamma).is_integer() and int(gamma) % 2 == 0):
        return total
    order = np.argsort(q)
    qs = q[order]
    fs = integrand[order]
    mid = np.searchsorted(qs, 0.0)
    if mid < 3 or len(qs) - mid < 3:
        return total
    fp, dfp = _one_sided(fs[mid:mid + 3], dq)
    fm, dfm = _one_sided(fs[mid - 1::-1][:3], dq)
    for k, (a, b) in enumerate(((fp, fm), (dfp, -dfm))):
        z = _hurwitz_half(-gamma - k)
        if z != 0.0:
            total -= z * dq ** (gamma + k + 1) / math.factorial(k) * (a + (-1) ** k * b)
    return total


def _hurwitz_half(s: float) -> float:
    """``zeta(s, 1/2) = (2^s - 1) zeta(s)``."""
    if s == 1.0:
        raise ValueError("zeta has a pole at 1")
    return float((2.0 ** s - 1.0) * zeta(s))


def hst_inner_ts(phi, psi, w: SobolevWeight, pad: int = 8, correct: bool = True) -> complex:
    """Weighted spectral inner product ``(phi, psi)`` in ``H^s_t(TS^1)``.

    ``phi`` and ``psi`` are sinograms on a common grid or :class:`Spectrum`
    objects built with :func:`spectrum`.
    """
    w.check_ts(2)
    a = _as_spectrum(phi, pad)
    b = _as_spectrum(psi, pad)
    if not a.same_grid(b):
        raise ValueError("inner product of data on different grids")
    smooth = (1 + a.q ** 2) ** (w.s - w.t)
    per_q = np.sum(a.coeffs * np.conj(b.coeffs), axis=0) * a.dtheta * smooth
    return complex(_midpoint_with_correction(per_q, a.q, a.dq, 2 * w.t, correct) / (2 * np.pi))


def hst_norm_ts(phi, w: SobolevWeight, pad: int = 8, correct: bool = True) -> float:
    """``||phi||_{H^s_t(TS^1)}``."""
    val = hst_inner_ts(phi, phi, w, pad, correct).real
    return math.sqrt(max(val, 0.0))


# ---------------------------------------------------------------------------
# R^n norms
# ---------------------------------------------------------------------------

def _radial_cutoff(f: Phantom) -> float:
    widest = max((lump.width for lump in f.lumps), default=1.0)
    deg = max((lump.degree for lump in f.lumps), default=0)
    return math.sqrt(2 * widest * (60.0 + 2 * deg))


def _sphere_rule(n: int, count: int):
    """Directions and weights integrating over ``S^(n-1)``."""
    if n == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1), np.full(count, 2 * np.pi / count)
    if n == 3:
        z, wz = np.polynomial.legendre.leggauss(count // 2)
        ang = 2 * np.pi * np.arange(count) / count
        Z, A = np.meshgrid(z, ang, indexing="ij")
        r = np.sqrt(1 - Z ** 2)
        dirs = np.stack([r * np.cos(A), r * np.sin(A), Z], axis=-1).reshape(-1, 3)
        wts = (wz[:, None] * np.full(count, 2 * np.pi / count)[None, :]).ravel()
        return dirs, wts
    raise ValueError("R^n norms of phantoms are implemented for n = 2, 3")


def _phantom_norm2(f: Phantom, w: SobolevWeight, nodes: int) -> float:
    n = f.dim
    beta = 2 * w.t + n - 1
    x, wx = roots_jacobi(nodes, 0.0, beta)
    R = _radial_cutoff(f)
    r = R * (1 + x) / 2
    wr = (R / 2) ** (beta + 1) * wx * (1 + r * r) ** (w.s - w.t)
    dirs, wd = _sphere_rule(n, nodes)
    mult = np.array([multiplicity(i) for i in multi_indices(n, f.rank)], dtype=float)
    total = 0.0
    for a in range(0, len(r), 64):
        y = r[a:a + 64, None, None] * dirs[None, :, :]
        fy = f.fourier(y)
        shell = np.sum(np.abs(fy) ** 2 * mult, axis=-1) @ wd
        total += float(np.sum(wr[a:a + 64] * shell))
    return total


def _field_norm2(fields: Mapping[tuple, FieldGrid], w: SobolevWeight) -> float:
    total = 0.0
    for idx, fg in fields.items():
        N = fg.size
        h = fg.step
        j = np.arange(N)
        shift = np.exp(-1j * np.pi * j / N)
        v = fg.values * shift[:, None] * shift[None, :]
        dy = 2 * np.pi / (N * h)
        y = (np.fft.fftfreq(N, d=1.0 / N) + 0.5) * dy
        spec = np.fft.fft2(v) * h * h / (2 * np.pi)
        ymag = np.hypot(y[:, None], y[None, :])
        total += multiplicity(idx) * float(np.sum(w(ymag) * np.abs(spec) ** 2) * dy * dy)
    return total


def hst_norm_rn(f, w: SobolevWeight, tol: float = 1e-12) -> float:
    """``||f||_{H^s_t(R^n)}`` of a phantom (analytic spectrum) or of sampled fields.

    Phantoms are integrated in polar coordinates: Gauss-Jacobi in the radius,
    which absorbs the factor ``r^(2t+n-1)`` exactly, and the trapezoid rule in
    angle; node counts double until the relative change is below ``tol``.
    Sampled input (a :class:`FieldGrid` or a mapping from component index to
    :class:`FieldGrid`) is transformed by FFT on the half-shifted frequency
    grid.
    """
    if isinstance(f, Phantom):
        w.check_rn(f.dim)
        if not f.lumps:
            return 0.0
        nodes = 64
        prev = _phantom_norm2(f, w, nodes)
        while nodes < 2048:
            nodes *= 2
            cur = _phantom_norm2(f, w, nodes)
            if abs(cur - prev) <= tol * max(abs(cur), np.finfo(float).tiny):
                return math.sqrt(max(cur, 0.0))
            prev = cur
        return math.sqrt(max(prev, 0.0))
    fields = {(): f} if isinstance(f, FieldGrid) else dict(f)
    w.check_rn(2)
    return math.sqrt(max(_field_norm2(fields, w), 0.0))


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------

def reshetnyak_constant(n: int) -> float:
    """``Gamma((n-1)/2) / (2 pi^((n-1)/2))``; one half in the plane."""
    return math.gamma((n - 1) / 2) / (2 * math.pi ** ((n - 1) / 2))


def _i_times_hilbert(s: Spectrum) -> Spectrum:
    return 1j * s.hilbert()


def _term(label, coeff, value, prefactor, kind):
    value = float(value)
    return {"label": label, "coefficient": coeff, "value": value,
            "contribution": prefactor * coeff * value, "kind": kind}


def _m1_terms(phi, psi, w: SobolevWeight, pad: int, correct: bool, prefactor: float):
    phi.check_same_grid(psi)
    P = spectrum(phi, pad)
    dP = spectrum(d_theta(phi), pad)
    S = spectrum(psi, pad)
    half, one, three_half = w.shifted(0.5), w.shifted(1.0), w.shifted(1.5)

    def nrm(a, ww):
        return hst_inner_ts(a, a, ww, pad, correct).real

    return [
        _term("||d_theta I0||^2 [+1/2]", 1, nrm(dP, half), prefactor, "norm"),
        _term("||I0||^2 [+1/2]", 1, nrm(P, half), prefactor, "norm"),
        _term("||I1||^2 [+3/2]", 1, nrm(S, three_half), prefactor, "norm"),
        _term("Re(iH d_theta I0, I1) [+1]", 2,
              hst_inner_ts(_i_times_hilbert(dP), S, one, pad, correct).real, prefactor, "cross"),
    ]


def _m2_terms(phi, psi, chi, w: SobolevWeight, pad: int, correct: bool, prefactor: float):
    phi.check_same_grid(psi, chi)
    p = phi.p[None, :]
    I0 = spectrum(phi, pad)
    I0t = spectrum(d_theta(phi), pad)
    I0tt = spectrum(d_theta(phi, 2), pad)
    pI0 = spectrum(phi * p, pad)
    I1 = spectrum(psi, pad)
    I1t = spectrum(d_theta(psi), pad)
    I2 = spectrum(chi, pad)
    iH = _i_times_hilbert

    def ip(a, b, shift):
        return hst_inner_ts(a, b, w.shifted(shift), pad, correct).real

    spec = [
        ("||I2||^2 [+5/2]", 1, (I2, I2, 2.5), "norm"),
        ("||d_theta I1||^2 [+3/2]", 4, (I1t, I1t, 1.5), "norm"),
        ("||I1||^2 [+3/2]", 2, (I1, I1, 1.5), "norm"),
        ("||d_theta^2 I0||^2 [+1/2]", 1, (I0tt, I0tt, 0.5), "norm"),
        ("||d_theta I0||^2 [+1/2]", -2, (I0t, I0t, 0.5), "norm"),
        ("||p I0||^2 [+3/2]", 1, (pI0, pI0, 1.5), "norm"),
        ("||I0||^2 [+1/2]", 8, (I0, I0, 0.5), "norm"),
        ("Re(iH I2, d_theta I1) [+2]", -4, (iH(I2), I1t, 2.0), "cross"),
        ("Re(iH I2, p I0) [+2]", 2, (iH(I2), pI0, 2.0), "cross"),
        ("Re(I2, d_theta^2 I0) [+3/2]", -2, (I2, I0tt, 1.5), "cross"),
        ("Re(I2, I0) [+3/2]", -4, (I2, I0, 1.5), "cross"),
        ("Re(d_theta I1, p I0) [+3/2]", -4, (I1t, pI0, 1.5), "cross"),
        ("Re(iH d_theta I1, d_theta^2 I0) [+1]", -4, (iH(I1t), I0tt, 1.0), "cross"),
        ("Re(iH I1, d_theta I0) [+1]", 4, (iH(I1), I0t, 1.0), "cross"),
        ("Re(iH d_theta^2 I0, p I0) [+1]", -2, (iH(I0tt), pI0, 1.0), "cross"),
        ("Re(iH p I0, I0) [+1]", 4, (iH(pI0), I0, 1.0), "cross"),
    ]
    return [_term(label, c, ip(*args), prefactor, kind) for label, c, args, kind in spec]


def data_norm_h1(phi: SinogramGrid, psi: SinogramGrid, w: SobolevWeight, pad: int = 8,
                 correct: bool = True) -> float:
    """Squared data-side norm of a pair ``(phi, psi)`` on ``TS^1``.

    ``(1/2) [||d_theta phi||^2 + ||phi||^2 + ||psi||^2 + 2 Re(iH d_theta phi, psi)]`` with
    the weights shifted by ``1/2``, ``1/2``, ``3/2`` and ``1``.
    """
    a = reshetnyak_constant(2)
    return float(sum(t["contribution"] for t in _m1_terms(phi, psi, w, pad, correct, a)))


def data_norm_h2(phi: SinogramGrid, psi: SinogramGrid, chi: SinogramGrid, w: SobolevWeight,
                 pad: int = 8, correct: bool = True) -> float:
    """Squared data-side norm of a triple ``(phi, psi, chi)`` on ``TS^1`` (sixteen terms over 8)."""
    return float(sum(t["contribution"] for t in _m2_terms(phi, psi, chi, w, pad, correct, 1 / 8)))


def _lhs_and_data(f: Phantom, rank: int, w: SobolevWeight, grid: SphereGrid, data):
    if f.rank != rank or f.dim != 2:
        raise ValueError(f"expected a rank-{rank} field in the plane, got rank {f.rank} in R^{f.dim}")
    w.check_rn(2)
    w.shifted(0.5).check_ts(2)
    data = grid.sinograms(f) if data is None else list(data)
    if len(data) != rank + 1:
        raise ValueError(f"need I^0..I^{rank}, got {len(data)} sinograms")
    lhs = hst_norm_rn(f, w) ** 2
    return lhs, data


def _meta(grid: SphereGrid, data, pad: int) -> dict:
    g = data[0]
    return {"theta_count": g.theta_count, "p_count": g.p_count, "p_max": g.p_max, "pad": pad}


def reshetnyak_m0(f: Phantom, w: SobolevWeight, grid: SphereGrid = SphereGrid(), data=None,
                  correct: bool = True) -> NormReport:
    """``||f||^2_{H^s_t(R^2)}`` against ``a_2 ||I f||^2_{H^{s+1/2}_{t+1/2}(TS^1)}``."""
    lhs, data = _lhs_and_data(f, 0, w, grid, data)
    a = reshetnyak_constant(2)
    val = hst_inner_ts(data[0], data[0], w.shifted(0.5), grid.pad, correct).real
    terms = [_term("||I0||^2 [+1/2]", 1, val, a, "norm")]
    return NormReport("reshetnyak-m0", w, lhs, a * val, terms, a, _meta(grid, data, grid.pad))


def reshetnyak_m1_2d(f: Phantom, w: SobolevWeight, grid: SphereGrid = SphereGrid(), data=None,
                     correct: bool = True) -> NormReport:
    """The vector-field identity in the plane, four labeled terms."""
    lhs, data = _lhs_and_data(f, 1, w, grid, data)
    a = reshetnyak_constant(2)
    terms = _m1_terms(data[0], data[1], w, grid.pad, correct, a)
    rhs = float(sum(t["contribution"] for t in terms))
    return NormReport("reshetnyak-m1", w, lhs, rhs, terms, a, _meta(grid, data, grid.pad))


def reshetnyak_m2_2d(f: Phantom, w: SobolevWeight, grid: SphereGrid = SphereGrid(), data=None,
                     correct: bool = True) -> NormReport:
    """The symmetric 2-tensor identity in the plane, sixteen labeled terms (``8 ||f||^2 = sum``)."""
    lhs, data = _lhs_and_data(f, 2, w, grid, data)
    terms = _m2_terms(data[0], data[1], data[2], w, grid.pad, correct, 1 / 8)
    rhs = float(sum(t["contribution"] for t in terms))
    return NormReport("reshetnyak-m2", w, lhs, rhs, terms, 1 / 8, _meta(grid, data, grid.pad))


def stability_checks(f: Phantom, w: SobolevWeight, m: int, grid: SphereGrid = SphereGrid(),
                     data=None, correct: bool = True) -> dict:
    """Check the planar stability bounds for ``m = 1`` or ``m = 2``.

    For ``m = 1`` the bound is ``||f||^2 <= ||d_theta I0||^2 + ||I0||^2 + ||I1||^2``,
    reported together with the cross-term bound
    ``2 |(iH d_theta I0, I1)| <= ||d_theta I0||^2 + ||I1||^2``.  For ``m = 2`` the
    bound carries the factor 6; the ratio of ``||f||^2`` to the bracket of
    the general-dimension form is reported as ``empirical_b``.
    """
    if m not in (1, 2):
        raise ValueError("stability bounds are available for m = 1 and m = 2")
    lhs, data = _lhs_and_data(f, m, w, grid, data)
    pad = grid.pad
    half, one, three_half, five_half = (w.shifted(d) for d in (0.5, 1.0, 1.5, 2.5))

    def nrm(g, ww):
        return hst_inner_ts(g, g, ww, pad, correct).real

    if m == 1:
        phi, psi = data
        dphi = spectrum(d_theta(phi), pad)
        n_dphi = nrm(dphi, half)
        n_phi = nrm(phi, half)
        n_psi = nrm(psi, three_half)
        rhs = n_dphi + n_phi + n_psi
        cross = 2 * abs(hst_inner_ts(_i_times_hilbert(dphi), psi, one, pad, correct))
        out = {
            "m": 1, "lhs": lhs, "rhs": rhs, "slack": rhs - lhs, "holds": bool(rhs - lhs >= 0),
            "cross_term": {"lhs": cross, "rhs": n_dphi + n_psi, "slack": n_dphi + n_psi - cross,
                           "holds": bool(n_dphi + n_psi - cross >= 0)},
        }
        return out
    phi, psi, chi = data
    p = phi.p[None, :]
    n_i2 = nrm(chi, five_half)
    n_di1 = nrm(d_theta(psi), three_half)
    n_i1 = nrm(psi, three_half)
    n_pi0 = nrm(phi * p, three_half)
    n_ddi0 = nrm(d_theta(phi, 2), half)
    n_di0 = nrm(d_theta(phi), half)
    n_i0 = nrm(phi, half)
    bracket = n_i2 + n_di1 + n_i1 + n_pi0 + n_ddi0 + n_di0 + n_i0
    rhs = 6 * bracket
    general = n_i2 + 2 * n_di1 + n_i1 + n_pi0 + n_ddi0 + 2 * n_di0 + n_i0
    return {
        "m": 2, "lhs": lhs, "rhs": rhs, "slack": rhs - lhs, "holds": bool(rhs - lhs >= 0),
        "empirical_b": lhs / general if general > 0 else 0.0,
    }
