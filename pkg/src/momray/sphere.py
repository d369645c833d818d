"""Spectral calculus on TS^1 in the chart ``x = p(-sin th, cos th)``, ``xi = (cos th, sin th)``.

Sinograms are complex arrays ``values[theta, p]`` on a uniform periodic grid
in ``theta`` and a uniform grid ``p in [-p_max, p_max)``.  Derivatives are
spectral in both directions; ``p``-periodicity is harmless because the
sinograms of phantoms decay far below machine precision at the boundary.

The tangent vector fields are

    X_i = w_i(th) d/dp,   Xi_i = w_i(th) d/dth,   w(th) = (-sin th, cos th),

with indices 0-based.  The Fourier transform in ``p`` is
``phi^(q, th) = (2 pi)^(-1/2) int exp(-i q p) phi(p, th) dp``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SinogramGrid",
    "SpectralSinogram",
    "fft_p",
    "ifft_p",
    "d_p",
    "d_theta",
    "d_q",
    "chart_normal",
    "chart_direction",
    "x_coord",
    "X",
    "Xi",
    "xi_ops",
    "hilbert_p",
    "z_op",
    "commutator_suite",
    "fourier_commutation_suite",
]


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SinogramGrid:
    """Samples of a function on TS^1; ``values`` has shape ``(theta_count, p_count)``."""

    values: np.ndarray
    p_max: float = 12.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 2:
            raise ValueError(f"sinogram values must be 2-D (theta, p), got shape {v.shape}")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "p_max", float(self.p_max))

    @property
    def theta_count(self) -> int:
        return self.values.shape[0]

    @property
    def p_count(self) -> int:
        return self.values.shape[1]

    @property
    def dp(self) -> float:
        return 2.0 * self.p_max / self.p_count

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.theta_count

    @property
    def p(self) -> np.ndarray:
        return -self.p_max + self.dp * np.arange(self.p_count)

    @property
    def theta(self) -> np.ndarray:
        return self.dtheta * np.arange(self.theta_count)

    @classmethod
    def zeros(cls, theta_count: int, p_count: int, p_max: float = 12.0) -> "SinogramGrid":
        return cls(np.zeros((theta_count, p_count), dtype=complex), p_max)

    @classmethod
    def from_function(cls, func, theta_count: int, p_count: int, p_max: float = 12.0) -> "SinogramGrid":
        """Sample ``func(P, TH)`` on the mesh."""
        g = cls.zeros(theta_count, p_count, p_max)
        P, TH = np.meshgrid(g.p, g.theta)
        return g.with_values(func(P, TH))

    def with_values(self, values) -> "SinogramGrid":
        values = np.asarray(values, dtype=complex)
        if values.shape != self.values.shape:
            raise ValueError(f"shape {values.shape} does not match grid {self.values.shape}")
        return SinogramGrid(values, self.p_max)

    def same_grid(self, other: "SinogramGrid") -> bool:
        return self.values.shape == other.values.shape and np.isclose(self.p_max, other.p_max)

    def check_same_grid(self, *others: "SinogramGrid") -> None:
        for o in others:
            if not self.same_grid(o):
                raise ValueError(
                    f"grid mismatch: {self.values.shape}/p_max={self.p_max} vs {o.values.shape}/p_max={o.p_max}")

    def mesh(self):
        """``(P, TH)`` arrays matching ``values``."""
        return np.meshgrid(self.p, self.theta)

    def __add__(self, other):
        if isinstance(other, SinogramGrid):
            self.check_same_grid(other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    def __sub__(self, other):
        if isinstance(other, SinogramGrid):
            self.check_same_grid(other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other)

    def __mul__(self, other):
        if isinstance(other, SinogramGrid):
            self.check_same_grid(other)
            return self.with_values(self.values * other.values)
        return self.with_values(self.values * other)

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return self.with_values(-self.values)


@dataclass(frozen=True)
class SpectralSinogram:
    """Fourier transform in ``p``; ``coeffs[theta, q]`` in FFT frequency order.

    ``pad`` records zero-padding of the ``p`` domain before the transform,
    which refines the ``q`` spacing to ``pi / (pad * p_max)``.
    """

    coeffs: np.ndarray
    p_max: float
    pad: int = 1
    p_count: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=complex))
        if self.p_count == 0:
            object.__setattr__(self, "p_count", self.coeffs.shape[1] // self.pad)

    @property
    def theta_count(self) -> int:
        return self.coeffs.shape[0]

    @property
    def dp(self) -> float:
        return 2.0 * self.p_max / self.p_count

    @property
    def q(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.coeffs.shape[1], d=self.dp)

    @property
    def dq(self) -> float:
        return 2.0 * np.pi / (self.coeffs.shape[1] * self.dp)

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.theta_count

    @property
    def theta(self) -> np.ndarray:
        return self.dtheta * np.arange(self.theta_count)

    def with_coeffs(self, coeffs) -> "SpectralSinogram":
        return SpectralSinogram(np.asarray(coeffs, dtype=complex), self.p_max, self.pad, self.p_count)

    def hilbert(self) -> "SpectralSinogram":
        return self.with_coeffs(np.sign(self.q)[None, :] * self.coeffs)

    def d_theta(self, order: int = 1) -> "SpectralSinogram":
        return self.with_coeffs(_theta_derivative(self.coeffs, order))


def _theta_derivative(v: np.ndarray, order: int = 1) -> np.ndarray:
    n = v.shape[0]
    l = np.fft.fftfreq(n, d=1.0 / n)
    mult = (1j * l) ** order
    if order % 2 and n % 2 == 0:
        mult[n // 2] = 0.0
    return np.fft.ifft(mult[:, None] * np.fft.fft(v, axis=0), axis=0)


def fft_p(g: SinogramGrid, pad: int = 1) -> SpectralSinogram:
    """Discrete version of ``(2 pi)^(-1/2) int exp(-i q p) phi(p, th) dp``.

    With ``pad > 1`` the ``p`` domain is extended by zeros to ``pad * p_max``
    on both sides before transforming.
    """
    N = g.p_count
    if not _is_pow2(N):
        raise ValueError(f"p_count must be a power of two, got {N}")
    if int(pad) != pad or pad < 1 or not _is_pow2(int(pad)):
        raise ValueError(f"pad must be a power of two >= 1, got {pad}")
    pad = int(pad)
    M = pad * N
    v = g.values
    if pad > 1:
        big = np.zeros((g.theta_count, M), dtype=complex)
        off = (M - N) // 2
        big[:, off:off + N] = v
        v = big
    big_pmax = pad * g.p_max
    q = 2.0 * np.pi * np.fft.fftfreq(M, d=g.dp)
    coeffs = g.dp / np.sqrt(2.0 * np.pi) * np.exp(1j * q * big_pmax)[None, :] * np.fft.fft(v, axis=1)
    return SpectralSinogram(coeffs, g.p_max, pad, N)


def ifft_p(s: SpectralSinogram) -> SinogramGrid:
    """Inverse of :func:`fft_p`, cropping any padding."""
    big_pmax = s.pad * s.p_max
    v = np.fft.ifft(np.exp(-1j * s.q * big_pmax)[None, :] * s.coeffs, axis=1) * np.sqrt(2.0 * np.pi) / s.dp
    if s.pad > 1:
        off = (v.shape[1] - s.p_count) // 2
        v = v[:, off:off + s.p_count]
    return SinogramGrid(v, s.p_max)


def d_p(g: SinogramGrid, order: int = 1) -> SinogramGrid:
    """Spectral ``d^order / dp^order``."""
    N = g.p_count
    q = 2.0 * np.pi * np.fft.fftfreq(N, d=g.dp)
    mult = (1j * q) ** order
    if order % 2 and N % 2 == 0:
        mult[N // 2] = 0.0
    return g.with_values(np.fft.ifft(mult[None, :] * np.fft.fft(g.values, axis=1), axis=1))


def d_theta(g: SinogramGrid, order: int = 1) -> SinogramGrid:
    """Spectral ``d^order / dth^order`` on the periodic ``theta`` grid."""
    return g.with_values(_theta_derivative(g.values, order))


def d_q(s: SpectralSinogram) -> SpectralSinogram:
    """Spectral derivative in ``q`` of the sampled transform, computed on the ``q`` grid."""
    M = s.coeffs.shape[1]
    mult = 2j * np.pi * np.fft.fftfreq(M) / s.dq
    if M % 2 == 0:
        mult[M // 2] = 0.0
    return s.with_coeffs(np.fft.ifft(mult[None, :] * np.fft.fft(s.coeffs, axis=1), axis=1))


def chart_normal(theta, i: int) -> np.ndarray:
    """``w_i(th)`` with ``w = (-sin th, cos th)``: the unit vector along ``x``."""
    theta = np.asarray(theta, dtype=float)
    return (-np.sin(theta), np.cos(theta))[_check_index(i)]


def chart_direction(theta, i: int) -> np.ndarray:
    """``xi_i(th)`` with ``xi = (cos th, sin th)``."""
    theta = np.asarray(theta, dtype=float)
    return (np.cos(theta), np.sin(theta))[_check_index(i)]


def _check_index(i: int) -> int:
    if i not in (0, 1):
        raise ValueError(f"component index must be 0 or 1 on TS^1, got {i}")
    return i


def x_coord(g: SinogramGrid, i: int) -> np.ndarray:
    """The function ``x_i = p w_i(th)`` sampled on ``g``'s mesh."""
    P, TH = g.mesh()
    return P * chart_normal(TH, i)


def xi_coord(g: SinogramGrid, i: int) -> np.ndarray:
    return np.broadcast_to(chart_direction(g.theta, i)[:, None], g.values.shape)


def X(g: SinogramGrid, i: int) -> SinogramGrid:
    return d_p(g) * chart_normal(g.theta, i)[:, None]


def Xi(g: SinogramGrid, i: int) -> SinogramGrid:
    return d_theta(g) * chart_normal(g.theta, i)[:, None]


def xi_ops(g: SinogramGrid, i: int) -> tuple[SinogramGrid, SinogramGrid]:
    """``(X_i g, Xi_i g)``."""
    return X(g, i), Xi(g, i)


def hilbert_p(g: SinogramGrid) -> SinogramGrid:
    """Multiplier ``sgn(q)`` in the ``p`` frequency, with ``sgn(0) = 0``."""
    N = g.p_count
    q = np.fft.fftfreq(N)
    return g.with_values(np.fft.ifft(np.sign(q)[None, :] * np.fft.fft(g.values, axis=1), axis=1))


def z_op(g: SinogramGrid, route: str = "hilbert") -> SinogramGrid:
    """First-order operator ``Z``.

    ``route="hilbert"`` applies ``H d/dth``; ``route="spectral"`` contracts
    ``y^i Xi_i`` on the transformed side and divides by ``|y|``.
    """
    if route == "hilbert":
        return hilbert_p(d_theta(g))
    if route != "spectral":
        raise ValueError(f"unknown route {route!r}")
    s = fft_p(g)
    th = s.theta[:, None]
    q = s.q[None, :]
    xi_hat = s.d_theta().coeffs
    acc = np.zeros_like(s.coeffs)
    for i in (0, 1):
        y_i = q * chart_normal(th, i)
        acc = acc + y_i * chart_normal(th, i) * xi_hat
    absq = np.abs(q)
    out = np.where(absq > 0, acc / np.where(absq > 0, absq, 1.0), 0.0)
    return ifft_p(s.with_coeffs(out))


def _max_abs(v) -> float:
    v = v.values if isinstance(v, SinogramGrid) else np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0


def commutator_suite(g: SinogramGrid) -> dict[str, float]:
    """Max residuals of the commutation relations of ``X_i``, ``Xi_i`` and of ``xi^i X_i = xi^i Xi_i = 0``."""
    th = g.theta[:, None]
    xs = [x_coord(g, i) for i in (0, 1)]
    xis = [chart_direction(th, i) for i in (0, 1)]
    Xg = [X(g, i) for i in (0, 1)]
    Xig = [Xi(g, i) for i in (0, 1)]
    r_xx = r_xixi = r_xxi = 0.0
    for i in (0, 1):
        for j in (0, 1):
            r_xx = max(r_xx, _max_abs(X(Xg[j], i) - X(Xg[i], j)))
            lhs = Xi(Xig[j], i) - Xi(Xig[i], j)
            rhs = xs[i] * Xg[j].values - xs[j] * Xg[i].values + xis[i] * Xig[j].values - xis[j] * Xig[i].values
            r_xixi = max(r_xixi, _max_abs(lhs.values - rhs))
            lhs = X(Xig[j], i) - Xi(Xg[i], j)
            r_xxi = max(r_xxi, _max_abs(lhs.values - xis[i] * Xg[j].values))
    tangent_x = xis[0] * Xg[0].values + xis[1] * Xg[1].values
    tangent_xi = xis[0] * Xig[0].values + xis[1] * Xig[1].values
    return {
        "[X_i,X_j]=0": r_xx,
        "[Xi_i,Xi_j]=x_iX_j-x_jX_i+xi_iXi_j-xi_jXi_i": r_xixi,
        "[X_i,Xi_j]=xi_iX_j": r_xxi,
        "xi^iX_i=0": _max_abs(tangent_x),
        "xi^iXi_i=0": _max_abs(tangent_xi),
    }


def fourier_commutation_suite(g: SinogramGrid) -> dict[str, float]:
    """Max residuals of ``(X_i phi)^ = i y_i phi^``, ``(Xi_i phi)^ = Xi_i phi^``, ``(x_i phi)^ = i X_i phi^``.

    On the transformed side ``y_i = q w_i``, ``Xi_i = w_i d/dth`` and ``X_i = w_i d/dq``.
    """
    s = fft_p(g)
    th = s.theta[:, None]
    q = s.q[None, :]
    dq_s = d_q(s).coeffs
    dth_s = s.d_theta().coeffs
    r1 = r2 = r3 = 0.0
    for i in (0, 1):
        w = chart_normal(th, i)
        r1 = max(r1, _max_abs(fft_p(X(g, i)).coeffs - 1j * q * w * s.coeffs))
        r2 = max(r2, _max_abs(fft_p(Xi(g, i)).coeffs - w * dth_s))
        r3 = max(r3, _max_abs(fft_p(g * x_coord(g, i)).coeffs - 1j * w * dq_s))
    return {
        "(X_i phi)^=i y_i phi^": r1,
        "(Xi_i phi)^=Xi_i phi^": r2,
        "(x_i phi)^=i X_i phi^": r3,
    }
