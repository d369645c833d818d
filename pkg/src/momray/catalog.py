"""Named test phantoms and a seeded random generator."""

from __future__ import annotations

import numpy as np

from .tensor import Lump, Phantom, sym_dim

__all__ = ["CATALOG", "catalog_names", "catalog_phantom", "random_phantom", "rotated_gradient"]


def _scalar_bump() -> Phantom:
    return Phantom(0, 2, (
        Lump.gaussian([0.8, -0.4], 0.9, [1.0]),
        Lump.from_monomials([-1.2, 1.0], 1.3, 1, {(0, 0): [0.6], (1, 0): [0.4], (0, 2): [-0.3]}),
    ))


def rotated_gradient(psi: Phantom) -> Phantom:
    """``(-d2 psi, d1 psi)`` for a scalar phantom ``psi``: a divergence-free vector field."""
    if psi.rank != 0 or psi.dim != 2:
        raise ValueError("stream function must be a planar scalar phantom")
    grad = psi.d()
    lumps = []
    for lump in grad.lumps:
        c = np.stack([-lump.coeffs[1], lump.coeffs[0]])
        lumps.append(Lump(lump.center, lump.width, c))
    return Phantom(1, 2, tuple(lumps))


def _gauss_vec() -> Phantom:
    return Phantom(1, 2, (
        Lump.gaussian([0.5, 0.3], 1.0, [1.0, -0.5]),
        Lump.gaussian([-1.0, -0.8], 0.7, [0.3, 0.8]),
    ))


def _potential_vec() -> Phantom:
    return _scalar_bump().d()


def _solenoidal_vec() -> Phantom:
    stream = Phantom(0, 2, (
        Lump.gaussian([0.4, 0.6], 0.8, [1.5]),
        Lump.gaussian([-1.1, -0.5], 1.1, [-0.9]),
    ))
    return rotated_gradient(stream) + _scalar_bump().d().scaled(0.1)


def _gauss_tensor() -> Phantom:
    return Phantom(2, 2, (
        Lump.gaussian([0.6, -0.2], 1.0, [1.0, 0.3, 0.7]),
        Lump.from_monomials([-0.9, 0.9], 1.2, 3, {(0, 0): [0.2, -0.4, 0.5], (1, 1): [0.3, 0.0, -0.2]}),
    ))


def _isotropic_tensor() -> Phantom:
    g = _scalar_bump()
    lumps = []
    for lump in g.lumps:
        c = lump.coeffs[0]
        lumps.append(Lump(lump.center, lump.width, np.stack([c, np.zeros_like(c), c])))
    return Phantom(2, 2, tuple(lumps))


def _potential_tensor() -> Phantom:
    return _gauss_vec().d()


CATALOG = {
    "gauss-scalar-0": lambda: Phantom(0, 2, (Lump.gaussian([0.0, 0.0], 0.5, [1.0]),)),
    "two-lump-scalar-0": _scalar_bump,
    "gauss-vec-1": _gauss_vec,
    "potential-vec-1": _potential_vec,
    "solenoidal-vec-1": _solenoidal_vec,
    "gauss-tensor-2": _gauss_tensor,
    "isotropic-tensor-2": _isotropic_tensor,
    "potential-tensor-2": _potential_tensor,
}


def catalog_names() -> list[str]:
    return sorted(CATALOG)


def catalog_phantom(name: str) -> Phantom:
    """The catalog entry ``name``; raises ``KeyError`` listing the valid names."""
    try:
        return CATALOG[name]()
    except KeyError:
        raise KeyError(f"unknown phantom {name!r}; choose from {', '.join(catalog_names())}") from None


def random_phantom(rng: np.random.Generator, rank: int, lumps: int = 2, degree: int = 2,
                   center_radius: float = 2.0, width_range=(0.7, 1.5), dim: int = 2) -> Phantom:
    """A sum of ``lumps`` random Gaussian-polynomial lumps with real coefficients."""
    ncomp = sym_dim(dim, rank)
    out = []
    for _ in range(lumps):
        center = rng.uniform(-center_radius, center_radius, dim)
        width = rng.uniform(*width_range)
        coeffs = rng.normal(size=(ncomp,) + (degree + 1,) * dim)
        out.append(Lump(center, width, coeffs))
    return Phantom(rank, dim, tuple(out))
