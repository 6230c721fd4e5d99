"""Stationary covariance families with anisotropic length-scales.

Four families are provided: squared-exponential, tensorized exponential,
Matern 3/2 and Matern 5/2.  All are products over input dimensions of a
one-dimensional correlation in the scaled distance h_j = |x_j - y_j| / theta_j,
multiplied by the process variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch

FAMILIES = ("squared-exponential", "exponential", "matern32", "matern52")

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """A covariance function: family name, variance and per-dimension scales.

    ``variance`` is the process variance, so k(x, x) == variance for every x.
    ``lengthscales`` has one positive entry per input dimension.
    """

    family: str
    variance: float
    lengthscales: tuple = field(default=(1.0,))

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; choose from {FAMILIES}")
        if not self.variance > 0.0:
            raise ValueError("variance must be positive")
        ls = tuple(float(t) for t in np.atleast_1d(self.lengthscales))
        if not all(t > 0.0 for t in ls):
            raise ValueError("all lengthscales must be positive")
        object.__setattr__(self, "lengthscales", ls)

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def with_lengthscales(self, lengthscales) -> "KernelSpec":
        return KernelSpec(self.family, self.variance, tuple(lengthscales))

    def with_variance(self, variance) -> "KernelSpec":
        return KernelSpec(self.family, float(variance), self.lengthscales)


def _correlation(family: str, h: np.ndarray) -> np.ndarray:
    """Product correlation over the last axis of scaled distances h >= 0."""
    if family == "squared-exponential":
        return np.exp(-0.5 * np.sum(h * h, axis=-1))
    if family == "exponential":
        return np.exp(-np.sum(h, axis=-1))
    if family == "matern32":
        u = _SQRT3 * h
        return np.prod((1.0 + u) * np.exp(-u), axis=-1)
    if family == "matern52":
        u = _SQRT5 * h
        return np.prod((1.0 + u + u * u / 3.0) * np.exp(-u), axis=-1)
    raise ValueError(f"unknown kernel family {family!r}")


def _corr_2d(family: str, h: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """One-dimensional correlation factor, in place on h >= 0.

    ``poly`` is same-shape scratch for the polynomial part.
    """
    if family == "squared-exponential":
        np.multiply(h, h, out=h)
        np.multiply(h, -0.5, out=h)
        return np.exp(h, out=h)
    if family == "exponential":
        np.negative(h, out=h)
        return np.exp(h, out=h)
    if family == "matern32":
        np.multiply(h, _SQRT3, out=h)
        np.add(h, 1.0, out=poly)
        np.negative(h, out=h)
        np.exp(h, out=h)
        np.multiply(h, poly, out=h)
        return h
    if family == "matern52":
        np.multiply(h, _SQRT5, out=h)
        np.multiply(h, h, out=poly)
        np.multiply(poly, 1.0 / 3.0, out=poly)
        poly += h
        poly += 1.0
        np.negative(h, out=h)
        np.exp(h, out=h)
        np.multiply(h, poly, out=h)
        return h
    raise ValueError(f"unknown kernel family {family!r}")


def eval(spec: KernelSpec, x, y) -> float:
    """Covariance between two points."""
    xv = np.asarray(x, dtype=float).reshape(-1)
    yv = np.asarray(y, dtype=float).reshape(-1)
    if xv.shape[0] != spec.dim or yv.shape[0] != spec.dim:
        raise DimensionMismatch(
            f"points of dimension {xv.shape[0]}/{yv.shape[0]} against a "
            f"{spec.dim}-dimensional kernel")
    h = np.abs(xv - yv) / np.asarray(spec.lengthscales)
    return float(spec.variance * _correlation(spec.family, h))


def cross_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Covariance matrix between two point sets, shape (n, m).

    ``A`` is (n, d), ``B`` is (m, d); entry (i, j) is the covariance between
    A[i] and B[j].  ``cross_matrix(spec, A, A)`` is symmetric PSD.
    """
    Am = np.atleast_2d(np.asarray(A, dtype=float))
    Bm = np.atleast_2d(np.asarray(B, dtype=float))
    if Bm.size == 0:
        Bm = Bm.reshape(0, spec.dim)
    if Am.size == 0:
        Am = Am.reshape(0, spec.dim)
    if Am.shape[1] != spec.dim or Bm.shape[1] != spec.dim:
        raise DimensionMismatch(
            f"point sets of dimension {Am.shape[1]}/{Bm.shape[1]} against a "
            f"{spec.dim}-dimensional kernel")
    out = np.empty((Am.shape[0], Bm.shape[0]))
    cross_matrix_into(spec, Am, Bm, out)
    return out


def cross_matrix_into(spec: KernelSpec, Am, Bm, out, scratch=None) -> np.ndarray:
    """:func:`cross_matrix` into a preallocated C-contiguous buffer.

    One dimension at a time keeps temporaries two-dimensional (the scaled
    distances never materialize as an (n, m, d) block) and ``out`` plus the
    optional same-shape ``scratch`` absorb every intermediate, so steady
    callers allocate nothing.
    """
    if scratch is None:
        scratch = np.empty_like(out)
    se = spec.family == "squared-exponential"
    for j, theta in enumerate(spec.lengthscales):
        h = out if j == 0 else scratch
        np.subtract(Am[:, j, None], Bm[None, :, j], out=h)
        np.abs(h, out=h)
        np.multiply(h, 1.0 / theta, out=h)
        if se:
            np.multiply(h, h, out=h)
        else:
            poly = scratch if j == 0 else np.empty_like(out)
            _corr_2d(spec.family, h, poly)
        if j > 0:
            if se:
                out += h
            else:
                out *= h
    if se:
        np.multiply(out, -0.5, out=out)
        np.exp(out, out=out)
    np.multiply(out, spec.variance, out=out)
    return out
