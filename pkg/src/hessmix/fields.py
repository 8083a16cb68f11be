"""Coefficient and boundary-datum functions.

Coefficients are either constants or polynomials in s = |t - center|^2;
boundary data may additionally be a quadratic polynomial in the absolute
coordinates t (constant plus sum of c_ij t_i t_j terms), which covers
manufactured Neumann data of quadratic solutions.  All are immutable,
evaluate on (m, d) point arrays, and serialize to the config syntax.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConstantFn:
    value: float

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        return np.full(pts.shape[0], float(self.value))

    def spec(self):
        return f"const:{self.value!r}"


@dataclass(frozen=True)
class RadialPolyFn:
    """c_0 + c_1 s + c_2 s^2 + ... with s = |t - center|^2."""

    coeffs: tuple
    center: tuple

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        s = ((pts - np.asarray(self.center)) ** 2).sum(axis=1)
        out = np.zeros(pts.shape[0])
        for c in reversed(self.coeffs):
            out = out * s + c
        return out

    def spec(self):
        return "poly_s:" + ",".join(repr(float(c)) for c in self.coeffs)


@dataclass(frozen=True)
class QuadraticFn:
    """const + sum over (i, j, c) of c * t_i t_j, indices 0-based here."""

    const: float
    terms: tuple  # ((i, j, c), ...)

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        out = np.full(pts.shape[0], float(self.const))
        for i, j, c in self.terms:
            out += c * pts[:, i] * pts[:, j]
        return out

    def spec(self):
        parts = [f"{self.const!r}"]
        parts += [f"{i + 1},{j + 1}:{c!r}" for i, j, c in self.terms]
        return "quad:" + ";".join(parts)
