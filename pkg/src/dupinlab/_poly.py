"""Graded-lex monomial bases and dense polynomials over them."""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
import sympy

from ._jets import multi_indices


def monomial_exponents(dim, degree):
    return np.array(multi_indices(dim, degree), dtype=int)


def n_monomials(dim, degree):
    return comb(dim + degree, degree)


def design_matrix(points, degree):
    """Rows are all monomials of total degree <= degree at each point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    exps = monomial_exponents(points.shape[1], degree)
    # powers[k, i, e] = x_{k,i}^e
    powers = points[:, :, None] ** np.arange(degree + 1)[None, None, :]
    cols = np.ones((points.shape[0], len(exps)))
    for i in range(points.shape[1]):
        cols *= powers[:, i, exps[:, i]]
    return cols


@dataclass(frozen=True)
class Polynomial:
    """Dense polynomial with coefficients over the grlex basis of degree <= ``degree``."""

    dim: int
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (n_monomials(self.dim, self.degree),):
            raise ValueError("coefficient count does not match the monomial basis")
        object.__setattr__(self, "coeffs", coeffs)

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, self.dim)
        return (design_matrix(flat, self.degree) @ self.coeffs).reshape(points.shape[:-1])

    def gradient(self, points):
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, self.dim)
        exps = monomial_exponents(self.dim, self.degree)
        grad = np.empty_like(flat)
        for i in range(self.dim):
            mask = exps[:, i] > 0
            lowered = exps[mask].copy()
            lowered[:, i] -= 1
            vals = np.ones((flat.shape[0], mask.sum()))
            for j in range(self.dim):
                vals *= flat[:, [j]] ** lowered[:, j]
            grad[:, i] = vals @ (self.coeffs[mask] * exps[mask, i])
        return grad.reshape(points.shape)

    def normalized_residual(self, points):
        """|P(x)| / (|c| max(1, |x|)^d): a scale-aware vanishing measure."""
        points = np.asarray(points, dtype=float)
        scale = np.maximum(1.0, np.linalg.norm(points, axis=-1)) ** self.degree
        return np.abs(self(points)) / (np.linalg.norm(self.coeffs) * scale)

    def unit(self):
        c = self.coeffs / np.linalg.norm(self.coeffs)
        return Polynomial(self.dim, self.degree, c)

    def cosine(self, other):
        """|cos| between coefficient vectors, padding the lower degree with zeros."""
        d = max(self.degree, other.degree)
        a, b = self.promote(d).coeffs, other.promote(d).coeffs
        return abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))

    def promote(self, degree):
        if degree < self.degree:
            raise ValueError("cannot lower the degree")
        c = np.zeros(n_monomials(self.dim, degree))
        c[: len(self.coeffs)] = self.coeffs
        return Polynomial(self.dim, degree, c)

    def symbols(self):
        return sympy.symbols(f"x1:{self.dim + 1}")

    def to_sympy(self):
        xs = self.symbols()
        exps = monomial_exponents(self.dim, self.degree)
        return sum(
            float(c) * sympy.Mul(*[x**int(e) for x, e in zip(xs, a)])
            for c, a in zip(self.coeffs, exps)
            if c != 0.0
        )

    @classmethod
    def from_sympy(cls, expr, symbols, degree=None):
        poly = sympy.Poly(sympy.expand(expr), *symbols)
        d = poly.total_degree() if degree is None else degree
        dim = len(symbols)
        pos = {a: k for k, a in enumerate(multi_indices(dim, d))}
        c = np.zeros(len(pos))
        for mono, coef in poly.terms():
            c[pos[tuple(mono)]] = float(coef)
        return cls(dim, d, c)

    def affine_pullback(self, center, scale):
        """Polynomial in raw x equal to this one evaluated at (x - center) / scale."""
        xs = self.symbols()
        sub = {x: (x - float(c)) / float(scale) for x, c in zip(xs, center)}
        expr = self.to_sympy().xreplace(sub)
        return Polynomial.from_sympy(expr, xs, self.degree)
