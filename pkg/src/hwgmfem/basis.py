"""Scaled monomial bases and quadrature rules on polygons and edges."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


def dim_poly(m):
    """Dimension of P_m in two variables."""
    return (m + 1) * (m + 2) // 2 if m >= 0 else 0


@lru_cache(maxsize=None)
def monomial_exponents(m):
    """Exponents (a, b) of the P_m monomials, ordered by total degree then by b."""
    return tuple((d - b, b) for d in range(m + 1) for b in range(d + 1))


def eval_monomials(z, m):
    """Values of z1^a z2^b for scaled coordinates ``z`` (..., 2) -> (..., dim P_m)."""
    z = np.asarray(z, dtype=float)
    x, y = z[..., 0], z[..., 1]
    xp = [np.ones_like(x)]
    yp = [np.ones_like(y)]
    for _ in range(m):
        xp.append(xp[-1] * x)
        yp.append(yp[-1] * y)
    return np.stack([xp[a] * yp[b] for a, b in monomial_exponents(m)], axis=-1)


def eval_monomial_grads(z, m, h):
    """Physical gradients of the scaled monomials, shape (..., dim P_m, 2).

    ``h`` is the scaling length; it broadcasts against ``z[..., 0]``.
    """
    z = np.asarray(z, dtype=float)
    x, y = z[..., 0], z[..., 1]
    xp = [np.ones_like(x)]
    yp = [np.ones_like(y)]
    for _ in range(m):
        xp.append(xp[-1] * x)
        yp.append(yp[-1] * y)
    zero = np.zeros_like(x)
    inv_h = 1.0 / np.asarray(h, dtype=float)
    gx, gy = [], []
    for a, b in monomial_exponents(m):
        gx.append(a * xp[a - 1] * yp[b] * inv_h if a else zero)
        gy.append(b * xp[a] * yp[b - 1] * inv_h if b else zero)
    return np.stack([np.stack(gx, axis=-1), np.stack(gy, axis=-1)], axis=-1)


@dataclass(frozen=True)
class CellBasis:
    """Scaled monomials ((x - x_T)/h_T)^a ((y - y_T)/h_T)^b on one cell."""

    k: int
    centroid: np.ndarray
    h: float

    def scaled(self, x):
        return (np.asarray(x, dtype=float) - self.centroid) / self.h

    def values(self, x, m=None):
        return eval_monomials(self.scaled(x), self.k + 1 if m is None else m)

    def grads(self, x, m=None):
        return eval_monomial_grads(self.scaled(x), self.k + 1 if m is None else m, self.h)

    @property
    def dim_flux(self):
        """Dimension of [P_k]^2."""
        return 2 * dim_poly(self.k)

    @property
    def dim_scalar(self):
        """Dimension of P_{k+1}."""
        return dim_poly(self.k + 1)


def edge_basis_values(t, k):
    """Edge monomials (t - 1/2)^j, j = 0..k, for the canonical parameter t in [0, 1].

    With arc length s from the first endpoint, t - 1/2 = (s - |e|/2) / |e|.
    """
    s = np.asarray(t, dtype=float) - 0.5
    return np.stack([s ** j for j in range(k + 1)], axis=-1)


@lru_cache(maxsize=None)
def edge_reference_mass(k):
    """Integrals of (t-1/2)^(i+j) over [0, 1]; scale by |e| for a physical edge."""
    g = np.empty((k + 1, k + 1))
    for i in range(k + 1):
        for j in range(k + 1):
            p = i + j
            g[i, j] = 0.0 if p % 2 else 2.0 * 0.5 ** (p + 1) / (p + 1)
    g.setflags(write=False)
    return g


# -- quadrature ---------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def gauss_legendre_01(degree):
    """Gauss-Legendre nodes and weights on [0, 1], exact to ``degree``."""
    n = max(1, math.ceil((degree + 1) / 2))
    x, w = np.polynomial.legendre.leggauss(n)
    t, wt = 0.5 * (x + 1.0), 0.5 * w
    t.setflags(write=False)
    wt.setflags(write=False)
    return t, wt


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    Returns barycentric-style coordinates (xi, eta) of shape (nq, 2) and weights
    summing to 1 (so they scale directly by the physical triangle area).
    Exact for polynomials of total degree ``degree``.
    """
    n = max(1, math.ceil((degree + 1) / 2))
    # Duffy map x = u (1 - v), y = v; Jacobian (1 - v) absorbed by Gauss-Jacobi(1, 0)
    gu, wu = np.polynomial.legendre.leggauss(n)
    gv, wv = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (gu + 1.0)
    v = 0.5 * (gv + 1.0)
    wu = 0.5 * wu
    wv = 0.25 * wv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu, wv)
    pts = np.column_stack([(uu * (1.0 - vv)).ravel(), vv.ravel()])
    wts = 2.0 * ww.ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def fan_quadrature(polys, centroids, degree):
    """Fan quadrature on a batch of star-shaped polygons.

    Parameters
    ----------
    polys : (n, m, 2) counterclockwise vertex coordinates
    centroids : (n, 2) fan apex for each polygon
    degree : exactness degree

    Returns
    -------
    points : (n, m * nq, 2)
    weights : (n, m * nq)
    """
    polys = np.asarray(polys, dtype=float)
    ref, wref = triangle_rule(degree)
    p0 = polys - centroids[:, None, :]
    p1 = np.roll(p0, -1, axis=1)
    sub_area = 0.5 * (p0[..., 0] * p1[..., 1] - p1[..., 0] * p0[..., 1])  # (n, m)
    pts = (centroids[:, None, None, :]
           + ref[None, None, :, 0:1] * p0[:, :, None, :]
           + ref[None, None, :, 1:2] * p1[:, :, None, :])
    wts = sub_area[:, :, None] * wref[None, None, :]
    n, m = polys.shape[:2]
    return pts.reshape(n, m * len(wref), 2), wts.reshape(n, m * len(wref))


def cell_quadrature(vertices, degree, centroid=None):
    """Quadrature rule on one star-shaped polygon, fanned from its centroid."""
    verts = np.asarray(vertices, dtype=float)
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if centroid is None:
        p, q = verts, np.roll(verts, -1, axis=0)
        cross = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
        centroid = ((p + q) * cross[:, None]).sum(axis=0) / (3.0 * cross.sum())
    centroid = np.asarray(centroid, dtype=float)
    diff = verts[:, None, :] - verts[None, :, :]
    h = math.sqrt(float((diff ** 2).sum(-1).max()))
    p0 = verts - centroid
    p1 = np.roll(p0, -1, axis=0)
    sub = 0.5 * (p0[:, 0] * p1[:, 1] - p1[:, 0] * p0[:, 1])
    if np.any(sub < 1e-14 * h * h):
        raise ValueError("degenerate fan sub-triangle (cell not star-shaped w.r.t. its centroid)")
    pts, wts = fan_quadrature(verts[None], centroid[None], degree)
    return QuadratureRule(pts[0], wts[0], degree)


def edge_quadrature(a, b, degree):
    """Gauss-Legendre rule on the segment from ``a`` to ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t, w = gauss_legendre_01(degree)
    length = float(np.hypot(*(b - a)))
    return QuadratureRule(a + t[:, None] * (b - a), w * length, degree)
