"""Manufactured test problems for  alpha q + grad u = 0,  div q = f,  u = g on the boundary.

All callables take coordinate arrays ``x, y`` of a common shape and return
arrays of that shape (scalars) or with a trailing axis of length 2 (vectors)
or trailing (2, 2) (the coefficient matrix).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

PI = np.pi


@dataclass(frozen=True)
class ProblemSpec:
    alpha: Callable
    f: Callable
    g: Callable
    exact_u: Optional[Callable] = None
    exact_q: Optional[Callable] = None
    exact_grad_u: Optional[Callable] = None
    name: str = "custom"

    def alpha_matrix(self, x, y):
        """alpha at the given points as (..., 2, 2); scalar alpha becomes a multiple of I."""
        x = np.asarray(x, dtype=float)
        a = np.asarray(self.alpha(x, y), dtype=float)
        if a.shape == x.shape or a.ndim == 0:
            a = np.broadcast_to(a, x.shape)
            out = np.zeros(x.shape + (2, 2))
            out[..., 0, 0] = a
            out[..., 1, 1] = a
            return out
        if a.shape != x.shape + (2, 2):
            raise ValueError(f"alpha returned shape {a.shape}, expected {x.shape} or {x.shape + (2, 2)}")
        return a


def check_alpha_spd(spec, x, y):
    """Raise if alpha fails to be symmetric positive definite at any point."""
    a = spec.alpha_matrix(x, y)
    sym = np.abs(a[..., 0, 1] - a[..., 1, 0]) <= 1e-12 * np.abs(a).max(axis=(-1, -2))
    tr = a[..., 0, 0] + a[..., 1, 1]
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    bad = ~(sym & (tr > 0) & (det > 0))
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        px, py = np.asarray(x)[tuple(idx)], np.asarray(y)[tuple(idx)]
        raise ValueError(f"alpha is not symmetric positive definite at ({px:.6g}, {py:.6g})")


# -- Example 1: alpha = 1/((1+x)(1+y)), u = sin(pi x) sin(pi y) ----------------

def _ex1_u(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def _ex1_grad_u(x, y):
    return np.stack([PI * np.cos(PI * x) * np.sin(PI * y),
                     PI * np.sin(PI * x) * np.cos(PI * y)], axis=-1)


def _ex1_q(x, y):
    k = (1.0 + np.asarray(x)) * (1.0 + np.asarray(y))
    return -k[..., None] * _ex1_grad_u(x, y)


def _ex1_f(x, y):
    # f = -div((1+x)(1+y) grad u)
    sx, cx = np.sin(PI * x), np.cos(PI * x)
    sy, cy = np.sin(PI * y), np.cos(PI * y)
    return (2.0 * PI ** 2 * (1.0 + x) * (1.0 + y) * sx * sy
            - PI * (1.0 + y) * cx * sy
            - PI * (1.0 + x) * sx * cy)


def example1():
    return ProblemSpec(
        alpha=lambda x, y: 1.0 / ((1.0 + np.asarray(x)) * (1.0 + np.asarray(y))),
        f=_ex1_f,
        g=_ex1_u,
        exact_u=_ex1_u,
        exact_q=_ex1_q,
        exact_grad_u=_ex1_grad_u,
        name="ex1",
    )


# -- Example 2: alpha = 1, u = sin(pi x) cos(pi y) -----------------------------

def _ex2_u(x, y):
    return np.sin(PI * x) * np.cos(PI * y)


def _ex2_grad_u(x, y):
    return np.stack([PI * np.cos(PI * x) * np.cos(PI * y),
                     -PI * np.sin(PI * x) * np.sin(PI * y)], axis=-1)


def example2():
    return ProblemSpec(
        alpha=lambda x, y: np.ones_like(np.asarray(x, dtype=float)),
        f=lambda x, y: 2.0 * PI ** 2 * _ex2_u(x, y),
        g=_ex2_u,
        exact_u=_ex2_u,
        exact_q=lambda x, y: -_ex2_grad_u(x, y),
        exact_grad_u=_ex2_grad_u,
        name="ex2",
    )


def polynomial_problem(u, grad_u, laplacian=0.0, name="poly"):
    """Problem with alpha = I and the given smooth ``u`` (f = -laplacian)."""
    lap = laplacian if callable(laplacian) else (lambda x, y: np.full(np.shape(x), float(laplacian)))
    return ProblemSpec(
        alpha=lambda x, y: np.ones_like(np.asarray(x, dtype=float)),
        f=lambda x, y: -lap(x, y),
        g=u,
        exact_u=u,
        exact_q=lambda x, y: -grad_u(x, y),
        exact_grad_u=grad_u,
        name=name,
    )


def zero_problem():
    """f = 0, g = 0; the discrete solution vanishes identically."""
    return polynomial_problem(lambda x, y: np.zeros(np.shape(x)),
                              lambda x, y: np.zeros(np.shape(x) + (2,)), name="zero")


PROBLEMS = {"ex1": example1, "ex2": example2, "zero": zero_problem}


def get_problem(name):
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown problem id {name!r}; choose from {sorted(PROBLEMS)}") from None


@dataclass
class ValidationReport:
    samples: int
    constitutive_residual: float  # max |alpha q + grad u|
    divergence_residual: float  # max |div q - f|
    boundary_residual: float  # max |g - u| on the boundary

    @property
    def max_residual(self):
        return max(self.constitutive_residual, self.divergence_residual, self.boundary_residual)


def validate(spec, samples=100, step=1e-5, seed=0):
    """Check the manufactured data at quasi-random interior points.

    The divergence of ``exact_q`` is taken by central differences; gradients of
    ``exact_u`` likewise when ``exact_grad_u`` is absent.  Nothing is raised; the
    report carries the maxima.
    """
    if spec.exact_u is None or spec.exact_q is None:
        raise ValueError("validate needs exact_u and exact_q")
    pts = qmc.Halton(d=2, scramble=True, seed=seed).random(samples)
    pts = 0.02 + 0.96 * pts
    x, y = pts[:, 0], pts[:, 1]
    q = np.asarray(spec.exact_q(x, y))
    if spec.exact_grad_u is not None:
        grad = np.asarray(spec.exact_grad_u(x, y))
    else:
        u = spec.exact_u
        grad = np.stack([(u(x + step, y) - u(x - step, y)) / (2 * step),
                         (u(x, y + step) - u(x, y - step)) / (2 * step)], axis=-1)
    aq = np.einsum("nij,nj->ni", spec.alpha_matrix(x, y), q)
    cons = float(np.abs(aq + grad).max())
    qx = spec.exact_q
    div = ((qx(x + step, y)[..., 0] - qx(x - step, y)[..., 0])
           + (qx(x, y + step)[..., 1] - qx(x, y - step)[..., 1])) / (2 * step)
    divres = float(np.abs(div - spec.f(x, y)).max())
    t = pts[:, 0]
    bx = np.concatenate([t, t, np.zeros_like(t), np.ones_like(t)])
    by = np.concatenate([np.zeros_like(t), np.ones_like(t), t, t])
    bres = float(np.abs(np.asarray(spec.g(bx, by)) - np.asarray(spec.exact_u(bx, by))).max())
    return ValidationReport(samples, cons, divres, bres)
