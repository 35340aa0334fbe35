"""scikit-learn style wrapper around the hybridized solver.

``fit`` takes a mesh and a problem instead of a design matrix; ``predict``
evaluates the discrete scalar field at arbitrary points of the domain.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .basis import CellBasis
from .errors import compute_errors
from .hybrid_solver import solve_hwg
from .mesh import PolygonalMesh
from .problems import ProblemSpec, get_problem


def _inside(poly, pts):
    """Crossing-number point-in-polygon test; boundary points count as inside."""
    x, y = pts[:, 0], pts[:, 1]
    a = poly
    b = np.roll(poly, -1, axis=0)
    inside = np.zeros(len(pts), dtype=bool)
    on_edge = np.zeros(len(pts), dtype=bool)
    for (x0, y0), (x1, y1) in zip(a, b):
        cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)
        scale = np.hypot(x1 - x0, y1 - y0)
        within = ((np.minimum(x0, x1) - 1e-12 <= x) & (x <= np.maximum(x0, x1) + 1e-12)
                  & (np.minimum(y0, y1) - 1e-12 <= y) & (y <= np.maximum(y0, y1) + 1e-12))
        on_edge |= within & (np.abs(cross) <= 1e-12 * scale)
        straddle = (y0 > y) != (y1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= straddle & (x < xc)
    return inside | on_edge


class HybridWGSolver(BaseEstimator):
    """Hybridized weak Galerkin mixed solver.

    Parameters
    ----------
    k : int
        Flux polynomial degree; the scalar field uses degree k+1.
    threads : int
        Worker threads for the element loops.
    check : bool
        Run the post-solve consistency checks.

    Attributes
    ----------
    mesh_ : PolygonalMesh
    problem_ : ProblemSpec
    solution_ : WGSolution
    """

    def __init__(self, k=0, threads=1, check=True):
        self.k = k
        self.threads = threads
        self.check = check

    def _validate_params(self):
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be a nonnegative integer, got {self.k!r}")
        if int(self.threads) != self.threads or self.threads < 1:
            raise ValueError(f"threads must be a positive integer, got {self.threads!r}")

    def fit(self, mesh, problem="ex1"):
        """Solve ``problem`` (an id or a ProblemSpec) on ``mesh``."""
        self._validate_params()
        if not isinstance(mesh, PolygonalMesh):
            raise TypeError("mesh must be a PolygonalMesh")
        spec = get_problem(problem) if isinstance(problem, str) else problem
        if not isinstance(spec, ProblemSpec):
            raise TypeError("problem must be a problem id or a ProblemSpec")
        self.mesh_ = mesh
        self.problem_ = spec
        self.solution_ = solve_hwg(mesh, spec, int(self.k), threads=int(self.threads), check=self.check)
        self._tree = cKDTree(mesh.centroids)
        return self

    def locate(self, points):
        """Cell index containing each point, -1 outside the mesh."""
        check_is_fitted(self, "solution_")
        pts = check_array(points, dtype=float)
        if pts.shape[1] != 2:
            raise ValueError(f"points must have shape (n, 2), got {pts.shape}")
        mesh = self.mesh_
        owner = -np.ones(len(pts), dtype=np.int64)
        nn = min(mesh.n_cells, 12)
        _, cand = self._tree.query(pts, k=nn)
        cand = np.asarray(cand).reshape(len(pts), nn)
        for j in range(nn):
            todo = np.flatnonzero(owner < 0)
            if todo.size == 0:
                break
            for c in np.unique(cand[todo, j]):
                sel = todo[cand[todo, j] == c]
                hit = _inside(mesh.vertices[list(mesh.cells[c])], pts[sel])
                owner[sel[hit]] = c
        # fall back to a full scan for points missed by the neighbour search
        for i in np.flatnonzero(owner < 0):
            for c in range(mesh.n_cells):
                if _inside(mesh.vertices[list(mesh.cells[c])], pts[i:i + 1])[0]:
                    owner[i] = c
                    break
        return owner

    def _evaluate(self, points, field):
        pts = check_array(points, dtype=float)
        owner = self.locate(pts)
        if np.any(owner < 0):
            bad = pts[np.flatnonzero(owner < 0)[0]]
            raise ValueError(f"point ({bad[0]:.6g}, {bad[1]:.6g}) lies outside the mesh")
        mesh, sol, k = self.mesh_, self.solution_, self.solution_.k
        ncomp = 1 if field == "u" else 2
        out = np.zeros((len(pts), ncomp))
        for c in np.unique(owner):
            sel = owner == c
            basis = CellBasis(k, mesh.centroids[c], float(mesh.diameters[c]))
            if field == "u":
                out[sel, 0] = basis.values(pts[sel], k + 1) @ sol.u[c]
            else:
                phi = basis.values(pts[sel], k)
                nk = phi.shape[-1]
                out[sel, 0] = phi @ sol.q0[c, :nk]
                out[sel, 1] = phi @ sol.q0[c, nk:]
        return out[:, 0] if field == "u" else out

    def predict(self, points):
        """Discrete scalar field u_h at ``points`` (n, 2)."""
        return self._evaluate(points, "u")

    def predict_flux(self, points):
        """Interior flux component q_0 at ``points``, shape (n, 2)."""
        return self._evaluate(points, "q")

    def error_report(self):
        check_is_fitted(self, "solution_")
        return compute_errors(self.mesh_, self.problem_, self.solution_)

    def score(self, mesh=None, problem=None):
        """Negative L2 norm of Q_h u - u_h; larger is better.

        Requires the fitted problem to carry an exact solution.  ``mesh`` and
        ``problem`` are accepted for signature compatibility and ignored.
        """
        return -self.error_report().eps_l2
