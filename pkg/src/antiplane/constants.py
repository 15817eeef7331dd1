"""Discrete functional-analytic constants of the working space.

Two constants control the fixed-point analysis of the friction problem:
the Friedrichs-Poincare constant c0 (full H1 norm against the gradient
seminorm) and the gamma3 trace constant c3 (lumped boundary norm against
the full H1 norm).  Both are computed exactly for the discrete space by
power iteration on small generalized eigenvalue problems, so the
contraction prediction k = L_g * c0^2 * c3^2 / mu_star is sharp for the
implemented solver.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem


class ConvergenceError(RuntimeError):
    """Raised when an iterative routine misses its tolerance within the cap."""


def _power_iteration(apply_iter, rayleigh, v0, tol, maxiter):
    """Generic power iteration with a Rayleigh-quotient stopping rule.

    ``apply_iter`` maps v to the next iterate, ``rayleigh`` returns the
    eigenvalue estimate of an iterate.  Stops when the relative change of
    the estimate falls below ``tol``.
    """
    v = v0 / np.linalg.norm(v0)
    lam = rayleigh(v)
    for _ in range(maxiter):
        v = apply_iter(v)
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            raise ConvergenceError("power iteration collapsed to the zero vector")
        v /= nrm
        lam_new = rayleigh(v)
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            return lam_new, v
        lam = lam_new
    raise ConvergenceError(
        f"power iteration missed tolerance {tol} within {maxiter} iterations "
        f"(last relative change {abs(lam_new - lam) / max(abs(lam_new), 1e-300):.3e})"
    )


def poincare_constant(
    mesh: fem.Mesh,
    *,
    tol: float = 1e-10,
    maxiter: int = 10000,
    seed: int = 0,
    return_field: bool = False,
):
    """Best constant c0 with ||v||_V <= c0 ||grad v|| on the discrete space.

    Square root of the largest eigenvalue of (M + S) v = lambda S v over
    fields vanishing on gamma1, computed by power iteration with inner
    solves against S.
    """
    free = mesh.free_nodes
    S = fem.unit_stiffness(mesh)[free][:, free].tocsc()
    A = fem.gram_matrix(mesh)[free][:, free].tocsr()
    solve = spla.factorized(S)

    def apply_iter(v):
        return solve(A @ v)

    def rayleigh(v):
        return float((v @ (A @ v)) / (v @ (S @ v)))

    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(len(free))
    lam, vec = _power_iteration(apply_iter, rayleigh, v0, tol, maxiter)
    c0 = float(np.sqrt(lam))
    if return_field:
        field = np.zeros(mesh.n_nodes)
        field[free] = vec
        return c0, field
    return c0


def trace_constant(
    mesh: fem.Mesh,
    *,
    tol: float = 1e-10,
    maxiter: int = 10000,
    seed: int = 0,
    return_field: bool = False,
):
    """Best constant c3 with ||v||_{gamma3} <= c3 ||v||_V on the discrete space.

    The boundary norm is the lumped gamma3 quadrature used by the friction
    functional.  Square root of the largest eigenvalue of B v = lambda
    (M + S) v with B the diagonal lumped boundary mass; returns 0 when
    gamma3 carries no free node.
    """
    free = mesh.free_nodes
    idx = mesh.node_sets[fem.GAMMA3]
    if len(idx) == 0:
        if return_field:
            return 0.0, np.zeros(mesh.n_nodes)
        return 0.0
    w = np.zeros(mesh.n_nodes)
    w[idx] = mesh.gamma3_weights[idx]
    B = sp.diags(w[free]).tocsr()
    A = fem.gram_matrix(mesh)[free][:, free].tocsc()
    solve = spla.factorized(A)

    def apply_iter(v):
        return solve(B @ v)

    def rayleigh(v):
        return float((v @ (B @ v)) / (v @ (A @ v)))

    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(len(free))
    if float(v0 @ (B @ v0)) == 0.0:
        v0 += 1.0  # make sure the start sees the boundary
    lam, vec = _power_iteration(apply_iter, rayleigh, v0, tol, maxiter)
    c3 = float(np.sqrt(max(lam, 0.0)))
    if return_field:
        field = np.zeros(mesh.n_nodes)
        field[free] = vec
        return c3, field
    return c3


def smallness_margin(lipschitz: float, c0: float, c3: float, mu_star: float):
    """Contraction factor k = L_g c0^2 c3^2 / mu_star and whether k < 1."""
    if mu_star <= 0.0:
        raise ValueError("mu_star must be positive")
    if lipschitz < 0.0:
        raise ValueError("Lipschitz rate must be nonnegative")
    k = lipschitz * c0**2 * c3**2 / mu_star
    return float(k), bool(k < 1.0)


@dataclass(frozen=True)
class ConstantsReport:
    c0: float
    c3: float
    k: float
    ok: bool


_CONSTANTS_CACHE: "weakref.WeakKeyDictionary[fem.Mesh, dict]" = weakref.WeakKeyDictionary()


def space_constants(
    mesh: fem.Mesh, *, tol: float = 1e-10, maxiter: int = 10000, seed: int = 0
) -> tuple[float, float]:
    """(c0, c3) for one mesh, cached because they depend on the mesh only."""
    per_mesh = _CONSTANTS_CACHE.get(mesh)
    if per_mesh is None:
        per_mesh = {}
        _CONSTANTS_CACHE[mesh] = per_mesh
    key = (tol, maxiter, seed)
    if key not in per_mesh:
        per_mesh[key] = (
            poincare_constant(mesh, tol=tol, maxiter=maxiter, seed=seed),
            trace_constant(mesh, tol=tol, maxiter=maxiter, seed=seed),
        )
    return per_mesh[key]


def constants_report(
    mesh: fem.Mesh,
    lipschitz: float,
    mu_star: float,
    *,
    tol: float = 1e-10,
    maxiter: int = 10000,
    seed: int = 0,
) -> ConstantsReport:
    """Compute both constants and the contraction margin for one mesh."""
    c0 = poincare_constant(mesh, tol=tol, maxiter=maxiter, seed=seed)
    c3 = trace_constant(mesh, tol=tol, maxiter=maxiter, seed=seed)
    k, ok = smallness_margin(lipschitz, c0, c3, mu_star)
    return ConstantsReport(c0=c0, c3=c3, k=k, ok=ok)
