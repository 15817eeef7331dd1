"""Fixed-point solver for the frictional quasivariational inequality.

The discrete problem reads: find u in V_h with

    a(u, v - u) + j(u, v) - j(u, u) >= F.(v - u)   for all v in V_h,

where a is the mu-weighted gradient form, F the load functional and
j(eta, v) the lumped friction functional whose bound depends on the slip
magnitude |eta| on gamma3.  A solve freezes the bound (Tresca problem),
minimizes the resulting convex energy exactly, and iterates the bound
update until the fixed point is reached.  The update is a contraction with
factor k = L_g c0^2 c3^2 / mu_star; k >= 1 must be overridden explicitly.

The Tresca energy is smooth except for separable absolute values on the
gamma3 nodes.  The smooth block is eliminated exactly through a sparse
factorization, and cyclic coordinate minimization with exact
soft-thresholding runs on the small remaining gamma3 block; eliminating a
smooth node exactly is the closed-form limit of sweeping it, so the
energy still decreases sweep by sweep.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.sparse.linalg as spla

from . import constants, fem


class SolverError(RuntimeError):
    """Raised when a solve misses its tolerance or the data is unusable."""


@dataclass(frozen=True)
class ProblemData:
    """Data of one friction problem instance.

    ``mu`` and ``f0`` follow the coefficient conventions of the assembly
    routines (scalar, callable or per-element array); ``f2`` likewise on
    gamma2 facets.  ``mu_star`` is the certified lower bound of mu; when
    omitted it is resolved to the smallest sampled value.
    """

    mesh: fem.Mesh
    mu: object
    f0: object
    f2: object
    g: fem.FrictionBound
    mu_star: float | None = None

    def resolved_mu_star(self) -> float:
        if self.mu_star is not None:
            return float(self.mu_star)
        return float(fem.element_values(self.mesh, self.mu).min())

    def with_data(self, **changes) -> "ProblemData":
        return replace(self, **changes)


@dataclass(frozen=True)
class TykhonovIndex:
    """Perturbation index: regularization weight plus perturbed data."""

    eps: float
    f0: object
    f2: object
    g: fem.FrictionBound

    def __post_init__(self):
        if self.eps < 0.0:
            raise ValueError("eps must be nonnegative")


@dataclass(frozen=True)
class SolverConfig:
    outer_tol: float = 1e-10
    inner_tol: float = 1e-12
    max_outer: int = 200
    max_inner: int = 50000
    allow_non_contractive: bool = False


@dataclass
class SolveReport:
    converged: bool
    outer_iterations: int
    increments: list[float]
    ratios: list[float]
    inner_sweeps: list[int]
    inner_energies: list[list[float]]
    c0: float
    c3: float
    k: float
    contraction_ok: bool
    final_membership: float | None = None


class TrescaSolver:
    """Exact minimizer of 0.5 v'Kv - F'v + sum_i c_i |v_i| over V_h.

    The nonsmooth coefficients c_i live on the gamma3 nodes.  Smooth free
    nodes are eliminated once through a sparse LU of their stiffness
    block; the reduced dense problem on the gamma3 nodes is solved by
    cyclic coordinate descent with exact soft-threshold updates.
    """

    def __init__(self, K, free_nodes, gamma3_nodes):
        self.free = np.asarray(free_nodes, dtype=np.int64)
        self.friction = np.intersect1d(
            np.asarray(gamma3_nodes, dtype=np.int64), self.free
        )
        self.smooth = np.setdiff1d(self.free, self.friction)
        self.n_nodes = K.shape[0]

        diag = K.diagonal()
        if np.any(diag[self.free] <= 0.0):
            raise SolverError("stiffness matrix has a nonpositive diagonal entry")

        Kcsc = K.tocsc()
        S, T = self.smooth, self.friction
        self.K_st = Kcsc[S][:, T].toarray() if len(T) else np.zeros((len(S), 0))
        K_tt = Kcsc[T][:, T].toarray() if len(T) else np.zeros((0, 0))

        if len(S):
            try:
                self._lu = spla.splu(Kcsc[S][:, S].tocsc())
            except RuntimeError as exc:
                raise SolverError(f"stiffness block factorization failed: {exc}") from exc
            self.X = self._lu.solve(self.K_st) if len(T) else np.zeros((len(S), 0))
        else:
            self._lu = None
            self.X = np.zeros((0, len(T)))

        # load-independent Schur complement of the smooth block
        self.A = K_tt - (self.K_st.T @ self.X if len(S) else 0.0)
        if len(T) and np.any(np.diag(self.A) <= 0.0):
            raise SolverError("reduced friction block is not positive definite")

    def _reduce_load(self, F):
        S, T = self.smooth, self.friction
        if len(S):
            W = self._lu.solve(F[S])
            Ft = F[T] - self.K_st.T @ W
            offset = -0.5 * float(F[S] @ W)
        else:
            W = np.zeros(0)
            Ft = F[T].copy()
            offset = 0.0
        return W, Ft, offset

    def solve(self, F, c, t0=None, *, inner_tol=1e-12, max_inner=50000):
        """Minimize for load ``F`` and nonsmooth coefficients ``c`` (= w_i G_i).

        Returns (u, sweeps, energies); ``energies`` starts at the initial
        iterate and is nonincreasing.
        """
        T = self.friction
        c = np.asarray(c, dtype=float)
        if c.shape != (len(T),):
            raise ValueError(f"expected {len(T)} bound values, got {c.shape}")
        if np.any(c < 0.0):
            raise SolverError("negative friction bound coefficient")

        W, Ft, offset = self._reduce_load(F)
        if len(T) == 0:
            return self._lift(np.zeros(0), W), 0, []

        A = self.A
        diag = np.diag(A)

        def energy(t):
            return (
                0.5 * float(t @ (A @ t)) - float(Ft @ t) + float(c @ np.abs(t)) + offset
            )

        t = np.zeros(len(T)) if t0 is None else np.array(t0, dtype=float)
        if not np.any(c > 0.0):
            # smooth quadratic: the reduced system solves it outright
            t_opt = np.linalg.solve(self.A, Ft)
            return self._lift(t_opt, W), 1, [energy(t), energy(t_opt)]
        energies = [energy(t)]
        sweeps = 0
        while sweeps < max_inner:
            sweeps += 1
            max_update = 0.0
            for i in range(len(T)):
                r = Ft[i] - (A[i] @ t) + diag[i] * t[i]
                new = np.sign(r) * max(abs(r) - c[i], 0.0) / diag[i]
                max_update = max(max_update, abs(new - t[i]))
                t[i] = new
            e = energy(t)
            if e > energies[-1] + 1e-9 * (1.0 + abs(e)):
                raise SolverError("inner energy increased across a sweep")
            energies.append(e)
            if max_update < inner_tol:
                return self._lift(t, W), sweeps, energies
        raise SolverError(
            f"inner solver missed update tolerance {inner_tol} within "
            f"{max_inner} sweeps (last update {max_update:.3e})"
        )

    def _lift(self, t, W):
        u = np.zeros(self.n_nodes)
        if len(self.smooth):
            u[self.smooth] = W - (self.X @ t if len(t) else 0.0)
        u[self.friction] = t
        return u


def solve_tresca(
    K,
    F,
    bound: np.ndarray,
    free_nodes: np.ndarray,
    gamma3_nodes: np.ndarray,
    *,
    inner_tol: float = 1e-12,
    max_inner: int = 50000,
):
    """One frozen-bound solve; ``bound`` holds the products w_i * G_i.

    Returns (u, sweeps, energies).
    """
    solver = TrescaSolver(K, free_nodes, gamma3_nodes)
    return solver.solve(F, np.asarray(bound, dtype=float), inner_tol=inner_tol, max_inner=max_inner)


def discretize(problem: ProblemData):
    """Assemble (K, F) and the gamma3 quadrature data of a problem."""
    mesh = problem.mesh
    K = fem.assemble_stiffness(mesh, problem.mu, problem.mu_star)
    F = fem.assemble_load(mesh, problem.f0, problem.f2)
    idx = mesh.node_sets[fem.GAMMA3]
    w = mesh.gamma3_weights[idx]
    return K, F, idx, w


def fixed_point(
    mesh: fem.Mesh,
    g: fem.FrictionBound,
    solver: TrescaSolver,
    F: np.ndarray,
    mu_star: float,
    config: SolverConfig | None = None,
    eta0: np.ndarray | None = None,
):
    """Run the bound-update iteration on a prebuilt inner solver.

    Returns (u, SolveReport).  Raises SolverError when the smallness
    condition fails without the override flag, or when an iteration cap
    is exceeded.
    """
    cfg = config or SolverConfig()
    c0, c3 = constants.space_constants(mesh)
    k, ok = constants.smallness_margin(g.lipschitz, c0, c3, mu_star)
    if not ok:
        if not cfg.allow_non_contractive:
            raise SolverError(
                f"contraction factor k = {k:.6f} >= 1; the fixed point is not "
                "certified, pass allow_non_contractive to attempt it anyway"
            )
        warnings.warn(f"attempting fixed point with non-contractive k = {k:.6f}")

    free_friction = solver.friction
    # weights aligned with the solver's friction nodes
    w_free = mesh.gamma3_weights[free_friction]

    eta = np.zeros(mesh.n_nodes) if eta0 is None else np.array(eta0, dtype=float)
    increments: list[float] = []
    ratios: list[float] = []
    sweeps_log: list[int] = []
    energy_log: list[list[float]] = []
    converged = False
    iterations = 0
    for m in range(1, cfg.max_outer + 1):
        iterations = m
        G = g(mesh.nodes[free_friction], np.abs(eta[free_friction]))
        if np.any(G < -1e-14):
            raise SolverError("friction bound took a negative value on gamma3")
        c = w_free * np.maximum(G, 0.0)
        u_new, sweeps, energies = solver.solve(
            F, c, t0=eta[free_friction], inner_tol=cfg.inner_tol, max_inner=cfg.max_inner
        )
        inc = fem.v_norm(mesh, u_new - eta)
        if increments and increments[-1] > 0.0:
            ratios.append(inc / increments[-1])
        increments.append(inc)
        sweeps_log.append(sweeps)
        energy_log.append(energies)
        eta = u_new
        if inc < cfg.outer_tol:
            converged = True
            break
    if not converged:
        raise SolverError(
            f"outer fixed point missed tolerance {cfg.outer_tol} within "
            f"{cfg.max_outer} iterations (last increment {increments[-1]:.3e})"
        )

    report = SolveReport(
        converged=True,
        outer_iterations=iterations,
        increments=increments,
        ratios=ratios,
        inner_sweeps=sweeps_log,
        inner_energies=energy_log,
        c0=c0,
        c3=c3,
        k=k,
        contraction_ok=ok,
    )
    return eta, report


def solve_qvi(problem: ProblemData, config: SolverConfig | None = None):
    """Fixed-point solve of the quasivariational problem.

    Returns (u, SolveReport); see ``fixed_point`` for failure modes.
    """
    mesh = problem.mesh
    K, F, g3_idx, _ = discretize(problem)
    solver = TrescaSolver(K, mesh.free_nodes, g3_idx)
    return fixed_point(mesh, problem.g, solver, F, problem.resolved_mu_star(), config)


# ---------------------------------------------------------------------------
# membership certificate

def membership_violation(
    mesh: fem.Mesh,
    mu,
    u: np.ndarray,
    theta: TykhonovIndex,
    *,
    directions: Sequence[np.ndarray] | None = None,
    n_random: int = 100,
    seed: int = 0,
    basis_scale: float = 1.0,
) -> float:
    """Largest positive residual of the relaxed inequality over a test set.

    The candidate ``u`` belongs to the approximating set of ``theta`` when

        a(u, v - u) + j(u, v) - j(u, u) + eps ||u|| ||v - u|| >= F.(v - u)

    holds for every direction v.  The default test set takes both signs of
    every scaled nodal basis field around u, one hundred seeded random
    fields, v = 0 and v = 2u.  A return value <= 1e-8 certifies
    membership against that set.
    """
    K = fem.assemble_stiffness(mesh, mu)
    F = fem.assemble_load(mesh, theta.f0, theta.f2)
    res = F - K @ u
    ju_u = fem.eval_j(mesh, theta.g, u, u)
    norm_u = fem.v_norm(mesh, u)
    eps = theta.eps

    gram_diag = fem.gram_matrix(mesh).diagonal()
    g3 = mesh.node_sets[fem.GAMMA3]
    g3_pos = {int(i): p for p, i in enumerate(g3)}
    w_g3 = mesh.gamma3_weights[g3]
    G_u = theta.g(mesh.nodes[g3], np.abs(u[g3])) if len(g3) else np.zeros(0)

    worst = 0.0

    def residual_full(v):
        d = v - u
        jv = fem.eval_j(mesh, theta.g, u, v)
        return float(res @ d) - jv + ju_u - eps * norm_u * fem.v_norm(mesh, d)

    if directions is not None:
        for v in directions:
            worst = max(worst, residual_full(np.asarray(v, dtype=float)))
        return max(0.0, worst)

    s = basis_scale
    for i in mesh.free_nodes:
        base = s * np.sqrt(max(gram_diag[i], 0.0)) * eps * norm_u
        for sign in (1.0, -1.0):
            val = sign * s * res[i] - base
            p = g3_pos.get(int(i))
            if p is not None:
                val -= w_g3[p] * G_u[p] * (abs(u[i] + sign * s) - abs(u[i]))
            worst = max(worst, val)

    # the ray through the origin: v = 0 and v = 2u
    worst = max(worst, float(-res @ u) + ju_u - eps * norm_u**2)
    worst = max(worst, float(res @ u) - ju_u - eps * norm_u**2)

    rng = np.random.default_rng(seed)
    scale = 1.0 + norm_u
    for _ in range(n_random):
        v = fem.zero_on_gamma1(mesh, rng.standard_normal(mesh.n_nodes))
        nv = fem.v_norm(mesh, v)
        if nv > 0.0:
            v *= scale / nv
        worst = max(worst, residual_full(v))
    return max(0.0, worst)


# ---------------------------------------------------------------------------
# solution diagnostics

def friction_multipliers(mesh: fem.Mesh, K, F, u: np.ndarray):
    """Discrete friction tractions lambda_i = (Ku - F)_i / w_i on gamma3."""
    idx = mesh.node_sets[fem.GAMMA3]
    w = mesh.gamma3_weights[idx]
    lam = ((K @ u) - F)[idx] / w
    return idx, lam


def complementarity_report(problem: ProblemData, u: np.ndarray):
    """Per-node friction-law residuals of a converged solution.

    Returns (idx, lam, G, stick_slack, comp) with stick_slack = |lam| - G
    (nonpositive up to solver tolerance) and comp = lam*u + G*|u| (zero up
    to solver tolerance).
    """
    K, F, idx, w = discretize(problem)
    lam = ((K @ u) - F)[idx] / w
    G = problem.g(problem.mesh.nodes[idx], np.abs(u[idx]))
    stick_slack = np.abs(lam) - G
    comp = lam * u[idx] + G * np.abs(u[idx])
    return idx, lam, G, stick_slack, comp
