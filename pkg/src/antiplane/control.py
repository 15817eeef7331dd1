"""Boundary traction control of the frictional equilibrium problem.

The control is a piecewise constant traction on the gamma2 patches; the
cost balances an L2 misfit against a target displacement with an L2
penalty on the control:

    cost(u, c) = a0 ||u - target||^2_{L2(D)} + a2 ||c||^2_{L2(gamma2)}.

``minimize_cost`` runs seeded multistart Nelder-Mead over the patch
coefficients, with each evaluation solving the frictional equilibrium
problem for that traction.  The state assembly is load-independent, so
one :class:`StateSolver` shares its factorization across all optimizer
evaluations.  Multistart optima are clustered by cost (radius 1e-4) to
approximate a possibly non-unique solution set; ties between equal-cost
minimizers resolve to the smaller control norm.

``run_oc_sequence`` perturbs the data along a vanishing schedule,
re-optimizes each instance and measures control, state and cost
deviations from the unperturbed optimum, mirroring the direct
perturbation harness for the equilibrium problem.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import fem, qvi
from .tykhonov import (
    NON_CONVERGENT,
    combine_coefficients,
    decay_scales,
    fit_tail_slope,
    judge_decay,
)

OC_SCHEDULE_KINDS = ("eps_decay", "load_perturb", "friction_perturb", "target_perturb")


class ControlError(RuntimeError):
    """Raised when no optimizer start converges; carries the best
    (cost, coefficients) seen so far in ``best``."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


def target_field(mesh: fem.Mesh, data) -> np.ndarray:
    """Nodal interpolation of a target displacement.

    The target must vanish on the clamped boundary so that it lies in
    the solution space.
    """
    if callable(data):
        out = np.asarray(data(mesh.nodes), dtype=float)
        out = np.broadcast_to(out, (mesh.n_nodes,)).astype(float)
    elif np.ndim(data) == 0:
        out = np.full(mesh.n_nodes, float(data))
    else:
        out = np.asarray(data, dtype=float)
        if out.shape != (mesh.n_nodes,):
            raise ValueError(f"expected {mesh.n_nodes} nodal values, got {out.shape}")
    clamped = out[mesh.node_sets[fem.GAMMA1]]
    if len(clamped) and np.max(np.abs(clamped)) > 1e-12:
        raise ValueError("target must vanish on the clamped boundary")
    return out


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Misfit weight ``a0``, control penalty ``a2`` and the target field.

    ``target`` may be a scalar, a callable on node coordinates or a
    nodal array; it is interpolated (and checked against the clamped
    boundary) when a mesh is available.  Coercivity of the reduced cost
    in the control needs ``a2 > 0``; ``a2 = 0`` is accepted for plain
    evaluation.
    """

    a0: float
    a2: float
    target: object = 0.0

    def __post_init__(self):
        if self.a0 <= 0.0:
            raise ValueError("misfit weight a0 must be positive")
        if self.a2 < 0.0:
            raise ValueError("control penalty a2 must be nonnegative")


class ControlPatches:
    """Contiguous piecewise-constant partition of the gamma2 facets.

    Coefficient vectors live in R^d with d = ``n_patches``; the induced
    traction is constant on each patch.  ``lower``/``upper`` give an
    optional box for the optimizer.
    """

    def __init__(self, mesh: fem.Mesh, n_patches: int, lower=None, upper=None):
        n_facets = len(mesh.facets[fem.GAMMA2])
        if n_facets == 0:
            raise ValueError("mesh has no gamma2 facets to control")
        if not 1 <= n_patches <= n_facets:
            raise ValueError(
                f"n_patches must be in [1, {n_facets}], got {n_patches}"
            )
        self.mesh = mesh
        self.n_patches = n_patches
        self.groups = np.array_split(np.arange(n_facets), n_patches)
        per_facet = fem.facet_measures(mesh, fem.GAMMA2)
        self.measures = np.array([per_facet[g].sum() for g in self.groups])
        self.lower = None if lower is None else np.broadcast_to(
            np.asarray(lower, dtype=float), (n_patches,)
        ).copy()
        self.upper = None if upper is None else np.broadcast_to(
            np.asarray(upper, dtype=float), (n_patches,)
        ).copy()
        if self.lower is not None and self.upper is not None:
            if np.any(self.lower >= self.upper):
                raise ValueError("patch box must satisfy lower < upper")

    def coefficients(self, coeffs) -> np.ndarray:
        out = np.asarray(coeffs, dtype=float)
        if out.shape != (self.n_patches,):
            raise ValueError(f"expected {self.n_patches} coefficients, got {out.shape}")
        return out

    def traction(self, coeffs) -> np.ndarray:
        """Per-facet traction values induced by the patch coefficients."""
        c = self.coefficients(coeffs)
        vals = np.empty(sum(len(g) for g in self.groups))
        for cp, g in zip(c, self.groups):
            vals[g] = cp
        return vals

    def norm_sq(self, coeffs) -> float:
        """Squared L2(gamma2) norm of the piecewise-constant control."""
        c = self.coefficients(coeffs)
        return float(self.measures @ c**2)

    def bounds(self):
        if self.lower is None and self.upper is None:
            return None
        lo = self.lower if self.lower is not None else np.full(self.n_patches, -np.inf)
        hi = self.upper if self.upper is not None else np.full(self.n_patches, np.inf)
        return list(zip(lo, hi))


@dataclass(frozen=True, eq=False)
class AdmissiblePair:
    """A state and the control that produced it."""

    u: np.ndarray
    coeffs: np.ndarray


def cost(
    mesh: fem.Mesh,
    patches: ControlPatches,
    weights: CostWeights,
    u: np.ndarray,
    coeffs,
) -> float:
    """Evaluate the tracking cost for a given state and control."""
    diff = np.asarray(u, dtype=float) - target_field(mesh, weights.target)
    misfit = float(diff @ (fem.mass_matrix(mesh) @ diff))
    return weights.a0 * misfit + weights.a2 * patches.norm_sq(coeffs)


class StateSolver:
    """Shared assembly for repeated state solves under varying controls.

    The stiffness factorization, the base load and one load column per
    patch are built once; solving for a coefficient vector is then a
    cheap fixed-point run.  The base problem must leave ``f2`` unset:
    the control supplies all gamma2 tractions.
    """

    def __init__(self, problem: qvi.ProblemData, patches: ControlPatches):
        if problem.f2 is not None:
            raise ValueError("the control supplies the gamma2 traction; leave f2 unset")
        if patches.mesh is not problem.mesh:
            raise ValueError("patches were built for a different mesh")
        self.problem = problem
        self.patches = patches
        mesh = problem.mesh
        K, F0, g3_idx, _ = qvi.discretize(problem)
        self.tresca = qvi.TrescaSolver(K, mesh.free_nodes, g3_idx)
        self.F0 = F0
        cols = []
        for p in range(patches.n_patches):
            unit = np.zeros(patches.n_patches)
            unit[p] = 1.0
            cols.append(fem.assemble_load(mesh, 0.0, patches.traction(unit)))
        self.B = np.column_stack(cols)
        self.mu_star = problem.resolved_mu_star()

    def solve(self, coeffs, config: qvi.SolverConfig | None = None, eta0=None):
        """State u for the control ``coeffs``; returns (u, SolveReport).

        ``eta0`` seeds the fixed point, e.g. with the state of a nearby
        control; the iteration still runs to its usual tolerance.
        """
        c = self.patches.coefficients(coeffs)
        F = self.F0 + self.B @ c
        return qvi.fixed_point(
            self.problem.mesh, self.problem.g, self.tresca, F, self.mu_star, config, eta0
        )

    def evaluate(self, coeffs, weights: CostWeights, config=None, eta0=None):
        """Reduced cost at ``coeffs``; returns (cost, u)."""
        u, _ = self.solve(coeffs, config, eta0)
        J = cost(self.problem.mesh, self.patches, weights, u, coeffs)
        return J, u


def reduced_cost(
    problem: qvi.ProblemData,
    patches: ControlPatches,
    weights: CostWeights,
    coeffs,
    config: qvi.SolverConfig | None = None,
) -> float:
    """One-off evaluation of the reduced cost (solves the state)."""
    J, _ = StateSolver(problem, patches).evaluate(coeffs, weights, config)
    return J


def admissibility_violation(
    problem: qvi.ProblemData,
    patches: ControlPatches,
    pair: AdmissiblePair,
    *,
    eps: float = 0.0,
    seed: int = 0,
) -> float:
    """Membership residual of the pair for its own traction data."""
    theta = qvi.TykhonovIndex(eps, problem.f0, patches.traction(pair.coeffs), problem.g)
    return qvi.membership_violation(problem.mesh, problem.mu, pair.u, theta, seed=seed)


@dataclass(frozen=True, eq=False)
class StartRecord:
    """Outcome of a single optimizer start."""

    index: int
    x0: np.ndarray
    coeffs: np.ndarray
    cost: float
    n_evals: int
    success: bool


@dataclass(eq=False)
class ControlResult:
    """Selected optimum plus the full multistart picture."""

    pair: AdmissiblePair
    cost: float
    best_cost: float
    spread: float
    violation: float | None
    starts: list[StartRecord]
    clusters: list[tuple[float, np.ndarray, int]]
    traces: list[list[float]] = field(repr=False)


def minimize_cost(
    problem: qvi.ProblemData,
    patches: ControlPatches,
    weights: CostWeights,
    config: qvi.SolverConfig | None = None,
    *,
    n_starts: int = 5,
    seed: int = 0,
    start_scale: float = 1.0,
    extra_starts=(),
    xatol: float = 1e-9,
    fatol: float = 1e-12,
    max_evals: int | None = None,
    tie_tol: float = 1e-9,
    cluster_radius: float = 1e-4,
    check_admissibility: bool = True,
) -> ControlResult:
    """Multistart simplex minimization of the reduced cost.

    Starts are the provided ``extra_starts``, the origin, and seeded
    normal draws of scale ``start_scale``.  The selected optimum is the
    smallest-norm coefficient vector among the cost-best starts (within
    ``tie_tol``); ``clusters`` groups all successful optima by cost
    within ``cluster_radius`` to expose non-unique minimizers.
    """
    if n_starts < 1:
        raise ValueError("need at least one start")
    solver = StateSolver(problem, patches)
    d = patches.n_patches
    rng = np.random.default_rng(seed)

    x0s = [np.asarray(x, dtype=float) for x in extra_starts]
    x0s.append(np.zeros(d))
    while len(x0s) < len(extra_starts) + n_starts:
        x0s.append(start_scale * rng.standard_normal(d))
    box = patches.bounds()
    if box is not None:
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
        x0s = [np.clip(x, lo, hi) for x in x0s]

    budget = max_evals if max_evals is not None else 2000 * d
    starts: list[StartRecord] = []
    traces: list[list[float]] = []
    for i, x0 in enumerate(x0s):
        trace: list[float] = []
        warm = {"eta": None}  # rolling state, private to this start

        def fun(x):
            J, u = solver.evaluate(x, weights, config, eta0=warm["eta"])
            warm["eta"] = u
            trace.append(float(J))
            return J

        res = minimize(
            fun,
            x0,
            method="Nelder-Mead",
            bounds=box,
            options={
                "xatol": xatol,
                "fatol": fatol,
                "maxiter": budget,
                "maxfev": budget,
            },
        )
        starts.append(
            StartRecord(
                index=i,
                x0=x0,
                coeffs=np.asarray(res.x, dtype=float),
                cost=float(res.fun),
                n_evals=int(res.nfev),
                success=bool(res.success),
            )
        )
        traces.append(trace)

    ok = [s for s in starts if s.success]
    if not ok:
        best = min(starts, key=lambda s: s.cost)
        raise ControlError(
            f"no optimizer start converged within {budget} evaluations "
            f"(best cost so far {best.cost:.6e})",
            best=(best.cost, best.coeffs),
        )

    best_cost = min(s.cost for s in ok)
    eligible = [s for s in ok if s.cost <= best_cost + tie_tol]
    selected = min(eligible, key=lambda s: (patches.norm_sq(s.coeffs), s.index))

    by_cost = sorted(ok, key=lambda s: s.cost)
    clusters: list[tuple[float, np.ndarray, int]] = []
    group: list[StartRecord] = []
    for s in by_cost:
        if group and s.cost - group[0].cost > cluster_radius:
            rep = min(
                (m for m in group if m.cost <= group[0].cost + tie_tol),
                key=lambda m: (patches.norm_sq(m.coeffs), m.index),
            )
            clusters.append((rep.cost, rep.coeffs, len(group)))
            group = []
        group.append(s)
    if group:
        rep = min(
            (m for m in group if m.cost <= group[0].cost + tie_tol),
            key=lambda m: (patches.norm_sq(m.coeffs), m.index),
        )
        clusters.append((rep.cost, rep.coeffs, len(group)))

    J_sel, u_sel = solver.evaluate(selected.coeffs, weights, config)
    pair = AdmissiblePair(u=u_sel, coeffs=selected.coeffs)
    violation = None
    if check_admissibility:
        violation = admissibility_violation(problem, patches, pair, seed=seed)
        if violation > 1e-8:
            warnings.warn(
                f"returned pair misses the admissibility certificate "
                f"(violation {violation:.3e})"
            )
    return ControlResult(
        pair=pair,
        cost=float(J_sel),
        best_cost=best_cost,
        spread=max(s.cost for s in ok) - best_cost,
        violation=violation,
        starts=starts,
        clusters=clusters,
        traces=traces,
    )


# ---------------------------------------------------------------------------
# perturbation schedules for the control problem

@dataclass(frozen=True)
class OCSchedule:
    """Vanishing perturbations of the control problem's data.

    ``eps_decay`` relaxes only the admissibility test; ``load_perturb``
    shifts f0 by s_n * f0_shape; ``friction_perturb`` shifts the bound
    by s_n * (da + db |r|); ``target_perturb`` shifts the target by
    s_n * target_shape.
    """

    kind: str
    length: int
    amplitude: float = 1.0
    decay: str = "inverse_n"
    ratio: float = 0.5
    f0_shape: object = 1.0
    target_shape: object = 0.0
    friction_da: float = 1.0
    friction_db: float = 0.0

    def __post_init__(self):
        if self.kind not in OC_SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.length < 4:
            raise ValueError("schedule needs at least four entries")
        if self.decay == "geometric" and not (0.0 < self.ratio < 1.0):
            raise ValueError("geometric decay needs 0 < ratio < 1")
        if self.friction_da < 0.0 or self.friction_db < 0.0:
            raise ValueError("friction perturbation coefficients must be nonnegative")
        decay_scales(self.decay, self.length)  # validates the law name

    def scales(self) -> np.ndarray:
        return decay_scales(self.decay, self.length, self.amplitude, self.ratio)


@dataclass(frozen=True, eq=False)
class OCIndex:
    """Perturbed data defining one approximating control problem."""

    eps: float
    f0: object
    g: fem.FrictionBound
    target: np.ndarray


@dataclass(eq=False)
class OCReport:
    """Deviation of perturbed optima from the unperturbed optimum."""

    kind: str
    ns: list[int]
    scales: list[float]
    eps: list[float]
    costs: list[float]
    cost_dev: list[float]
    ctrl_dev: list[float]
    ctrl_dev_set: list[float]
    state_dev: list[float]
    violations: list[float]
    slope: float | None
    verdict: str
    base: ControlResult
    noise_floor: float
    ctrl_tol: float

    @property
    def max_violation(self) -> float:
        return max(self.violations) if self.violations else 0.0


def _oc_instance(problem, target0, schedule, s):
    """Perturbed (problem, target, index) for scale s."""
    if schedule.kind == "eps_decay":
        return problem, target0, (s, problem.f0, problem.g, target0)
    if schedule.kind == "load_perturb":
        f0n = combine_coefficients(problem.f0, s, schedule.f0_shape)
        return problem.with_data(f0=f0n), target0, (0.0, f0n, problem.g, target0)
    if schedule.kind == "friction_perturb":
        gn = problem.g.shifted(s * schedule.friction_da, s * schedule.friction_db)
        return problem.with_data(g=gn), target0, (0.0, problem.f0, gn, target0)
    # target_perturb
    shape = target_field(problem.mesh, schedule.target_shape)
    tn = target0 + s * shape
    return problem, tn, (0.0, problem.f0, problem.g, tn)


def run_oc_sequence(
    problem: qvi.ProblemData,
    patches: ControlPatches,
    weights: CostWeights,
    schedule: OCSchedule,
    config: qvi.SolverConfig | None = None,
    seed: int = 0,
    *,
    n_starts: int = 5,
    seq_starts: int = 3,
    start_scale: float = 1.0,
    ctrl_tol: float = 1e-3,
    noise_floor: float = 1e-9,
    xatol: float = 1e-9,
    fatol: float = 1e-12,
) -> OCReport:
    """Optimize every perturbed instance and compare with the base optimum.

    Each perturbed run warm-starts from the base optimum (and its
    predecessor) plus ``seq_starts`` fresh starts.  Control deviations
    are measured in L2(gamma2), both against the selected base optimum
    and against the nearest member of the base cluster catalog.
    """
    mesh = problem.mesh
    target0 = target_field(mesh, weights.target)
    base = minimize_cost(
        problem,
        patches,
        weights,
        config,
        n_starts=n_starts,
        seed=seed,
        start_scale=start_scale,
        xatol=xatol,
        fatol=fatol,
    )
    reps = [rep for _, rep, _ in base.clusters]

    ns = list(range(1, schedule.length + 1))
    eps_list, costs, cost_dev, ctrl_dev, ctrl_dev_set = [], [], [], [], []
    state_dev, violations = [], []
    prev = base.pair.coeffs
    for n, s in zip(ns, schedule.scales()):
        prob_n, target_n, (eps_n, f0n, gn, tgt) = _oc_instance(
            problem, target0, schedule, float(s)
        )
        weights_n = CostWeights(weights.a0, weights.a2, target_n)
        try:
            res_n = minimize_cost(
                prob_n,
                patches,
                weights_n,
                config,
                n_starts=seq_starts,
                seed=seed + n,
                start_scale=start_scale,
                extra_starts=(base.pair.coeffs, prev),
                xatol=xatol,
                fatol=fatol,
                check_admissibility=False,
            )
        except (ControlError, qvi.SolverError) as exc:
            raise type(exc)(f"perturbed instance n={n} failed: {exc}") from exc
        index = OCIndex(eps=eps_n, f0=f0n, g=gn, target=tgt)
        eps_list.append(index.eps)
        costs.append(res_n.cost)
        cost_dev.append(abs(res_n.cost - base.cost))
        dc = np.sqrt(patches.norm_sq(res_n.pair.coeffs - base.pair.coeffs))
        ctrl_dev.append(float(dc))
        ctrl_dev_set.append(
            float(
                min(
                    np.sqrt(patches.norm_sq(res_n.pair.coeffs - r)) for r in reps
                )
            )
        )
        state_dev.append(float(fem.v_norm(mesh, res_n.pair.u - base.pair.u)))
        violations.append(
            admissibility_violation(
                prob_n, patches, res_n.pair, eps=index.eps, seed=seed + n
            )
        )
        prev = res_n.pair.coeffs

    verdict = judge_decay(ns, cost_dev, noise_floor)
    if ctrl_dev_set[-1] > ctrl_tol:
        verdict = NON_CONVERGENT
    return OCReport(
        kind=schedule.kind,
        ns=ns,
        scales=[float(s) for s in schedule.scales()],
        eps=eps_list,
        costs=costs,
        cost_dev=cost_dev,
        ctrl_dev=ctrl_dev,
        ctrl_dev_set=ctrl_dev_set,
        state_dev=state_dev,
        violations=violations,
        slope=fit_tail_slope(ns, cost_dev),
        verdict=verdict,
        base=base,
        noise_floor=noise_floor,
        ctrl_tol=ctrl_tol,
    )
