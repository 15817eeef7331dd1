"""Perturbation schedules and empirical convergence measurement.

A schedule produces a sequence of data perturbations with vanishing
amplitude (regularization weight, source, traction, friction bound or
shear modulus), solves each perturbed problem, and certifies that every
iterate belongs to the approximating set of its index.  The measured
errors against the unperturbed solution quantify how stably the problem
responds: conforming schedules decay (typically like the perturbation
scale), while a sequence driven toward different limit data plateaus at
a positive gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import fem, qvi

SCHEDULE_KINDS = (
    "eps_decay",
    "load_perturb",
    "traction_perturb",
    "friction_perturb",
    "lame_perturb",
    "adversarial_load",
)
DECAY_LAWS = ("inverse_n", "inverse_n_sq", "geometric", "zero")
MU_LAWS = ("relative", "oscillation")

CONVERGENT = "CONVERGENT"
NON_CONVERGENT = "NON-CONVERGENT"


@dataclass(frozen=True)
class Schedule:
    """One family of vanishing perturbations.

    ``amplitude`` scales the decay law s_n (1/n, 1/n^2, ratio^n or 0).
    The perturbed quantity depends on ``kind``:

    * ``eps_decay``: relaxation weight eps_n = s_n, data untouched;
    * ``load_perturb``: f0_n = f0 + s_n * f0_shape;
    * ``traction_perturb``: f2_n = f2 + s_n * f2_shape;
    * ``friction_perturb``: g_n = g + s_n*(da + db |r|);
    * ``lame_perturb``: mu_n by ``mu_law``, eps_n = max |mu_n - mu|;
    * ``adversarial_load``: f0_n = f0_target + s_n * f0_shape.
    """

    kind: str
    length: int
    amplitude: float = 1.0
    decay: str = "inverse_n"
    ratio: float = 0.5
    f0_shape: object = 1.0
    f2_shape: object = 1.0
    friction_da: float = 1.0
    friction_db: float = 0.0
    f0_target: object = None
    mu_law: str = "relative"

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.decay not in DECAY_LAWS:
            raise ValueError(f"unknown decay law {self.decay!r}")
        if self.mu_law not in MU_LAWS:
            raise ValueError(f"unknown mu law {self.mu_law!r}")
        if self.length < 4:
            raise ValueError("schedule needs at least four entries")
        if not (0.0 < self.ratio < 1.0) and self.decay == "geometric":
            raise ValueError("geometric decay needs 0 < ratio < 1")
        if self.kind == "adversarial_load" and self.f0_target is None:
            raise ValueError("adversarial_load needs f0_target")
        if self.friction_da < 0.0 or self.friction_db < 0.0:
            raise ValueError("friction perturbation coefficients must be nonnegative")

    def scales(self) -> np.ndarray:
        return decay_scales(self.decay, self.length, self.amplitude, self.ratio)


def decay_scales(decay: str, length: int, amplitude: float = 1.0, ratio: float = 0.5):
    """Scale sequence s_n, n = 1..length, for a named decay law."""
    n = np.arange(1, length + 1, dtype=float)
    if decay == "inverse_n":
        s = 1.0 / n
    elif decay == "inverse_n_sq":
        s = 1.0 / n**2
    elif decay == "geometric":
        s = ratio**n
    elif decay == "zero":
        s = np.zeros_like(n)
    else:
        raise ValueError(f"unknown decay law {decay!r}")
    return amplitude * s


def combine_coefficients(base, scale: float, shape):
    """base + scale * shape for scalar or callable coefficients."""
    if scale == 0.0:
        return base
    if callable(base) or callable(shape):
        base_f = base if callable(base) else (lambda x, b=base: np.full(len(x), float(b)))
        shape_f = shape if callable(shape) else (lambda x, s=shape: np.full(len(x), float(s)))
        return lambda x: np.asarray(base_f(x), dtype=float) + scale * np.asarray(
            shape_f(x), dtype=float
        )
    return float(base) + scale * float(shape)


def _index_for(problem: qvi.ProblemData, schedule: Schedule, s: float, n: int):
    """Perturbed index theta_n and the problem to solve for it."""
    if schedule.kind == "eps_decay":
        theta = qvi.TykhonovIndex(s, problem.f0, problem.f2, problem.g)
        return theta, problem
    if schedule.kind == "load_perturb":
        f0n = combine_coefficients(problem.f0, s, schedule.f0_shape)
        theta = qvi.TykhonovIndex(0.0, f0n, problem.f2, problem.g)
        return theta, problem.with_data(f0=f0n)
    if schedule.kind == "traction_perturb":
        f2n = combine_coefficients(problem.f2, s, schedule.f2_shape)
        theta = qvi.TykhonovIndex(0.0, problem.f0, f2n, problem.g)
        return theta, problem.with_data(f2=f2n)
    if schedule.kind == "friction_perturb":
        gn = problem.g.shifted(s * schedule.friction_da, s * schedule.friction_db)
        theta = qvi.TykhonovIndex(0.0, problem.f0, problem.f2, gn)
        return theta, problem.with_data(g=gn)
    if schedule.kind == "adversarial_load":
        f0n = combine_coefficients(schedule.f0_target, s, schedule.f0_shape)
        theta = qvi.TykhonovIndex(0.0, f0n, problem.f2, problem.g)
        return theta, problem.with_data(f0=f0n)
    raise ValueError(f"schedule kind {schedule.kind!r} has no direct index")


def generate_sequence(
    problem: qvi.ProblemData,
    schedule: Schedule,
    config: qvi.SolverConfig | None = None,
    seed: int = 0,
):
    """Solve every perturbed instance; returns [(theta_n, u_n)].

    Raises SolverError naming the position when a perturbed instance
    breaks the smallness condition or fails to converge.
    """
    if schedule.kind == "lame_perturb":
        return lame_perturb_sequence(problem, schedule, config, seed)
    out = []
    for n, s in enumerate(schedule.scales(), start=1):
        theta, prob_n = _index_for(problem, schedule, float(s), n)
        try:
            u_n, _ = qvi.solve_qvi(prob_n, config)
        except qvi.SolverError as exc:
            raise qvi.SolverError(f"perturbed instance n={n} failed: {exc}") from exc
        out.append((theta, u_n))
    return out


def lame_perturb_sequence(
    problem: qvi.ProblemData,
    schedule: Schedule,
    config: qvi.SolverConfig | None = None,
    seed: int = 0,
):
    """Modulus perturbations; the index keeps the original data and
    carries eps_n = max |mu_n - mu| sampled at element midpoints."""
    mu_e = fem.element_values(problem.mesh, problem.mu)
    out = []
    for n, s in enumerate(schedule.scales(), start=1):
        if schedule.mu_law == "relative":
            mu_n = combine_coefficients(problem.mu, float(s), problem.mu)
        else:  # fixed-amplitude oscillation, scale law ignored
            mu_n = combine_coefficients(problem.mu, schedule.amplitude * (-1.0) ** n, 1.0)
        mu_n_e = fem.element_values(problem.mesh, mu_n)
        eps_n = float(np.max(np.abs(mu_n_e - mu_e)))
        theta = qvi.TykhonovIndex(eps_n, problem.f0, problem.f2, problem.g)
        try:
            u_n, _ = qvi.solve_qvi(problem.with_data(mu=mu_n, mu_star=None), config)
        except qvi.SolverError as exc:
            raise qvi.SolverError(f"perturbed instance n={n} failed: {exc}") from exc
        out.append((theta, u_n))
    return out


@dataclass
class ConvergenceReport:
    kind: str
    ns: list[int]
    scales: list[float]
    eps: list[float]
    errors: list[float]
    violations: list[float]
    slope: float | None
    verdict: str
    noise_floor: float
    limit_gap: float | None = None
    errors_to_limit: list[float] | None = None

    @property
    def max_violation(self) -> float:
        return max(self.violations) if self.violations else 0.0


def fit_tail_slope(ns, errors) -> float | None:
    """Least-squares slope of log e against log n over the tail half."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    tail = ns >= ns[-1] / 2.0
    keep = tail & (errors > 0.0)
    if keep.sum() < 3:
        return None
    coef = np.polyfit(np.log(ns[keep]), np.log(errors[keep]), 1)
    return float(coef[0])


def judge_decay(ns, errors, noise_floor) -> str:
    """CONVERGENT when the tail half either sits below the noise floor
    or decreases (within 10% jitter) and ends well under its start."""
    errors = np.asarray(errors, dtype=float)
    ns = np.asarray(ns, dtype=float)
    tail = errors[ns >= ns[-1] / 2.0]
    if np.all(tail <= noise_floor):
        return CONVERGENT
    jitter_ok = np.all(tail[1:] <= 1.1 * tail[:-1])
    decaying = tail[-1] <= 0.8 * tail[0]
    return CONVERGENT if (jitter_ok and decaying) else NON_CONVERGENT


def run_convergence(
    problem: qvi.ProblemData,
    schedule: Schedule,
    config: qvi.SolverConfig | None = None,
    seed: int = 0,
    *,
    check_membership: bool = True,
    noise_floor: float | None = None,
) -> ConvergenceReport:
    """Generate a schedule, measure errors against the unperturbed
    solution, certify membership, fit the tail slope and judge decay."""
    cfg = config or qvi.SolverConfig()
    floor = noise_floor if noise_floor is not None else max(1e-6, 10.0 * cfg.outer_tol)

    u_ref, _ = qvi.solve_qvi(problem, config)
    seq = generate_sequence(problem, schedule, config, seed)
    mesh = problem.mesh

    ns = list(range(1, schedule.length + 1))
    errors = [float(fem.v_norm(mesh, u_n - u_ref)) for _, u_n in seq]
    violations = []
    if check_membership:
        for n, (theta, u_n) in zip(ns, seq):
            violations.append(
                qvi.membership_violation(mesh, problem.mu, u_n, theta, seed=seed + n)
            )

    limit_gap = None
    errors_to_limit = None
    if schedule.kind == "adversarial_load":
        u_bar, _ = qvi.solve_qvi(problem.with_data(f0=schedule.f0_target), config)
        limit_gap = float(fem.v_norm(mesh, u_bar - u_ref))
        errors_to_limit = [float(fem.v_norm(mesh, u_n - u_bar)) for _, u_n in seq]

    return ConvergenceReport(
        kind=schedule.kind,
        ns=ns,
        scales=[float(s) for s in schedule.scales()],
        eps=[theta.eps for theta, _ in seq],
        errors=errors,
        violations=violations,
        slope=fit_tail_slope(ns, errors),
        verdict=judge_decay(ns, errors, floor),
        noise_floor=floor,
        limit_gap=limit_gap,
        errors_to_limit=errors_to_limit,
    )


def verify_c4(
    g_n: fem.FrictionBound,
    g: fem.FrictionBound,
    points: np.ndarray,
    r_samples: np.ndarray,
) -> tuple[float, float]:
    """Smallest affine envelope |g_n(x, r) - g(x, r)| <= alpha + beta |r|.

    Minimizes the mean of the envelope over the sampled |r| subject to
    domination at every sample, a two-variable linear program; returns
    (alpha, beta) with both nonnegative.
    """
    points = np.atleast_1d(points)
    r_samples = np.asarray(r_samples, dtype=float)
    rows_r = []
    rows_d = []
    for p in points:
        p_arr = np.broadcast_to(np.asarray(p), (len(r_samples),) + np.shape(p))
        d = np.abs(g_n(p_arr, r_samples) - g(p_arr, r_samples))
        rows_r.append(np.abs(r_samples))
        rows_d.append(d)
    rr = np.concatenate(rows_r)
    dd = np.concatenate(rows_d)
    # minimize alpha + beta * mean|r|  s.t.  alpha + beta*|r_i| >= d_i
    res = linprog(
        c=[1.0, float(rr.mean())],
        A_ub=np.column_stack([-np.ones_like(rr), -rr]),
        b_ub=-dd,
        bounds=[(0.0, None), (0.0, None)],
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"envelope fit failed: {res.message}")
    alpha, beta = (float(v) for v in res.x)
    return alpha, beta
