"""Frozen-bound solves, the fixed point, membership and diagnostics.

Hand-derived references on the unit interval (left end clamped, friction
point x = 1, weight one, constant source f0, modulus mu):

* frozen bound G: slip occurs when |f0| > 2 mu G... the positive-slip
  solution is u = -(f0/2mu) x^2 + ((f0 - G)/mu) x with traction -G;
* slip-dependent bound g(r) = a + b|r| with f0 = 3, mu = 1 fixes the end
  value t from t = f0/2 - (a + b t), e.g. a = b = 0.5 gives t = 2/3 and
  bound 5/6 at the fixed point.
"""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from antiplane import constants, fem, qvi
from antiplane.oracle import analytic_1d, benchmark_problem, linear_solve

RNG_SEED = 424242


def interval_mesh(n):
    spec = fem.MeshSpec(1, (1.0,), (n,), {"left": "gamma1", "right": "gamma3"})
    return fem.build_mesh(spec)


def square_mesh(n):
    spec = fem.MeshSpec(
        2, (1.0, 1.0), (n, n),
        {"left": "gamma1", "right": "gamma2", "bottom": "gamma3", "top": "gamma3"},
    )
    return fem.build_mesh(spec)


def friction_energy(mesh, K, F, g, u):
    """Full nonsmooth energy with the bound frozen at the slip of u itself."""
    return 0.5 * u @ (K @ u) - F @ u + fem.eval_j(mesh, g, u, u)


class TestTresca:
    def test_zero_bound_matches_direct_solve(self):
        mesh = interval_mesh(32)
        K = fem.assemble_stiffness(mesh, 1.0)
        F = fem.assemble_load(mesh, 2.0)
        u, sweeps, energies = qvi.solve_tresca(
            K, F, np.zeros(1), mesh.free_nodes, mesh.node_sets["gamma3"]
        )
        ref = linear_solve(mesh, 1.0, 2.0)
        assert np.max(np.abs(u - ref)) < 1e-10

    def test_slip_solution_exact(self):
        # mu = 1, f0 = 3, G = 1: u = -1.5 x^2 + 2 x, end traction -1
        mesh = interval_mesh(64)
        K = fem.assemble_stiffness(mesh, 1.0)
        F = fem.assemble_load(mesh, 3.0)
        u, _, _ = qvi.solve_tresca(
            K, F, np.array([1.0]), mesh.free_nodes, mesh.node_sets["gamma3"]
        )
        x = mesh.nodes
        assert np.max(np.abs(u - (-1.5 * x**2 + 2.0 * x))) < 1e-10
        idx, lam = qvi.friction_multipliers(mesh, K, F, u)
        assert np.allclose(lam, [-1.0], atol=1e-9)

    def test_stick_when_bound_large(self):
        mesh = interval_mesh(32)
        K = fem.assemble_stiffness(mesh, 1.0)
        F = fem.assemble_load(mesh, 1.0)
        u, _, _ = qvi.solve_tresca(
            K, F, np.array([10.0]), mesh.free_nodes, mesh.node_sets["gamma3"]
        )
        assert abs(u[-1]) < 1e-14

    def test_minimizer_beats_perturbations(self):
        mesh = square_mesh(5)
        K = fem.assemble_stiffness(mesh, 1.0)
        F = fem.assemble_load(mesh, 1.0, 0.5)
        g3 = mesh.node_sets["gamma3"]
        w = mesh.gamma3_weights[g3]
        bound = 0.4 * w
        u, sweeps, energies = qvi.solve_tresca(K, F, bound, mesh.free_nodes, g3)
        g = fem.FrictionBound.constant(0.4)
        e_star = friction_energy(mesh, K, F, g, u)
        rng = np.random.default_rng(RNG_SEED)
        for scale in (1e-3, 1e-1, 1.0):
            for _ in range(30):
                v = u + scale * fem.zero_on_gamma1(mesh, rng.standard_normal(mesh.n_nodes))
                assert friction_energy(mesh, K, F, g, v) >= e_star - 1e-12

    def test_energy_nonincreasing(self):
        mesh = square_mesh(6)
        K = fem.assemble_stiffness(mesh, 1.0)
        F = fem.assemble_load(mesh, 2.0, 1.0)
        g3 = mesh.node_sets["gamma3"]
        u, sweeps, energies = qvi.solve_tresca(
            K, F, 0.3 * mesh.gamma3_weights[g3], mesh.free_nodes, g3
        )
        assert sweeps >= 1
        diffs = np.diff(energies)
        assert np.all(diffs <= 1e-10)

    def test_inner_cap_raises(self):
        mesh = square_mesh(6)
        K = fem.assemble_stiffness(mesh, 1.0)
        F = fem.assemble_load(mesh, 2.0, 1.0)
        g3 = mesh.node_sets["gamma3"]
        with pytest.raises(qvi.SolverError, match="sweeps"):
            qvi.solve_tresca(
                K, F, 0.3 * mesh.gamma3_weights[g3], mesh.free_nodes, g3, max_inner=1
            )

    def test_rejects_nonpositive_diagonal(self):
        mesh = interval_mesh(4)
        K = sp.csr_matrix((5, 5))
        F = np.zeros(5)
        with pytest.raises(qvi.SolverError, match="diagonal"):
            qvi.solve_tresca(K, F, np.zeros(1), mesh.free_nodes, mesh.node_sets["gamma3"])

    def test_rejects_negative_bound(self):
        mesh = interval_mesh(4)
        K = fem.assemble_stiffness(mesh, 1.0)
        F = fem.assemble_load(mesh, 1.0)
        with pytest.raises(qvi.SolverError, match="negative"):
            qvi.solve_tresca(K, F, np.array([-1.0]), mesh.free_nodes, mesh.node_sets["gamma3"])


class TestFixedPoint:
    def test_benchmark_cases_nodal_exact(self):
        for mu, f0, g in [(1.0, 1.0, 1.0), (1.0, 3.0, 1.0), (2.0, -3.0, 0.5), (1.0, 2.0, 1.0)]:
            prob = benchmark_problem(mu, f0, g, 128)
            u, rep = qvi.solve_qvi(prob)
            assert rep.converged
            x = prob.mesh.nodes
            assert np.max(np.abs(u - analytic_1d(mu, f0, g, x))) < 1e-9

    def test_slip_dependent_fixed_point(self):
        # g(r) = 0.5 + 0.5|r|, f0 = 3: end value 2/3, bound 5/6 at the fixed point
        mesh = interval_mesh(64)
        prob = qvi.ProblemData(mesh, 1.0, 3.0, 0.0, fem.FrictionBound.affine(0.5, 0.5))
        u, rep = qvi.solve_qvi(prob)
        assert abs(u[-1] - 2.0 / 3.0) < 1e-9
        x = mesh.nodes
        ref = -1.5 * x**2 + (3.0 - 5.0 / 6.0) * x
        assert np.max(np.abs(u - ref)) < 1e-9

    def test_zero_data_single_iteration(self):
        mesh = interval_mesh(16)
        prob = qvi.ProblemData(mesh, 1.0, 0.0, 0.0, fem.FrictionBound.constant(0.0))
        u, rep = qvi.solve_qvi(prob)
        assert np.allclose(u, 0.0)
        assert rep.outer_iterations == 1

    def test_slip_independent_bound_two_iterations(self):
        prob = benchmark_problem(1.0, 3.0, 1.0, 32)
        u, rep = qvi.solve_qvi(prob)
        assert rep.outer_iterations == 2

    def test_observed_contraction_below_margin(self):
        # L_g = 0.9 on the interval: k just above 0.96
        mesh = interval_mesh(64)
        prob = qvi.ProblemData(mesh, 1.0, 3.0, 0.0, fem.FrictionBound.affine(0.25, 0.9))
        u, rep = qvi.solve_qvi(prob, qvi.SolverConfig(max_outer=400))
        assert rep.k < 1.0
        assert len(rep.ratios) > 10
        assert max(rep.ratios) <= rep.k + 0.05

    def test_iteration_count_follows_contraction(self):
        mesh = interval_mesh(64)
        prob = qvi.ProblemData(mesh, 1.0, 3.0, 0.0, fem.FrictionBound.affine(0.5, 0.5))
        u, rep = qvi.solve_qvi(prob)
        bound = int(np.ceil(np.log(1e-10) / np.log(rep.k))) + 5
        assert rep.outer_iterations <= bound

    def test_smallness_violation_requires_override(self):
        mesh = interval_mesh(32)
        prob = qvi.ProblemData(mesh, 1.0, 1.0, 0.0, fem.FrictionBound.affine(0.1, 1.0))
        with pytest.raises(qvi.SolverError, match="contraction factor"):
            qvi.solve_qvi(prob)

    def test_override_still_converges_when_map_contracts(self):
        # k >= 1 is only an upper bound; the interval map still contracts at 0.95
        mesh = interval_mesh(32)
        prob = qvi.ProblemData(mesh, 1.0, 3.0, 0.0, fem.FrictionBound.affine(0.1, 0.95))
        with pytest.warns(UserWarning, match="non-contractive"):
            u, rep = qvi.solve_qvi(
                prob, qvi.SolverConfig(max_outer=1000, allow_non_contractive=True)
            )
        assert rep.converged and not rep.contraction_ok

    def test_outer_cap_raises(self):
        prob = benchmark_problem(1.0, 3.0, 1.0, 16)
        with pytest.raises(qvi.SolverError, match="outer fixed point"):
            qvi.solve_qvi(prob, qvi.SolverConfig(max_outer=1))

    def test_negative_bound_function_rejected(self):
        mesh = interval_mesh(16)
        bad = fem.FrictionBound(lambda x, r: -np.ones_like(r), 0.0)
        prob = qvi.ProblemData(mesh, 1.0, 1.0, 0.0, bad)
        with pytest.raises(qvi.SolverError, match="negative"):
            qvi.solve_qvi(prob)

    def test_deterministic(self):
        prob = benchmark_problem(1.0, 3.0, 1.0, 64)
        u1, _ = qvi.solve_qvi(prob)
        u2, _ = qvi.solve_qvi(prob)
        assert np.array_equal(u1, u2)

    def test_square_with_slip_dependent_bound(self):
        mesh = square_mesh(6)
        prob = qvi.ProblemData(mesh, 1.0, 1.0, 0.5, fem.FrictionBound.affine(0.2, 0.2))
        u, rep = qvi.solve_qvi(prob)
        assert rep.converged and rep.contraction_ok
        assert fem.in_space(mesh, u)
        theta = qvi.TykhonovIndex(0.0, 1.0, 0.5, prob.g)
        assert qvi.membership_violation(mesh, 1.0, u, theta, seed=5) <= 1e-8


class TestAPrioriBound:
    def test_solution_norm_bounded_by_dual_load(self):
        for mu, f0, g in [(1.0, 3.0, 1.0), (2.0, -3.0, 0.5)]:
            prob = benchmark_problem(mu, f0, g, 64)
            u, rep = qvi.solve_qvi(prob)
            F = fem.assemble_load(prob.mesh, prob.f0, prob.f2)
            lhs = prob.resolved_mu_star() / rep.c0**2 * fem.v_norm(prob.mesh, u)
            assert lhs <= fem.dual_norm(prob.mesh, F) * (1 + 1e-9)


class TestFourPointEstimate:
    def test_bound_difference_estimate(self):
        mesh = square_mesh(5)
        g = fem.FrictionBound.affine(0.3, 0.6)
        c3 = constants.trace_constant(mesh, seed=0)
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(50):
            e1, e2, v1, v2 = (
                fem.zero_on_gamma1(mesh, rng.standard_normal(mesh.n_nodes)) for _ in range(4)
            )
            lhs = (
                fem.eval_j(mesh, g, e1, v2)
                - fem.eval_j(mesh, g, e1, v1)
                + fem.eval_j(mesh, g, e2, v1)
                - fem.eval_j(mesh, g, e2, v2)
            )
            rhs = (
                g.lipschitz
                * c3**2
                * fem.v_norm(mesh, e1 - e2)
                * fem.v_norm(mesh, v1 - v2)
            )
            assert lhs <= rhs * (1 + 1e-10) + 1e-12


class TestMembership:
    def test_solution_certifies(self):
        prob = benchmark_problem(1.0, 3.0, 1.0, 64)
        u, _ = qvi.solve_qvi(prob)
        theta = qvi.TykhonovIndex(0.0, prob.f0, prob.f2, prob.g)
        v = qvi.membership_violation(prob.mesh, prob.mu, u, theta, seed=0)
        assert v <= 1e-8

    def test_perturbed_solution_fails(self):
        prob = benchmark_problem(1.0, 3.0, 1.0, 64)
        u, _ = qvi.solve_qvi(prob)
        bad = u.copy()
        bad[32] += 0.3
        theta = qvi.TykhonovIndex(0.0, prob.f0, prob.f2, prob.g)
        assert qvi.membership_violation(prob.mesh, prob.mu, bad, theta, seed=0) > 1e-3

    def test_relaxation_absorbs_load_error(self):
        # u solves the unperturbed problem; with the load shifted by delta
        # it only joins the approximating set once eps covers the gap
        prob = benchmark_problem(1.0, 3.0, 1.0, 64)
        u, _ = qvi.solve_qvi(prob)
        delta = 0.01
        tight = qvi.TykhonovIndex(0.0, prob.f0 + delta, prob.f2, prob.g)
        assert qvi.membership_violation(prob.mesh, prob.mu, u, tight, seed=0) > 1e-8
        F = fem.assemble_load(prob.mesh, prob.f0)
        F_shift = fem.assemble_load(prob.mesh, prob.f0 + delta)
        gap = fem.dual_norm(prob.mesh, F_shift - F) / fem.v_norm(prob.mesh, u)
        relaxed = qvi.TykhonovIndex(gap * 1.0001, prob.f0 + delta, prob.f2, prob.g)
        assert qvi.membership_violation(prob.mesh, prob.mu, u, relaxed, seed=0) <= 1e-8

    def test_explicit_directions(self):
        prob = benchmark_problem(1.0, 1.0, 1.0, 16)
        u, _ = qvi.solve_qvi(prob)
        theta = qvi.TykhonovIndex(0.0, prob.f0, prob.f2, prob.g)
        dirs = [np.zeros(prob.mesh.n_nodes), 2 * u, 0.5 * u]
        assert qvi.membership_violation(prob.mesh, prob.mu, u, theta, directions=dirs) <= 1e-12

    def test_deterministic(self):
        prob = benchmark_problem(1.0, 3.0, 1.0, 32)
        u, _ = qvi.solve_qvi(prob)
        theta = qvi.TykhonovIndex(1e-3, prob.f0, prob.f2, prob.g)
        a = qvi.membership_violation(prob.mesh, prob.mu, u, theta, seed=9)
        b = qvi.membership_violation(prob.mesh, prob.mu, u, theta, seed=9)
        assert a == b


class TestComplementarity:
    @pytest.mark.parametrize(
        "mu,f0,g", [(1.0, 1.0, 1.0), (1.0, 3.0, 1.0), (2.0, -3.0, 0.5), (1.0, 2.0, 1.0)]
    )
    def test_friction_law_residuals(self, mu, f0, g):
        prob = benchmark_problem(mu, f0, g, 128)
        u, _ = qvi.solve_qvi(prob)
        idx, lam, G, stick_slack, comp = qvi.complementarity_report(prob, u)
        assert np.all(stick_slack <= 1e-8)
        assert np.all(comp <= 1e-8)

    def test_slip_traction_sign(self):
        # positive slip drags the traction to the negative bound
        prob = benchmark_problem(1.0, 3.0, 1.0, 64)
        u, _ = qvi.solve_qvi(prob)
        idx, lam, G, _, _ = qvi.complementarity_report(prob, u)
        assert u[idx][0] > 0.0
        assert np.isclose(lam[0], -G[0], atol=1e-9)

    def test_square_case(self):
        mesh = square_mesh(6)
        prob = qvi.ProblemData(mesh, 1.0, 1.0, 0.5, fem.FrictionBound.affine(0.2, 0.2))
        u, _ = qvi.solve_qvi(prob)
        idx, lam, G, stick_slack, comp = qvi.complementarity_report(prob, u)
        assert np.all(stick_slack <= 1e-8)
        assert np.all(comp <= 1e-8)
