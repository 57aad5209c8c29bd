"""Constraint algorithm, boundary residuals, projection, criticality."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from collardyn import algebra as al
from collardyn import dynamics as dy
from collardyn import fields as fl
from collardyn import pca
from collardyn.mesh import CollarMesh
from conftest import flat_vacuum

OM2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
OM3 = np.zeros((3, 3))
OM3[0, 1], OM3[1, 0] = 1.0, -1.0


def free_particle():
    return pca.PresymplecticSystem(
        2, lambda x: OM2, lambda x: 0.5 * x[1] ** 2,
        lambda x: np.array([0.0, x[1]]))


def regular_model():
    return pca.PresymplecticSystem(
        3, lambda x: OM3,
        lambda x: 0.5 * x[1] ** 2 + 0.5 * x[2] ** 2 + x[2] * x[0],
        lambda x: np.array([x[2], x[1], x[2] + x[0]]))


def two_level_model():
    return pca.PresymplecticSystem(
        3, lambda x: OM3,
        lambda x: x[2] * x[1] + 0.5 * x[0] ** 2,
        lambda x: np.array([x[0], x[2], x[1]]))


class TestKernel:
    def test_canonical_block_empty(self):
        om = np.zeros((4, 4))
        om[0, 2] = om[1, 3] = 1.0
        om[2, 0] = om[3, 1] = -1.0
        assert pca.kernel(om).shape[1] == 0

    def test_zero_matrix_full(self):
        assert pca.kernel(np.zeros((5, 5))).shape[1] == 5

    def test_block_diag_against_svd_oracle(self):
        om = np.zeros((7, 7))
        om[0, 2] = om[1, 3] = 1.0
        om[2, 0] = om[3, 1] = -1.0
        basis = pca.kernel(om)
        assert basis.shape[1] == 3
        # oracle: SVD of the matrix annihilates exactly these directions
        assert np.max(np.abs(om @ basis)) < 1e-12
        assert_allclose(basis.T @ basis, np.eye(3), atol=1e-12)

    def test_non_skew_rejected(self):
        with pytest.raises(ValueError):
            pca.kernel(np.eye(3))


class TestPCAStep:
    def test_regular_model_first_level(self):
        system = regular_model()
        point = np.array([0.4, -0.3, 0.25])
        cands = pca.pca_step(system, point, [])
        assert len(cands) == 1
        # the consistency function is beta + q
        assert abs(cands[0](point) - (point[2] + point[0])) < 1e-10

    def test_zero_gradient_no_constraints(self):
        system = pca.PresymplecticSystem(
            3, lambda x: OM3, lambda x: 1.0, lambda x: np.zeros(3))
        cands = pca.pca_step(system, np.array([0.1, 0.2, 0.3]), [])
        assert all(abs(c(np.array([0.5, -0.5, 2.0]))) < 1e-12 for c in cands)

    def test_violating_point_rejected(self):
        system = regular_model()
        constraint = lambda x: float(x[2] + x[0])
        with pytest.raises(ValueError, match="violates"):
            pca.pca_step(system, np.array([1.0, 0.0, 1.0]), [constraint])

    def test_two_level_hand_chain(self):
        system = two_level_model()
        point = np.array([0.5, 0.4, -0.6])
        cands = pca.pca_step(system, point, [])
        assert len(cands) == 1
        assert abs(cands[0](point) - point[1]) < 1e-10   # p = dH/dbeta
        # on M1 = {p = 0} the pulled-back form vanishes and both surviving
        # directions are kernel; the q-consistency function appears
        c1 = lambda x: float(x[1])
        on_m1 = np.array([0.5, 0.0, -0.6])
        cands2 = pca.pca_step(system, on_m1, [c1])
        assert len(cands2) == 2
        vals = sorted(abs(c(on_m1)) for c in cands2)
        assert vals[-1] > 1e-3   # the q constraint is active off M2


class TestPCARun:
    def test_free_particle_zero_levels(self):
        result = pca.pca_run(free_particle(), np.array([0.3, 0.7]))
        assert len(result.levels) == 0
        assert result.stabilized
        assert result.final_kernel_dim == 0

    def test_regular_one_level_empty_kernel(self):
        result = pca.pca_run(regular_model(), np.array([0.4, -0.3, 0.25]))
        assert len(result.levels) == 1
        assert result.stabilized
        assert result.final_kernel_dim == 0
        dim, count, point = result.levels[0]
        assert dim == 2 and count == 1
        assert abs(point[2] + point[0]) < 1e-9   # beta = -q

    def test_two_level_chain(self):
        result = pca.pca_run(two_level_model(), np.array([0.5, 0.4, -0.6]))
        assert len(result.levels) == 2
        assert result.stabilized
        dims = [lv[0] for lv in result.levels]
        assert dims == [2, 1]
        final = result.levels[-1][2]
        assert abs(final[0]) < 1e-9 and abs(final[1]) < 1e-9
        assert result.final_kernel_dim == 1    # the beta direction survives

    def test_dimensions_non_increasing(self):
        result = pca.pca_run(two_level_model(), np.array([0.9, -0.8, 0.3]))
        dims = [lv[0] for lv in result.levels]
        assert all(d1 >= d2 for d1, d2 in zip(dims, dims[1:]))

    def test_stabilization_idempotent(self):
        system = two_level_model()
        result = pca.pca_run(system, np.array([0.5, 0.4, -0.6]))
        final_point = result.levels[-1][2]
        # rerunning the step at the stabilized point adds nothing
        c1 = lambda x: float(x[1])
        c2 = lambda x: float(x[0])
        cands = pca.pca_step(system, final_point, [c1, c2])
        assert all(abs(c(final_point)) < 1e-8 for c in cands)

    def test_newton_divergence_reports_level(self):
        # a consistency function with empty zero set stalls the projection
        system = pca.PresymplecticSystem(
            3, lambda x: OM3,
            lambda x: x[2] * (1.0 + x[0] ** 2) + 0.5 * x[1] ** 2,
            lambda x: np.array([2.0 * x[0] * x[2], x[1], 1.0 + x[0] ** 2]))
        with pytest.raises(RuntimeError, match="level"):
            pca.pca_run(system, np.array([0.2, 0.1, 0.4]), max_levels=3)

    def test_nonfinite_seed_rejected(self):
        with pytest.raises(ValueError):
            pca.pca_run(free_particle(), np.array([np.nan, 0.0]))


class TestPalatiniResiduals:
    def test_flat_vacuum_exact_zero(self, mesh1d, so11):
        norms = pca.residual_norms(mesh1d, so11, flat_vacuum(mesh1d, so11))
        assert max(norms.values()) < 1e-12

    def test_flat_vacuum_d2(self, mesh2d, so12):
        norms = pca.residual_norms(mesh2d, so12, flat_vacuum(mesh2d, so12))
        assert max(norms.values()) < 1e-12

    def test_beta_perturbation_isolated(self, mesh2d, so12):
        state = flat_vacuum(mesh2d, so12)
        rng = np.random.default_rng(0)
        delta = fl.skew_project(rng.standard_normal(state.beta.shape), 1, 2)
        state.beta = state.beta + delta
        res = pca.palatini_residuals(mesh2d, so12, state)
        assert abs(np.linalg.norm(res["beta"]) - np.linalg.norm(delta)) < 1e-12
        for name in ("gauss", "flatness", "p", "torsion0", "torsion1"):
            assert np.linalg.norm(res[name]) < 1e-13

    def test_term_by_term_oracle(self, mesh2d, so12):
        from collardyn.mesh import d_a_star

        state = fl.random_boundary_state(3, mesh2d, so12, 0.08)
        res = pca.palatini_residuals(mesh2d, so12, state)
        assert_allclose(res["gauss"],
                        d_a_star(mesh2d, so12, state.a, state.p), atol=0)
        assert_allclose(res["flatness"],
                        dy.curvature(mesh2d, so12, state.a) - state.Lambda, atol=0)
        pm_p, pm_beta = dy.palatini_boundary_blocks(state)
        assert_allclose(res["p"], state.p - pm_p, atol=0)
        assert_allclose(res["beta"], state.beta - pm_beta, atol=0)

    def test_torsion_residuals_are_frame_gradients(self, mesh2d, so12):
        # the two frame residuals equal finite differences of the boundary
        # Hamiltonian in e and e0
        state = fl.random_boundary_state(4, mesh2d, so12, 0.08)
        res = pca.palatini_residuals(mesh2d, so12, state)
        h = 1e-6
        fd_e = np.zeros_like(state.e)
        for idx in np.ndindex(state.e.shape):
            st = state.copy()
            st.e[idx] += h
            plus = dy.boundary_hamiltonian(mesh2d, so12, st)
            st.e[idx] -= 2 * h
            minus = dy.boundary_hamiltonian(mesh2d, so12, st)
            fd_e[idx] = (plus - minus) / (2 * h)
        assert np.max(np.abs(fd_e - res["torsion1"])) < 1e-8
        fd_e0 = np.zeros_like(state.e0)
        for idx in np.ndindex(state.e0.shape):
            st = state.copy()
            st.e0[idx] += h
            plus = dy.boundary_hamiltonian(mesh2d, so12, st)
            st.e0[idx] -= 2 * h
            minus = dy.boundary_hamiltonian(mesh2d, so12, st)
            fd_e0[idx] = (plus - minus) / (2 * h)
        assert np.max(np.abs(fd_e0 - res["torsion0"])) < 1e-8

    def test_singular_frame_rejected(self, mesh1d, so11):
        state = flat_vacuum(mesh1d, so11)
        state.e0[:] = 0.0
        with pytest.raises(ValueError, match="singular"):
            pca.palatini_residuals(mesh1d, so11, state)


class TestProjection:
    def test_satisfying_state_unchanged(self, mesh1d, so11):
        vac = flat_vacuum(mesh1d, so11)
        out = pca.project_constraints(mesh1d, so11, vac, tol=1e-11)
        assert np.max(np.abs(fl.pack_state(out) - fl.pack_state(vac))) < 1e-12

    def test_lambda_only_wrong_fixed_in_one_pass(self, mesh2d, so12):
        state = flat_vacuum(mesh2d, so12)
        rng = np.random.default_rng(5)
        state.Lambda = fl.skew_project(1e-2 * rng.standard_normal(state.Lambda.shape),
                                       1, 2)
        out = pca.project_constraints(mesh2d, so12, state, tol=1e-11)
        # the multiplier is set to the curvature exactly; nothing else moves
        assert_allclose(out.Lambda, dy.curvature(mesh2d, so12, out.a), atol=1e-15)
        assert np.max(np.abs(out.a - state.a)) < 1e-12
        res = np.linalg.norm(pca.constraint_residual_vector(mesh2d, so12, out))
        assert res < 1e-12

    @pytest.mark.parametrize("dd", [1, 2])
    def test_perturbed_vacuum_converges(self, dd):
        spec = al.build_algebra("so", d=dd)
        mesh = CollarMesh(d=dd, sites_per_dim=(8 if dd == 1 else 4), h=0.5,
                          n_t=4, dt=0.1)
        state = flat_vacuum(mesh, spec)
        rng = np.random.default_rng(6)
        for name in ("a", "p", "e", "e0", "Lambda0"):
            arr = getattr(state, name)
            setattr(state, name, arr + 1e-2 * rng.standard_normal(arr.shape))
        before = pca.residual_norms(mesh, spec, state)
        out = pca.project_constraints(mesh, spec, state, tol=1e-11)
        after = pca.residual_norms(mesh, spec, out)
        assert np.linalg.norm(
            pca.constraint_residual_vector(mesh, spec, out)) < 1e-10
        for name in after:
            assert after[name] <= before[name] + 1e-10

    def test_idempotent(self, mesh1d, so11):
        state = flat_vacuum(mesh1d, so11)
        rng = np.random.default_rng(7)
        state.p = state.p + 1e-2 * rng.standard_normal(state.p.shape)
        out1 = pca.project_constraints(mesh1d, so11, state, tol=1e-11)
        out2 = pca.project_constraints(mesh1d, so11, out1, tol=1e-11)
        assert np.max(np.abs(fl.pack_state(out2) - fl.pack_state(out1))) < 2e-11

    def test_no_convergence_raises(self, mesh1d, so11):
        state = flat_vacuum(mesh1d, so11)
        rng = np.random.default_rng(8)
        state.p = state.p + rng.standard_normal(state.p.shape)
        with pytest.raises(RuntimeError, match="convergence|underflow"):
            pca.project_constraints(mesh1d, so11, state, tol=1e-14, max_iter=1)


class TestLagrangeCriticality:
    def test_finite_dimensional_surrogate(self):
        # F(x) = |x|^2 constrained to the curve (e, e^2); the hand-solved
        # critical point of the extended function is the origin
        def extended(x, lam, e):
            phi = np.array([e, e * e])
            return float(x @ x + lam @ (x - phi))

        z0 = np.zeros(5)   # x (2), lam (2), e (1)
        h = 1e-6
        grad = np.zeros(5)
        for i in range(5):
            zp, zm = z0.copy(), z0.copy()
            zp[i] += h
            zm[i] -= h
            grad[i] = (extended(zp[:2], zp[2:4], zp[4])
                       - extended(zm[:2], zm[2:4], zm[4])) / (2 * h)
        assert np.max(np.abs(grad)) < 1e-10

    def test_flat_vacuum_bulk_critical(self, mesh1d, so11):
        n_t, n, m, g = mesh1d.n_t, mesh1d.n_sites, mesh1d.m, so11.dim
        ev = fl.VierbeinField(np.tile(np.eye(m), (n_t, n, 1, 1)))
        P = fl.palatini_map(ev)
        A = np.zeros((n_t, n, m, g))
        Lam = np.zeros_like(P)
        report = pca.lagrange_criticality_check(mesh1d, so11, A, P, Lam, ev)
        assert report["critical"]
        assert all(v < 1e-8 for v in report["blocks"].values())
        assert report["lambda_block_gap"] < 1e-12

    def test_constraint_violation_shows_in_lambda_block(self, mesh1d, so11):
        n_t, n, m, g = mesh1d.n_t, mesh1d.n_sites, mesh1d.m, so11.dim
        ev = fl.VierbeinField(np.tile(np.eye(m), (n_t, n, 1, 1)))
        P = fl.palatini_map(ev)
        rng = np.random.default_rng(9)
        P = P + fl.skew_project(0.05 * rng.standard_normal(P.shape), 2, 3)
        Lam = np.zeros_like(P)
        report = pca.lagrange_criticality_check(mesh1d, so11, np.zeros((n_t, n, m, g)),
                                                P, Lam, ev)
        assert not report["critical"]
        assert report["blocks"]["Lambda"] > 1e-4
        # the multiplier gradient block IS the quadrature-weighted constraint
        assert report["lambda_block_gap"] < 1e-12
        assert report["constraint_norm"] > 1e-3


class TestBoundarySystem:
    def test_gradient_matches_finite_differences(self, so11):
        mesh = CollarMesh(d=1, sites_per_dim=4, h=0.5, n_t=4, dt=0.1)
        system = pca.palatini_boundary_system(mesh, so11)
        state = fl.random_boundary_state(10, mesh, so11, 0.06)
        z = fl.pack_state(state)
        grad = system.gradient(z)
        fd = pca.fd_gradient(system.hamiltonian, z, h=1e-6)
        assert np.max(np.abs(grad - fd)) / max(1.0, np.max(np.abs(grad))) < 1e-6
        om = system.omega(z)
        assert np.max(np.abs(om + om.T)) < 1e-12

    def test_level_one_matches_constraint_zero_set(self, so11):
        mesh = CollarMesh(d=1, sites_per_dim=8, h=0.5, n_t=4, dt=0.1)
        system = pca.palatini_boundary_system(mesh, so11)
        vac = flat_vacuum(mesh, so11)
        candidates = pca.pca_step(system, fl.pack_state(vac), [])
        # kernel covers every non-(a, p) direction
        layout_total = fl.packed_size(mesh.n_sites, 1, so11.dim, mesh.m)
        assert len(candidates) == layout_total - 2 * mesh.n_sites * so11.dim
        # on the constraint set every consistency value vanishes; off it not
        for seed in range(3):
            sample = fl.random_boundary_state(seed, mesh, so11, 0.03)
            z = fl.pack_state(sample)
            cand_vals = max(abs(c(z)) for c in candidates)
            res = np.linalg.norm(pca.constraint_residual_vector(mesh, so11, sample))
            projected = pca.project_constraints(mesh, so11, sample, tol=1e-11)
            zp = fl.pack_state(projected)
            on_vals = max(abs(c(zp)) for c in candidates)
            assert on_vals < 1e-9
            assert (cand_vals > 1e-6) == (res > 1e-6)
