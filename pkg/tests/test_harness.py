import numpy as np
import pytest

from pyhho.harness import (build_local, convergence_study, discrete_energy,
                           error_norms, fit_rate, flux_residuals,
                           galerkin_residual, mesh_family, oracle_1d,
                           solve_problem, traction_residuals)
from pyhho.mesh import build_interval_mesh, build_structured_mesh
from pyhho.problems import (ProblemSpec, elasticity_compressible,
                            elasticity_divfree, elasticity_polynomial,
                            get_problem, poisson_polynomial, poisson_sin_1d,
                            poisson_sin_2d, rigid_body_problem)
from pyhho.projection import HhoDegrees, equal_order, reduce_global


def test_manufactured_sources_match_finite_differences():
    # cross-check the hand-coded sources with a 5-point laplacian stencil
    rng = np.random.default_rng(1)
    pts = rng.uniform(0.2, 0.8, size=(20, 2))
    eps = 1e-4

    def lap(u, x):
        out = -4.0 * u(x)
        for d in range(2):
            for s in (-1.0, 1.0):
                y = x.copy()
                y[:, d] += s * eps
                out = out + u(y)
        return out / eps ** 2

    spec = poisson_sin_2d()
    np.testing.assert_allclose(spec.f(pts), -lap(spec.exact, pts), rtol=1e-6)

    for builder in (elasticity_divfree, elasticity_compressible):
        spec = builder(mu=1.3, lam=0.9)
        lap_u = np.column_stack(
            [lap(lambda x: spec.exact(x)[:, 0], pts),
             lap(lambda x: spec.exact(x)[:, 1], pts)])

        def div_u(x):
            J = spec.exact_grad(x)
            return J[:, 0, 0] + J[:, 1, 1]

        grad_div = np.column_stack([
            (div_u(pts + [eps, 0]) - div_u(pts - [eps, 0])) / (2 * eps),
            (div_u(pts + [0, eps]) - div_u(pts - [0, eps])) / (2 * eps)])
        expect = -spec.mu * lap_u - (spec.mu + spec.lam) * grad_div
        np.testing.assert_allclose(spec.f(pts), expect, rtol=1e-5, atol=1e-5)


def test_exact_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0.1, 0.9, size=(10, 2))
    eps = 1e-6
    for spec in (poisson_sin_2d(), elasticity_divfree(), elasticity_compressible()):
        g = spec.exact_grad(pts)
        for d in range(2):
            step = np.zeros(2)
            step[d] = eps
            fd = (np.asarray(spec.exact(pts + step)) -
                  np.asarray(spec.exact(pts - step))) / (2 * eps)
            if g.ndim == 2:
                np.testing.assert_allclose(g[:, d], fd, rtol=1e-6, atol=1e-7)
            else:
                np.testing.assert_allclose(g[:, :, d], fd, rtol=1e-6, atol=1e-7)


def test_zero_data_gives_zero_solution():
    spec = ProblemSpec(kind="poisson", f=lambda x: np.zeros(len(x)),
                       u_dirichlet=lambda x: np.zeros(len(x)), name="zero")
    sol = solve_problem(build_structured_mesh("quad", 3, 3), equal_order(1), spec)
    assert np.abs(sol.face_coeffs).max() < 1e-13
    assert max(np.abs(c).max() for c in sol.cell_coeffs) < 1e-13
    assert discrete_energy(sol) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_poisson_patch(k):
    spec = poisson_polynomial(k + 1)
    mesh = build_structured_mesh("quad", 2, 2)
    sol = solve_problem(mesh, equal_order(k), spec)
    cells, faces = reduce_global(mesh, equal_order(k), spec.exact)
    scale = max(np.abs(faces).max(), 1.0)
    assert np.abs(sol.face_coeffs - faces).max() <= 1e-9 * scale
    assert max(np.abs(a - b).max()
               for a, b in zip(sol.cell_coeffs, cells)) <= 1e-9 * scale
    row = error_norms(sol)
    assert row.err_h1 <= 1e-9


def test_energy_identity_at_solution():
    # a_h(u, u) = l(u) at the solution, so E_h(u) = -l(u)/2
    mesh = build_structured_mesh("tri", 3, 3)
    sol = solve_problem(mesh, equal_order(1), poisson_sin_2d())
    lval = sum(sol.rhs[ci] @ sol.local_dofs(ci) for ci in range(mesh.n_cells))
    assert discrete_energy(sol) == pytest.approx(-0.5 * lval, rel=1e-11)


def test_energy_minimality_random_perturbations():
    mesh = build_structured_mesh("quad", 3, 3)
    sol = solve_problem(mesh, equal_order(1), poisson_sin_2d())
    E0 = discrete_energy(sol)
    rng = np.random.default_rng(5)
    for _ in range(20):
        cc = [c + 0.3 * rng.standard_normal(c.shape) for c in sol.cell_coeffs]
        fc = sol.face_coeffs + 0.3 * rng.standard_normal(sol.face_coeffs.shape)
        fc[mesh.dirichlet_faces] = sol.face_coeffs[mesh.dirichlet_faces]
        assert discrete_energy(sol, cc, fc) >= E0 - 1e-12 * abs(E0)


def test_galerkin_orthogonality():
    mesh = build_structured_mesh("quad", 4, 4)
    sol = solve_problem(mesh, equal_order(2), poisson_sin_2d())
    assert galerkin_residual(sol) <= 1e-10


@pytest.mark.parametrize("family", ["quad", "tri", "hanging"])
def test_flux_identities_after_solve(family):
    mesh = mesh_family(family, 0, base=4)
    sol = solve_problem(mesh, equal_order(1), poisson_sin_2d())
    eq, bal = flux_residuals(sol)
    assert eq <= 1e-10
    assert bal <= 1e-9


def test_neumann_closes_convergence():
    spec0 = poisson_sin_2d()
    g_n = lambda x: -np.pi * np.sin(np.pi * x[:, 1])  # n = (-1, 0) on x = 0
    spec = ProblemSpec(kind="poisson", f=spec0.f, u_dirichlet=spec0.exact,
                       g_neumann=g_n, exact=spec0.exact,
                       exact_grad=spec0.exact_grad, name="poisson-neumann")
    errs, hs = [], []
    for n in (8, 16, 32):
        mesh = build_structured_mesh("quad", n, n, neumann=lambda x: x[0] < 1e-12)
        sol = solve_problem(mesh, equal_order(1), spec)
        row = error_norms(sol)
        errs.append(row.err_h1)
        hs.append(row.h)
    rate = fit_rate(hs, errs)
    assert 1.7 <= rate <= 2.3
    eq, bal = flux_residuals(sol)
    assert eq <= 1e-10 and bal <= 1e-9


def test_error_norms_of_zero_solution_equal_norms_of_u():
    spec0 = poisson_sin_2d()
    spec = ProblemSpec(kind="poisson", f=lambda x: np.zeros(len(x)),
                       u_dirichlet=lambda x: np.zeros(len(x)),
                       exact=spec0.exact, exact_grad=spec0.exact_grad,
                       name="zero-vs-sin")
    sol = solve_problem(build_structured_mesh("quad", 8, 8), equal_order(1), spec)
    row = error_norms(sol)
    assert row.err_l2_rec == pytest.approx(0.5, rel=1e-6)       # ||u|| = 1/2
    assert row.err_h1 == pytest.approx(np.pi / np.sqrt(2), rel=1e-6)


def test_fit_rate_synthetic():
    hs = [0.5, 0.25, 0.125, 0.0625]
    errs = [3 * h ** 2 for h in hs]
    assert fit_rate(hs, errs) == pytest.approx(2.0, abs=1e-12)


def test_convergence_study_validation():
    with pytest.raises(ValueError):
        convergence_study(poisson_sin_2d(), "quad", equal_order(1), levels=1)
    with pytest.raises(ValueError):
        mesh_family("moebius", 0)


def test_study_runs_and_reports():
    rep = convergence_study(poisson_sin_1d(), "interval", equal_order(1),
                            levels=3, base=4)
    assert len(rep.rows) == 3
    assert 1.8 <= rep.rate_h1 <= 2.2
    assert 2.8 <= rep.rate_l2 <= 3.2


def test_oracle_transmission_independent_of_k():
    mesh = build_interval_mesh(0.0, 1.0, 16, grading=1.07)
    from pyhho import assembly as asm

    def condensed_matrix(k):
        spec = ProblemSpec(kind="poisson", f=lambda x: np.ones(len(x)),
                           u_dirichlet=lambda x: np.zeros(len(x)), name="o")
        ops, rhs = build_local(mesh, equal_order(k), spec)
        dm = asm.build_dof_map(mesh, equal_order(k))
        condensed = [asm.condense(ops[i].L, rhs[i], ops[i].ctx.layout, i)
                     for i in range(mesh.n_cells)]
        return asm.assemble(mesh, condensed, dm,
                            dirichlet_values=np.zeros((mesh.n_faces, 1))
                            ).matrix.toarray()

    A1, A2 = condensed_matrix(1), condensed_matrix(2)
    assert np.abs(A1 - A2).max() <= 1e-11 * np.abs(A1).max()


def test_oracle_1d_requires_interval():
    with pytest.raises(ValueError):
        oracle_1d(1, build_structured_mesh("quad", 2, 2))


def test_rigid_body_solution_reproduced():
    spec = rigid_body_problem()
    mesh = build_structured_mesh("quad", 3, 3)
    deg = HhoDegrees(1, 1, rank=2)
    sol = solve_problem(mesh, deg, spec)
    cells, faces = reduce_global(mesh, deg, spec.exact)
    assert np.abs(sol.face_coeffs - faces).max() <= 1e-9
    eq, neu, bal = traction_residuals(sol)
    assert max(eq, neu, bal) <= 1e-9


@pytest.mark.parametrize("k", [1, 2])
def test_elasticity_patch(k):
    spec = elasticity_polynomial(k + 1)
    mesh = build_structured_mesh("tri", 2, 2)
    deg = HhoDegrees(k, k, rank=2)
    sol = solve_problem(mesh, deg, spec)
    cells, faces = reduce_global(mesh, deg, spec.exact)
    scale = max(np.abs(faces).max(), 1.0)
    assert np.abs(sol.face_coeffs - faces).max() <= 1e-9 * scale
    eq, neu, bal = traction_residuals(sol)
    assert max(eq, neu, bal) <= 1e-9


def test_elasticity_neumann_tractions():
    spec0 = elasticity_compressible(mu=1.0, lam=0.5)

    def g_n(x):
        J = spec0.exact_grad(x)
        eps = 0.5 * (J + np.swapaxes(J, 1, 2))
        div = eps[:, 0, 0] + eps[:, 1, 1]
        sig = 2 * spec0.mu * eps
        sig[:, 0, 0] += spec0.lam * div
        sig[:, 1, 1] += spec0.lam * div
        return np.column_stack([-sig[:, 0, 0], -sig[:, 1, 0]])  # n = (-1, 0)

    spec = ProblemSpec(kind="elasticity", f=spec0.f, u_dirichlet=spec0.exact,
                       g_neumann=g_n, mu=spec0.mu, lam=spec0.lam,
                       exact=spec0.exact, exact_grad=spec0.exact_grad,
                       name="elasticity-neumann")
    mesh = build_structured_mesh("tri", 8, 8, neumann=lambda x: x[0] < 1e-12)
    sol = solve_problem(mesh, HhoDegrees(1, 1, rank=2), spec)
    eq, neu, bal = traction_residuals(sol)
    assert eq <= 1e-9
    assert neu <= 1e-9
    assert bal <= 1e-9
    assert error_norms(sol).err_h1 < 0.2


def test_mixed_order_elasticity_runs():
    spec = elasticity_divfree(mu=1.0, lam=10.0)
    mesh = build_structured_mesh("tri", 4, 4)
    sol = solve_problem(mesh, HhoDegrees(1, 2, rank=2), spec)
    row = error_norms(sol)
    assert np.isfinite(row.err_h1) and row.err_h1 < 2.0


def test_divfree_reduction_has_zero_divergence():
    # commuting property: div u = 0 implies Dv(I u) = 0 cellwise, up to the
    # quadrature accuracy of the reduction of the transcendental target
    spec = elasticity_divfree()
    mesh = build_structured_mesh("tri", 4, 4)
    deg = HhoDegrees(1, 1, rank=2)
    ops, _ = build_local(mesh, deg, spec)
    from pyhho.projection import reduce_local
    for ci in range(mesh.n_cells):
        red = reduce_local(mesh, ci, deg, spec.exact, quad_bump=12)
        assert np.abs(ops[ci].Dv @ red).max() < 1e-10


def test_threads_do_not_change_results():
    mesh = build_structured_mesh("quad", 4, 4)
    s1 = solve_problem(mesh, equal_order(1), poisson_sin_2d(), threads=1)
    s2 = solve_problem(mesh, equal_order(1), poisson_sin_2d(), threads=4)
    np.testing.assert_array_equal(s1.face_coeffs, s2.face_coeffs)
    for a, b in zip(s1.cell_coeffs, s2.cell_coeffs):
        np.testing.assert_array_equal(a, b)


def test_get_problem_registry():
    assert get_problem("poisson").kind == "poisson"
    with pytest.raises(ValueError):
        get_problem("heat-equation")
