import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hipod.errors import ConfigError
from hipod.himod import FiberDomain, HiModSolution, ModalBasis, assemble_himod, build_mesh, evaluate_solution, solve_himod
from hipod.noise import NoiseSpec, noise_matrix, perturb_rhs, relative_error, solution_norms, standard_draws
from hipod.problems import PROBLEMS
from hipod.reduction import ParameterGrid, collect_snapshots


def dense_norms(sol, n=400, step=1e-6):
    """Tensor-grid quadrature with n points per direction and central-difference gradients.

    x uses a composite 2-point Gauss rule on n/2 cells (aligned with the elements),
    y the n-point midpoint rule.
    """
    d = sol.mesh.domain
    cells = n // 2
    hc = (d.x_max - d.x_min) / cells
    g = 0.5 + np.array([-0.5, 0.5]) / math.sqrt(3)
    xs = (d.x_min + hc * (np.arange(cells)[:, None] + g[None, :])).ravel()
    ys = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    w = 0.5 * hc / n
    u = evaluate_solution(sol, X, Y)
    ux = (evaluate_solution(sol, X + step, Y) - evaluate_solution(sol, X - step, Y)) / (2 * step)
    uy = (evaluate_solution(sol, X, Y + step) - evaluate_solution(sol, X, Y - step)) / (2 * step)
    l2 = np.sum(u**2) * w
    return math.sqrt(l2), math.sqrt(l2 + np.sum(ux**2 + uy**2) * w)


def full_dirichlet_mesh(n=40):
    return build_mesh(FiberDomain(0, 6, 1), n, True, True)


# ---- noise injection -----------------------------------------------------


def test_zero_level_is_identity():
    rhs = np.random.default_rng(0).normal(size=50)
    out = perturb_rhs(rhs, NoiseSpec(0.0, 3), 7)
    assert out.tobytes() == rhs.tobytes() and out is not rhs
    assert perturb_rhs(rhs, None, 0).tobytes() == rhs.tobytes()


def test_variance_reading():
    out = perturb_rhs(np.zeros(10_000), NoiseSpec(0.25, 5), 0)
    assert 0.225 <= out.var() <= 0.275


def test_std_override():
    spec = NoiseSpec(0.25, 5, std=0.25)
    assert spec.standard_deviation == 0.25
    assert NoiseSpec(0.25).standard_deviation == 0.5
    out = perturb_rhs(np.zeros(10_000), spec, 0)
    assert 0.0625 * 0.9 <= out.var() <= 0.0625 * 1.1


def test_invalid_levels():
    with pytest.raises(ConfigError):
        NoiseSpec(-0.1)
    with pytest.raises(ConfigError):
        NoiseSpec(0.1, std=-1.0)


@given(seed=st.integers(0, 2**63), index=st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_streams_are_value_derived(seed, index):
    a = standard_draws(16, seed, index)
    b = standard_draws(16, seed, index)
    assert a.tobytes() == b.tobytes()
    assert standard_draws(16, seed, index + 1).tobytes() != a.tobytes()


def test_noise_shape_independent_of_level():
    # the same draws are scaled, so realizations at two levels are proportional
    a = perturb_rhs(np.zeros(8), NoiseSpec(0.01, 2), 4)
    b = perturb_rhs(np.zeros(8), NoiseSpec(0.25, 2), 4)
    np.testing.assert_allclose(b, 5 * a, rtol=1e-14)


def test_draws_identical_across_processes():
    code = "from hipod.noise import standard_draws; print(standard_draws(5, 42, 3).tobytes().hex())"
    env_runs = [
        subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True).stdout
        for env in ({"OPENBLAS_NUM_THREADS": "1", "OMP_NUM_THREADS": "1"}, {"OPENBLAS_NUM_THREADS": "4", "OMP_NUM_THREADS": "4"})
    ]
    assert env_runs[0] == env_runs[1] == standard_draws(5, 42, 3).tobytes().hex() + "\n"


# ---- noise matrix --------------------------------------------------------


@pytest.fixture(scope="module")
def small_tc1():
    problem = PROBLEMS["tc1"]()
    mesh = problem.mesh(20)
    basis = ModalBasis(6)
    grid = ParameterGrid.uniform(0.2, 0.8, 5)
    return problem, mesh, basis, grid


def test_noise_matrix_zero_for_equal_inputs(small_tc1):
    U = collect_snapshots(*small_tc1)
    assert not np.any(noise_matrix(U, U))


def test_noise_matrix_matches_per_snapshot_solves(small_tc1):
    problem, mesh, basis, grid = small_tc1
    spec = NoiseSpec(0.1, 9)
    U = collect_snapshots(problem, mesh, basis, grid)
    Ut = collect_snapshots(problem, mesh, basis, grid, spec)
    E = noise_matrix(U, Ut)
    np.testing.assert_array_equal(E, Ut.data - U.data)
    i = 3
    op = assemble_himod(problem, mesh, basis, grid.values[i])
    noisy_rhs = perturb_rhs(op.rhs, spec, i)
    direct = solve_himod(op, noisy_rhs) - solve_himod(op)
    table = HiModSolution.from_flat(direct, mesh, basis).coefficients
    np.testing.assert_allclose(E[:, i * basis.m : (i + 1) * basis.m], table, atol=1e-12)


def test_noise_matrix_grows_with_level(small_tc1):
    U = collect_snapshots(*small_tc1)
    norms = [np.linalg.norm(noise_matrix(U, collect_snapshots(*small_tc1, NoiseSpec(eta, 1)))) for eta in (0.01, 0.05, 0.1, 0.25)]
    assert np.all(np.diff(norms) > 0)


def test_noise_matrix_shape_check():
    with pytest.raises(ConfigError):
        noise_matrix(np.zeros((2, 3)), np.zeros((3, 2)))


# ---- norms ---------------------------------------------------------------


def test_zero_solution_norms():
    mesh = full_dirichlet_mesh(8)
    assert solution_norms(HiModSolution(np.zeros((mesh.n_free, 3)), mesh, ModalBasis(3))) == (0.0, 0.0)


def test_single_mode_sine_norms():
    mesh = full_dirichlet_mesh(40)
    table = np.zeros((mesh.n_free, 1))
    table[:, 0] = np.sin(np.pi * mesh.nodes[mesh.free_nodes] / 6)
    sol = HiModSolution(table, mesh, ModalBasis(1))
    l2, h1 = solution_norms(sol)
    # continuous values, up to the O(h^2) interpolation error
    assert l2 == pytest.approx(math.sqrt(3), rel=1e-3)
    assert h1**2 - l2**2 == pytest.approx((np.pi**2 / 36 + np.pi**2) * 3, rel=3e-3)
    dl2, dh1 = dense_norms(sol)
    assert l2 == pytest.approx(dl2, rel=1e-3) and h1 == pytest.approx(dh1, rel=1e-3)


@pytest.mark.parametrize("seed", range(10))
def test_closed_form_norms_vs_dense_grid(seed):
    rng = np.random.default_rng(seed)
    mesh = build_mesh(FiberDomain(0, 6, 1), 40, True, False)
    table = rng.normal(size=(mesh.n_free, 5)) / np.arange(1, 6)
    sol = HiModSolution(table, mesh, ModalBasis(5))
    l2, h1 = solution_norms(sol)
    dl2, dh1 = dense_norms(sol)
    assert l2 == pytest.approx(dl2, rel=1e-3) and h1 == pytest.approx(dh1, rel=1e-3)


def _random(seed, m=4):
    mesh = build_mesh(FiberDomain(0, 6, 1), 10, True, False)
    return HiModSolution(np.random.default_rng(seed).normal(size=(mesh.n_free, m)), mesh, ModalBasis(m))


# squares of |c| < 1e-150 underflow
@given(seed=st.integers(0, 10_000), c=st.floats(-50, 50).filter(lambda c: c == 0 or abs(c) > 1e-100))
@settings(max_examples=40, deadline=None)
def test_norm_homogeneity(seed, c):
    sol = _random(seed)
    l2, h1 = solution_norms(sol)
    l2c, h1c = solution_norms(sol.with_coefficients(c * sol.coefficients))
    assert l2c == pytest.approx(abs(c) * l2, rel=1e-12, abs=1e-300)
    assert h1c == pytest.approx(abs(c) * h1, rel=1e-12, abs=1e-300)


@given(a=st.integers(0, 10_000), b=st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_norm_triangle_inequality(a, b):
    u, v = _random(a), _random(b)
    w = u.with_coefficients(u.coefficients + v.coefficients)
    for i in (0, 1):
        assert solution_norms(w)[i] <= solution_norms(u)[i] + solution_norms(v)[i] + 1e-12


def test_relative_error_examples():
    ref = _random(1)
    assert relative_error(ref, ref).l2_relative == 0
    err = relative_error(ref.with_coefficients(2 * ref.coefficients), ref)
    assert err.l2_relative == pytest.approx(1.0) and err.h1_relative == pytest.approx(1.0)


def test_relative_error_checks_layout():
    with pytest.raises(ConfigError):
        relative_error(_random(1, m=3), _random(1, m=4))
    zero = _random(1).with_coefficients(np.zeros((10, 4)))
    with pytest.raises(ConfigError):
        relative_error(_random(1), zero)
