import numpy as np
import pytest

from helmfov.krylov import cg_spd
from helmfov.multigrid import (PoissonSolver, galerkin_defect, measure_gamma, mg_for,
                               smoother_contraction)


@pytest.fixture(scope="module")
def mg4():
    return mg_for(2, 4)


def k_norm(K, x):
    return float(np.sqrt(np.real(np.vdot(x, K @ x))))


@pytest.mark.parametrize("dim,level", [(2, 4), (3, 3)])
def test_galerkin_and_smoother(dim, level):
    mg = mg_for(dim, level)
    assert galerkin_defect(mg) <= 1e-12
    for c in smoother_contraction(mg):
        assert 0 < c < 2
    assert mg.meta["omega_scale"] == pytest.approx(2 / 3)


def test_single_level_is_exact():
    mg = mg_for(2, 3, coarsest=3)
    assert mg.num_levels == 1
    b = np.random.default_rng(0).standard_normal(mg.n)
    np.testing.assert_allclose(mg.vcycle(b), np.linalg.solve(mg.K[-1].toarray(), b),
                               atol=1e-12)
    g = measure_gamma(mg)
    assert g.gamma0 == 0 and g.gamma1 == 0


def test_symmetry_and_linearity(mg4):
    rng = np.random.default_rng(1)
    for _ in range(5):
        b1, b2 = rng.standard_normal((2, mg4.n)) + 1j * rng.standard_normal((2, mg4.n))
        lhs = np.vdot(b2, mg4.vcycle(b1))
        rhs = np.vdot(mg4.vcycle(b2), b1)
        assert abs(lhs - rhs) <= 1e-11 * max(1.0, abs(lhs))
        np.testing.assert_allclose(mg4.vcycle((2 - 3j) * b1), (2 - 3j) * mg4.vcycle(b1),
                                   atol=1e-12)


def test_cycle_reduction_consistent(mg4):
    K = mg4.K[-1]
    rng = np.random.default_rng(2)
    ratios = []
    for _ in range(10):
        b = rng.standard_normal(mg4.n)
        x, _ = cg_spd(K, None, b, tol_rel=1e-14, max_iter=2000)
        ratios.append(k_norm(K, x - mg4.vcycle(b)) / k_norm(K, x))
    ratios = np.array(ratios)
    assert ratios.max() < 1
    assert ratios.max() <= 2 * ratios.min()


def test_n_cycles(mg4):
    rng = np.random.default_rng(3)
    b = rng.standard_normal(mg4.n)
    np.testing.assert_allclose(mg4.apply_n_cycles(b, 1), mg4.vcycle(b), atol=1e-15)
    x = rng.standard_normal(mg4.n)
    K = mg4.K[-1]
    for N in (1, 3):
        err = x - mg4.apply_n_cycles(K @ x, N)
        np.testing.assert_allclose(-err, mg4.error_propagation(N)(x), atol=1e-11)


def test_geometric_decay_level5():
    mg = mg_for(2, 5)
    K = mg.K[-1]
    b = np.random.default_rng(4).standard_normal(mg.n)
    x = np.linalg.solve(K.toarray(), b)
    Ns = np.arange(1, 9)
    errs = [k_norm(K, x - mg.apply_n_cycles(b, N)) for N in Ns]
    slope = np.polyfit(Ns, np.log(errs), 1)[0]
    assert np.exp(slope) < 1


def test_gamma_levels():
    g = {L: measure_gamma(mg_for(2, L)) for L in range(2, 7)}
    assert all(e.gamma0 < 1 and e.gamma1 < 1 for e in g.values())
    for key in ("gamma0", "gamma1"):
        vals = [getattr(g[L], key) for L in range(3, 7)]
        assert (max(vals) - min(vals)) / max(vals) < 0.2


def test_poisson_solver_paths(mg4):
    b = np.random.default_rng(5).standard_normal(mg4.n) * (1 + 1j)
    dense = PoissonSolver(mg4, method="dense").solve(b)
    pcg = PoissonSolver(mg4, method="pcg")
    np.testing.assert_allclose(pcg.solve(b), dense, rtol=1e-10, atol=1e-12)
    assert pcg.cg_iterations and pcg.cg_iterations[0] < 40
    with pytest.raises(ValueError):
        PoissonSolver(mg4, method="cholmod")
