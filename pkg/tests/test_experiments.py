import math

import numpy as np
import pytest

from helmfov.experiments import (ConfigError, ExperimentConfig, check_stability_scalar,
                                 exp_gmres_sweep, exp_laplace_fov, exp_perturbation_decay,
                                 exp_two_level_stagnation, run_experiment, stability_bound,
                                 stagnation_level, write_csv)

FOUR_PI2 = (4 * math.pi) ** 2
SIX_PI2 = (6 * math.pi) ** 2
TEN_PI2 = (10 * math.pi) ** 2


@pytest.fixture(scope="module")
def laplace_rows():
    cfg = ExperimentConfig(level=(1, 2, 3), kappa2=(1.0, 10.0, 50.0), sigma=("1", "5"),
                           identity_samples=5)
    return exp_laplace_fov(cfg).rows


def test_laplace_fov_level1_point(laplace_rows):
    r = [r for r in laplace_rows if r["level"] == 1 and r["kappa2"] == 1.0
         and r["sigma"] == 1.0][0]
    z = (3.875 + 0.125j) * 0.03125
    assert r["re_min"] == pytest.approx(z.real, abs=1e-9)
    assert r["re_max"] == pytest.approx(z.real, abs=1e-9)
    assert r["im_max"] == pytest.approx(z.imag, abs=1e-9)
    assert r["strip_min"] == pytest.approx(0.125, rel=1e-12)


def test_laplace_fov_strip_and_signs(laplace_rows):
    for level in (1, 2, 3):
        for sigma in (1.0, 5.0):
            rows = [r for r in laplace_rows if r["level"] == level and r["sigma"] == sigma]
            for key in ("strip_min", "strip_max"):
                vals = [r[key] for r in rows]
                assert max(vals) - min(vals) <= 1e-6 * max(abs(v) for v in vals)
    for r in laplace_rows:
        assert r["im_min"] >= -1e-10 and r["witness_im_min"] >= -1e-10
        assert r["im_nonneg"] and r["re_bounded"]
        assert r["identity_gap"] <= 1e-9 and r["strip_gap"] <= 1e-9
        # witness strip extremes reach the mass-spectrum extremes
        assert r["strip_min"] == pytest.approx(r["mass_min"], rel=1e-6)
        assert r["strip_max"] == pytest.approx(r["mass_max"], rel=1e-6)


def test_laplace_fov_rejects_nonpositive_sigma():
    with pytest.raises(ConfigError):
        exp_laplace_fov(ExperimentConfig(level=(2,), sigma=("0",)))


@pytest.mark.xfail(strict=True, reason="11 iterations on this mesh family; larger sigma "
                   "moves the FOV up and needs more, not fewer")
def test_gmres_no_wave_large_loss_level4():
    cfg = ExperimentConfig(level=(4,), kappa2=(0.0,), sigma=("5", "50"))
    assert max(exp_gmres_sweep(cfg).column("iterations")) <= 10


def test_gmres_two_level_no_wave_no_loss():
    cfg = ExperimentConfig(level=(5,), kappa2=(0.0,), sigma=("0",),
                           precond=("twolevel:2", "twolevel:4"))
    res = exp_gmres_sweep(cfg)
    assert all(r["converged"] and r["iterations"] <= 30 for r in res.rows)


def test_gmres_sweep_rows_and_fit():
    cfg = ExperimentConfig(level=(4,), kappa2=(10.0, 50.0, 100.0, 200.0), sigma=("5",),
                           precond=("laplace", "mg:2"), max_iter=15)
    res = exp_gmres_sweep(cfg)
    assert len(res.rows) == 8 and all(r["monotone"] for r in res.rows)
    for r in res.rows:
        if not r["converged"]:
            assert r["iterations"] == 15 and r["relative_residual"] > 1e-6
        else:
            assert r["true_relative_residual"] <= 1.01e-6
    fits = {s["precond"]: s for s in res.summary}
    assert set(fits) == {"laplace", "mg:2"}
    assert fits["laplace"]["points"] >= 2 and fits["laplace"]["slope"] > 0


@pytest.fixture(scope="module")
def decay():
    cfg = ExperimentConfig(level=(4,), kappa2=(1000.0,), sigma=("5",),
                           n_cycles=(1, 2, 3, 4, 6, 8), angles=32, identity_samples=5)
    return exp_perturbation_decay(cfg)


def test_perturbation_decay_rate(decay):
    fit = decay.summary[0]
    assert fit["slope"] < 0 and fit["r2"] >= 0.9
    assert abs(fit["rate"] / fit["gamma1"] - 1) <= 0.3
    assert all(r["im_residue"] < 1e-10 for r in decay.rows)


@pytest.mark.xfail(strict=True, reason="per-cycle reduction is about 0.6-0.7 here, so "
                   "twelve cycles shrink the radius by ~1e-3, not 1e-8")
def test_perturbation_radius_after_twelve_cycles():
    cfg = ExperimentConfig(level=(4,), kappa2=(1000.0,), sigma=("5",), n_cycles=(12,),
                           angles=16, identity_samples=1)
    r = exp_perturbation_decay(cfg).rows[0]
    assert r["scaled_radius"] < 1e-8


@pytest.mark.xfail(strict=True, reason="fine level 4 in 3D is pre-asymptotic: counts "
                   "14, 15, 12 for coarse levels 1-3")
def test_two_level_3d_trend():
    cfg = ExperimentConfig(dim=3, level=(4,), coarse_level=(1, 2, 3), kappa2=(FOUR_PI2,),
                           sigma=("7",), witness_fov=False)
    assert exp_two_level_stagnation(cfg).summary[0]["non_increasing"]


@pytest.mark.xfail(strict=True, reason="A B2 = M exactly, but GMRES on the mass matrix "
                   "(condition number near 4) still needs about ten steps to reach 1e-6")
def test_two_level_coarse_equals_fine_three_steps():
    cfg = ExperimentConfig(level=(5,), coarse_level=(5,), kappa2=(FOUR_PI2,), sigma=("7",),
                           witness_fov=False)
    assert exp_two_level_stagnation(cfg).rows[0]["iterations"] <= 3


def test_two_level_coarse_equals_fine_is_mass_solve():
    cfg = ExperimentConfig(level=(5,), coarse_level=(5,), kappa2=(FOUR_PI2, 0.0),
                           sigma=("7",), witness_fov=False)
    counts = exp_two_level_stagnation(cfg).column("iterations")
    assert counts[0] == counts[1]  # the operator is M regardless of kappa


@pytest.mark.slow
def test_two_level_witness_trend_2d():
    cfg = ExperimentConfig(level=(5,), coarse_level=(2, 3, 4, 5),
                           kappa2=(FOUR_PI2, SIX_PI2, TEN_PI2), sigma=("7",), angles=24)
    res = exp_two_level_stagnation(cfg)
    first = [s["first_positive_level"] for s in res.summary]
    first = [math.inf if f < 0 else f for f in first]
    assert first[0] <= first[1] <= first[2]
    assert first[0] < math.inf


def test_stagnation_level():
    assert stagnation_level([2, 3, 4, 5, 6], [15, 12, 10, 10, 9]) == 4
    assert stagnation_level([1, 2], [5, 5]) == 1


def test_stability_examples():
    r = check_stability_scalar(0.0, 1.0)
    assert r.bound == 1.0 and r.grid_max < 1 and r.grid_max > 0.99
    r = check_stability_scalar(100.0, 5.0)
    assert r.bound == pytest.approx(math.sqrt(1e4 + 25) / 5)
    assert r.holds and r.grid_max >= 0.95 * r.bound
    assert stability_bound(1e6, 2.0) * 2.0 / 1e6 == pytest.approx(1.0, rel=1e-10)
    with pytest.raises(ValueError):
        check_stability_scalar(1.0, 0.0)
    with pytest.raises(ValueError):
        check_stability_scalar(1.0, 1.0, grid_points=100)


def test_config_parsing(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('dim = 2\nlevel = [3, 4]\nkappa2 = "1,10"\nsigma = [1, "0.25,0.25:0.75,0.75:2"]\n'
                    'precond = ["laplace", "mg:3"]\nseed = 4\n')
    cfg = ExperimentConfig.load(path, seed=9, tol=None)
    assert cfg.level == (3, 4) and cfg.kappa2 == (1.0, 10.0)
    assert cfg.sigma == ("1", "0.25,0.25:0.75,0.75:2") and cfg.seed == 9
    path.write_text("nonsense = 1\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)
    for bad in (dict(dim=4), dict(tol=0.0), dict(angles=3), dict(precond="ilu"),
                dict(level=0)):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)


def test_deterministic_output(tmp_path):
    kw = dict(level=(3,), kappa2=(1.0, 30.0), sigma=("2",), precond=("laplace", "mg:1"),
              angles=16, identity_samples=3, seed=3)
    outs = []
    for i, workers in enumerate((1, 1, 2)):
        cfg = ExperimentConfig(out=str(tmp_path / f"r{i}"), workers=workers, **kw)
        for name in ("laplace-fov", "gmres-sweep"):
            run_experiment(name, cfg, figures=False)
        outs.append([(tmp_path / f"r{i}" / f).read_bytes()
                     for f in ("laplace_fov.csv", "gmres_sweep.csv", "gmres_sweep_summary.csv")])
    assert outs[0] == outs[1] == outs[2]


def test_outputs_and_figures(tmp_path):
    cfg = ExperimentConfig(level=(2, 3), kappa2=(5.0,), sigma=("1",), angles=16,
                           identity_samples=2, out=str(tmp_path))
    _, files = run_experiment("laplace-fov", cfg)
    svg = [f for f in files if f.endswith(".svg")]
    assert svg and open(svg[0]).read().lstrip().startswith("<?xml")
    header = (tmp_path / "laplace_fov.csv").read_text().splitlines()[0].split(",")
    assert "scaled_strip_min" in header and "identity_gap" in header
    with pytest.raises(ConfigError):
        run_experiment("nope", cfg)


def test_write_csv_requires_all_columns(tmp_path):
    with pytest.raises(KeyError):
        write_csv(tmp_path / "x.csv", ["a", "b"], [{"a": 1}])
    write_csv(tmp_path / "y.csv", ["a", "b"], [{"a": True, "b": np.float64(0.1)}])
    assert (tmp_path / "y.csv").read_text() == "a,b\n1,0.1\n"
