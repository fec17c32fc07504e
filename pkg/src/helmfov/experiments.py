"""Experiment engine: parameter sweeps that write CSV tables and SVG figures.

Every experiment returns an :class:`ExperimentResult` holding its rows in
grid order plus an optional table of fits or summaries.  Grid points may
run in a thread pool; rows are gathered in grid order so the CSV output
only depends on the configuration and the seed.
"""

from __future__ import annotations

import csv
import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.sparse.linalg as spla
from scipy import stats

from . import plotting
from .assembly import LossProfile, assemble, assemble_load_constant
from .fov import compute_enclosure, diagnostics, strip_angles
from .identities import laplace_identity, random_vectors, relative_gap, strip_identity
from .krylov import gmres_right
from .multigrid import PoissonSolver, measure_gamma, mg_for
from .precond import HelmholtzSetup, PrecondSpec

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


def _tuple(value, cast):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()] if "," in value else [value]
    elif not isinstance(value, (list, tuple)):
        value = [value]
    return tuple(cast(v) for v in value)


def _sigma_text(value):
    return str(value).strip()


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one sweep.

    ``sigma`` entries are loss specifications as accepted by
    :meth:`LossProfile.parse`, either a constant or ``x0,y0:x1,y1:value``.
    """

    dim: int = 2
    level: tuple = (4,)
    coarse_level: tuple = (2,)
    coarsest: int = 1
    kappa2: tuple = (1.0,)
    sigma: tuple = ("1",)
    precond: tuple = ("laplace",)
    n_cycles: tuple = (1,)
    tol: float = 1e-6
    max_iter: int = 200
    f_value: float = 1.0
    angles: int = 64
    eig_tol: float = 1e-10
    witness_fov: bool = True
    identity_samples: int = 20
    out: str = "out"
    seed: int = 0
    workers: int = 1

    _CASTS = {
        "level": int, "coarse_level": int, "kappa2": float, "sigma": _sigma_text,
        "precond": str, "n_cycles": int,
    }

    def __post_init__(self):
        for name, cast in self._CASTS.items():
            object.__setattr__(self, name, _tuple(getattr(self, name), cast))
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if not self.level or min(self.level) < 1:
            raise ConfigError("levels must be >= 1")
        if self.coarsest < 1:
            raise ConfigError("coarsest level must be >= 1")
        if self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("tol must be positive and max_iter >= 1")
        if self.angles < 8:
            raise ConfigError("use at least 8 FOV angles")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for s in self.sigma:
            LossProfile.parse(s).check_domain(self.dim)
        for p in self.precond:
            PrecondSpec.parse(p)

    @classmethod
    def keys(cls) -> list:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = set(data) - set(cls.keys())
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(data)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def check_levels(self, fine: int):
        for L in self.coarse_level:
            if not 1 <= L <= fine:
                raise ConfigError(f"coarse level {L} outside [1, {fine}]")


@dataclass
class ExperimentResult:
    name: str
    columns: list
    rows: list
    summary_columns: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    figures: dict = field(default_factory=dict)  # file stem -> callable(path)

    def column(self, key) -> list:
        return [r[key] for r in self.rows]

    def select(self, **match) -> list:
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return "nan"
    return str(v)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            missing = [c for c in columns if c not in r]
            if missing:
                raise KeyError(f"row lacks columns {missing}")
            w.writerow([_cell(r[c]) for c in columns])


def write_outputs(result: ExperimentResult, out_dir, figures: bool = True) -> list:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    path = os.path.join(out_dir, f"{result.name}.csv")
    write_csv(path, result.columns, result.rows)
    written.append(path)
    if result.summary:
        path = os.path.join(out_dir, f"{result.name}_summary.csv")
        write_csv(path, result.summary_columns, result.summary)
        written.append(path)
    if figures:
        for stem, draw in result.figures.items():
            path = os.path.join(out_dir, f"{stem}.svg")
            draw(path)
            written.append(path)
    return written


def _run_grid(config: ExperimentConfig, points, work):
    if config.workers == 1 or len(points) <= 1:
        return [work(p) for p in points]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(work, points))


class _SetupCache:
    """One multigrid hierarchy and exact Poisson solver per level, shared by all problems."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self._mg = {}
        self._poisson = {}

    def mg(self, level):
        if level not in self._mg:
            self._mg[level] = mg_for(self.config.dim, level, self.config.coarsest)
        return self._mg[level]

    def poisson(self, level):
        if level not in self._poisson:
            self._poisson[level] = PoissonSolver(self.mg(level))
        return self._poisson[level]

    def setup(self, level, kappa2, sigma_text):
        mesh = self.mg(level).mesh.levels[-1]
        problem = assemble(mesh, kappa2, LossProfile.parse(sigma_text))
        return HelmholtzSetup(problem, mg=self.mg(level), poisson=self.poisson(level))

    def warm(self, levels):
        for L in levels:
            self.poisson(L)


def _linear_fit(x, y):
    if len(x) < 2 or np.ptp(x) == 0:
        return float("nan"), float("nan"), float("nan")
    fit = stats.linregress(x, y)
    return float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2)


def _constant_sigma(text) -> float:
    loss = LossProfile.parse(text)
    if loss.kind != "constant" or loss.value <= 0:
        raise ConfigError(f"this experiment needs a constant sigma > 0, got {text!r}")
    return loss.value


def mass_extremes(M) -> tuple:
    """Smallest and largest eigenvalue of the (real SPD) mass matrix."""
    n = M.shape[0]
    if n <= 2000:
        ev = np.linalg.eigvalsh(M.toarray())
        return float(ev[0]), float(ev[-1])
    hi = spla.eigsh(M, k=1, which="LA", return_eigenvectors=False)[0]
    lo = spla.eigsh(M, k=1, sigma=0, which="LM", return_eigenvectors=False)[0]
    return float(lo), float(hi)


# ---------------------------------------------------------------- Laplace FOV

LAPLACE_FOV_COLUMNS = [
    "dim", "level", "h", "kappa2", "sigma", "n_angles", "flagged",
    "re_min", "re_max", "im_min", "im_max",
    "witness_re_min", "witness_re_max", "witness_im_min", "witness_im_max",
    "strip_min", "strip_max", "mass_min", "mass_max",
    "scaled_re_min", "scaled_re_max", "scaled_im_min", "scaled_im_max",
    "scaled_strip_min", "scaled_strip_max", "scaled_mass_min", "scaled_mass_max",
    "identity_gap", "strip_gap", "im_nonneg", "re_bounded",
]


def exp_laplace_fov(config: ExperimentConfig) -> ExperimentResult:
    """FOV of A K^{-1} M per (level, kappa^2, sigma) with the rectangle and strip checks."""
    cache = _SetupCache(config)
    sigmas = [_constant_sigma(s) for s in config.sigma]
    points = list(itertools.product(config.level, config.kappa2, config.sigma))
    cache.warm(config.level)
    d = config.dim

    def work(point):
        level, kappa2, stext = point
        sigma = _constant_sigma(stext)
        setup = cache.setup(level, kappa2, stext)
        h = setup.problem.mesh.h
        B = setup.preconditioned(setup.exact_laplace())
        enc = compute_enclosure(B, n_angles=config.angles, eig_tol=config.eig_tol,
                                extra_angles=strip_angles(kappa2, sigma), seed=config.seed)
        diag = diagnostics(enc, h, d, kappa2, sigma)
        mmin, mmax = mass_extremes(setup.M)
        xs = random_vectors(setup.n, config.identity_samples, seed=config.seed + level)
        id_gap = max(relative_gap(*laplace_identity(setup, x)) for x in xs)
        st_gap = max(relative_gap(*strip_identity(setup, x)) for x in xs)
        s = h**d
        row = dict(
            dim=d, level=level, h=h, kappa2=kappa2, sigma=sigma,
            n_angles=len(enc.angles), flagged=len(enc.flagged),
            re_min=diag.re_min, re_max=diag.re_max, im_min=diag.im_min, im_max=diag.im_max,
            witness_re_min=diag.witness_re_min, witness_re_max=diag.witness_re_max,
            witness_im_min=diag.witness_im_min, witness_im_max=diag.witness_im_max,
            strip_min=diag.strip_min, strip_max=diag.strip_max, mass_min=mmin, mass_max=mmax,
            scaled_re_min=diag.re_min / s, scaled_re_max=diag.re_max / s,
            scaled_im_min=diag.im_min / s, scaled_im_max=diag.im_max / s,
            scaled_strip_min=diag.strip_min / s, scaled_strip_max=diag.strip_max / s,
            scaled_mass_min=mmin / s, scaled_mass_max=mmax / s,
            identity_gap=id_gap, strip_gap=st_gap,
            im_nonneg=diag.witness_im_min >= -1e-10,
            re_bounded=diag.witness_re_max <= mmax + 1e-10,
        )
        return row, enc

    out = _run_grid(config, points, work)
    rows = [r for r, _ in out]
    encs = {p: e for p, (_, e) in zip(points, out)}

    figures = {}
    for kappa2, stext, sigma in ((k, st, sg) for k in config.kappa2
                                 for st, sg in zip(config.sigma, sigmas)):
        def draw(path, kappa2=kappa2, stext=stext, sigma=sigma):
            sets, intercepts = [], []
            for level in config.level:
                enc = encs[(level, kappa2, stext)]
                s = (2.0 ** -level) ** d
                sets.append((f"level {level}", enc.polygon / s, enc.witnesses / s))
            finest = [r for r in rows if r["level"] == max(config.level)
                      and r["kappa2"] == kappa2 and r["sigma"] == sigma][0]
            intercepts = [finest["scaled_mass_min"], finest["scaled_mass_max"]]
            return plotting.fov_sets(
                path, sets, title=f"A K^-1 M, kappa^2={kappa2:g}, sigma={sigma:g}",
                strip_slope=kappa2 / sigma, strip_intercepts=intercepts)
        figures[f"laplace_fov_k{kappa2:g}_s{sigma:g}"] = draw
    return ExperimentResult("laplace_fov", LAPLACE_FOV_COLUMNS, rows, figures=figures)


# ---------------------------------------------------------------- GMRES sweep

GMRES_COLUMNS = [
    "dim", "level", "kappa2", "sigma", "precond", "tol", "max_iter", "iterations",
    "converged", "relative_residual", "true_relative_residual", "monotone",
]
GMRES_FIT_COLUMNS = ["dim", "level", "sigma", "precond", "points", "slope", "intercept", "r2"]


def solve_point(setup: HelmholtzSetup, spec: PrecondSpec, tol: float, max_iter: int,
                f_value: float = 1.0):
    """Right-preconditioned GMRES for the constant load; returns (x, report)."""
    b = assemble_load_constant(setup.problem.mesh, f_value).astype(complex)
    B = setup.preconditioner(spec)
    return gmres_right(setup.system_operator(), B, b, tol_rel=tol, max_iter=max_iter,
                       params=dict(precond=spec.label(), **setup.problem.params()))


def exp_gmres_sweep(config: ExperimentConfig) -> ExperimentResult:
    """Iteration counts versus kappa^2 per (level, sigma, preconditioner).

    A run that does not converge within ``max_iter`` reports
    ``iterations = max_iter`` and ``converged = 0``.
    """
    cache = _SetupCache(config)
    cache.warm(config.level)
    points = list(itertools.product(config.level, config.sigma, config.precond, config.kappa2))

    def work(point):
        level, stext, ptext, kappa2 = point
        spec = PrecondSpec.parse(ptext)
        if spec.kind == "two_level":
            config.check_levels(level)
        setup = cache.setup(level, kappa2, stext)
        _, rep = solve_point(setup, spec, config.tol, config.max_iter, config.f_value)
        hist = np.asarray(rep.residual_history)
        r0 = hist[0] if hist[0] > 0 else 1.0
        return dict(
            dim=config.dim, level=level, kappa2=kappa2, sigma=stext, precond=spec.label(),
            tol=config.tol, max_iter=config.max_iter,
            iterations=rep.iterations if rep.converged else config.max_iter,
            converged=rep.converged, relative_residual=hist[-1] / r0,
            true_relative_residual=rep.true_final_residual / r0,
            monotone=bool(np.all(np.diff(hist) <= 0)),
        )

    rows = _run_grid(config, points, work)
    summary = []
    series = {}
    for level, stext, ptext in itertools.product(config.level, config.sigma, config.precond):
        label = PrecondSpec.parse(ptext).label()
        sel = [r for r in rows if r["level"] == level and r["sigma"] == stext
               and r["precond"] == label]
        ok = [r for r in sel if r["converged"]]
        slope, intercept, r2 = _linear_fit([r["kappa2"] for r in ok],
                                           [r["iterations"] for r in ok])
        summary.append(dict(dim=config.dim, level=level, sigma=stext, precond=label,
                            points=len(ok), slope=slope, intercept=intercept, r2=r2))
        series[f"L{level} sigma={stext} {label}"] = (
            [r["kappa2"] for r in sel], [r["iterations"] for r in sel])

    figures = {"gmres_sweep": lambda path: plotting.lines(
        path, series, "kappa^2", "GMRES iterations", title="iterations for f = 1")}
    return ExperimentResult("gmres_sweep", GMRES_COLUMNS, rows,
                            GMRES_FIT_COLUMNS, summary, figures)


# ------------------------------------------------------- perturbation decay

PERTURBATION_COLUMNS = [
    "dim", "level", "kappa2", "sigma", "N", "re_min", "re_max", "im_min", "im_max",
    "radius", "scaled_radius", "flagged", "im_residue",
]
PERTURBATION_FIT_COLUMNS = [
    "dim", "level", "kappa2", "sigma", "points", "slope", "r2", "rate", "gamma0", "gamma1",
]


def exp_perturbation_decay(config: ExperimentConfig) -> ExperimentResult:
    """Enclosure of A (K~^{-N} - K^{-1}) M versus the number of V-cycles N.

    ``radius`` is the largest modulus of the enclosing polygon;
    ``im_residue`` is max |Im x* M (K~^{-N} - K^{-1}) M x| / x* x over
    random x, zero for a symmetric V-cycle.
    """
    cache = _SetupCache(config)
    cache.warm(config.level)
    d = config.dim
    points = list(itertools.product(config.level, config.kappa2, config.sigma, config.n_cycles))

    def work(point):
        level, kappa2, stext, N = point
        sigma = _constant_sigma(stext)
        setup = cache.setup(level, kappa2, stext)
        enc = compute_enclosure(setup.perturbation(N), n_angles=config.angles,
                                eig_tol=config.eig_tol, seed=config.seed)
        poly = enc.polygon
        radius = float(np.abs(poly).max(initial=0.0))
        xs = random_vectors(setup.n, config.identity_samples, seed=config.seed + N)
        residue = max(abs(setup.mass_sandwich(x, N).imag) / np.vdot(x, x).real for x in xs)
        return dict(dim=d, level=level, kappa2=kappa2, sigma=sigma, N=N,
                    re_min=float(poly.real.min()), re_max=float(poly.real.max()),
                    im_min=float(poly.imag.min()), im_max=float(poly.imag.max()),
                    radius=radius, scaled_radius=radius / setup.problem.mesh.h**d,
                    flagged=len(enc.flagged), im_residue=float(residue))

    rows = _run_grid(config, points, work)
    summary, series = [], {}
    for level, kappa2, stext in itertools.product(config.level, config.kappa2, config.sigma):
        sigma = _constant_sigma(stext)
        sel = [r for r in rows if r["level"] == level and r["kappa2"] == kappa2
               and r["sigma"] == sigma]
        good = [r for r in sel if r["radius"] > 0]
        slope, _, r2 = _linear_fit([r["N"] for r in good],
                                   [math.log(r["radius"]) for r in good])
        gamma = measure_gamma(cache.mg(level), seed=config.seed)
        summary.append(dict(dim=d, level=level, kappa2=kappa2, sigma=sigma, points=len(good),
                            slope=slope, r2=r2, rate=math.exp(slope) if slope == slope else slope,
                            gamma0=gamma.gamma0, gamma1=gamma.gamma1))
        series[f"L{level} kappa^2={kappa2:g} sigma={sigma:g}"] = (
            [r["N"] for r in sel], [r["scaled_radius"] for r in sel])

    figures = {"perturbation_decay": lambda path: plotting.lines(
        path, series, "V-cycles N", "scaled enclosure radius", logy=True,
        title="perturbation set A(K~^-N - K^-1)M")}
    return ExperimentResult("perturbation_decay", PERTURBATION_COLUMNS, rows,
                            PERTURBATION_FIT_COLUMNS, summary, figures)


# ------------------------------------------------------- two-level stagnation

TWO_LEVEL_COLUMNS = [
    "dim", "level", "coarse_level", "kappa2", "kappa_over_pi", "sigma", "iterations",
    "converged", "witness_re_min",
]
TWO_LEVEL_SUMMARY_COLUMNS = [
    "dim", "level", "kappa2", "sigma", "counts", "non_increasing", "last_two_ratio",
    "stagnation_level", "first_positive_level",
]


def stagnation_level(coarse_levels, counts, rel: float = 0.15):
    """First coarse level from which every count is within ``rel`` of the final count."""
    final = counts[-1]
    for i, L in enumerate(coarse_levels):
        if all(c <= (1 + rel) * final for c in counts[i:]):
            return L
    return coarse_levels[-1]


def exp_two_level_stagnation(config: ExperimentConfig) -> ExperimentResult:
    """GMRES iterations of the two-level preconditioner versus the coarse level.

    The fine level is ``config.level[0]``.  With ``witness_fov`` the
    smallest real part over the FOV witnesses of A B2 is recorded too;
    otherwise that column holds nan.
    """
    fine = config.level[0]
    config.check_levels(fine)
    cache = _SetupCache(config)
    cache.warm([fine])
    d = config.dim
    points = list(itertools.product(config.kappa2, config.sigma, config.coarse_level))

    def work(point):
        kappa2, stext, L = point
        setup = cache.setup(fine, kappa2, stext)
        tl = setup.two_level(L)
        b = assemble_load_constant(setup.problem.mesh, config.f_value).astype(complex)
        _, rep = gmres_right(setup.system_operator(), tl.operator(), b,
                             tol_rel=config.tol, max_iter=config.max_iter)
        wmin = float("nan")
        if config.witness_fov:
            enc = compute_enclosure(setup.preconditioned(tl.operator()),
                                    n_angles=config.angles, eig_tol=config.eig_tol,
                                    seed=config.seed)
            wmin = float(enc.witnesses.real.min())
        return dict(dim=d, level=fine, coarse_level=L, kappa2=kappa2,
                    kappa_over_pi=math.sqrt(kappa2) / math.pi, sigma=stext,
                    iterations=rep.iterations if rep.converged else config.max_iter,
                    converged=rep.converged, witness_re_min=wmin)

    rows = _run_grid(config, points, work)
    summary, series = [], {}
    levels = list(config.coarse_level)
    for kappa2, stext in itertools.product(config.kappa2, config.sigma):
        sel = [r for r in rows if r["kappa2"] == kappa2 and r["sigma"] == stext]
        counts = [r["iterations"] for r in sel]
        positive = [r["coarse_level"] for r in sel if r["witness_re_min"] > 0]
        summary.append(dict(
            dim=d, level=fine, kappa2=kappa2, sigma=stext,
            counts=" ".join(str(c) for c in counts),
            non_increasing=all(b <= a for a, b in zip(counts, counts[1:])),
            last_two_ratio=(counts[-2] / counts[-1]) if len(counts) > 1 else 1.0,
            stagnation_level=stagnation_level(levels, counts),
            first_positive_level=positive[0] if positive else -1))
        series[f"kappa={math.sqrt(kappa2) / math.pi:.3g} pi sigma={stext}"] = (levels, counts)

    figures = {"two_level": lambda path: plotting.lines(
        path, series, "coarse level", "GMRES iterations",
        title=f"two-level preconditioner, fine level {fine}")}
    return ExperimentResult("two_level", TWO_LEVEL_COLUMNS, rows,
                            TWO_LEVEL_SUMMARY_COLUMNS, summary, figures)


# ------------------------------------------------------- scalar stability

@dataclass
class StabilityReport:
    kappa2: float
    sigma: float
    x_max: float
    grid_points: int
    bound: float
    grid_max: float
    argmax: float
    holds: bool

    @property
    def ratio(self) -> float:
        return self.grid_max / self.bound

    def as_row(self) -> dict:
        row = dict(self.__dict__)
        row["ratio"] = self.ratio
        return row


def stability_bound(kappa2: float, sigma: float) -> float:
    return math.sqrt(kappa2**2 + sigma**2) / sigma


def check_stability_scalar(kappa2: float, sigma: float, grid_points: int = 10**4,
                           x_max: float | None = None) -> StabilityReport:
    """Grid maximum of x / |x - kappa^2 + i sigma| over (0, x_max] against its bound."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if grid_points < 10**4:
        raise ValueError("use at least 10^4 grid points")
    if x_max is None:
        x_max = 10.0 * max(kappa2, 1.0)
    x = np.linspace(x_max / grid_points, x_max, grid_points)
    vals = x / np.abs(x - kappa2 + 1j * sigma)
    k = int(np.argmax(vals))
    bound = stability_bound(kappa2, sigma)
    return StabilityReport(kappa2, sigma, x_max, grid_points, bound, float(vals[k]),
                           float(x[k]), bool(vals[k] <= bound * (1 + 1e-14)))


EXPERIMENTS = {
    "laplace-fov": exp_laplace_fov,
    "gmres-sweep": exp_gmres_sweep,
    "perturbation-decay": exp_perturbation_decay,
    "two-level": exp_two_level_stagnation,
}


def run_experiment(name: str, config: ExperimentConfig, out_dir=None, figures=True):
    try:
        fn = EXPERIMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    result = fn(config)
    files = write_outputs(result, out_dir or config.out, figures=figures)
    return result, files
