"""Monte-Carlo experiments, configuration files and measured-data ingestion.

Every trial draws its randomness from ``SeedSequence([seed, point, trial])``
so any row of any table can be regenerated on its own, independent of
execution order.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy
import scipy.stats

from . import __version__
from .errors import ConfigError, ConstructionError, DomainError, GridlessDoaError
from .geometry import (ArrayGeometry, Scene, equivalent_ula, load_geometry, make_perturbed_nla,
                       mimo_virtual_array, noiseless_signal, noise_std_for_snr, synthesize_snapshot,
                       wavelength_from_frequency)
from .io import read_complex_column, append_jsonl
from .manifold import load_sampling_matrix, sampling_matrix
from .metrics import TrialResult, crlb_single_snapshot, resolution, rmse, success_rate
from .rooting import DoaEstimate, estimate_fnlanm
from .solvers import (ApgConfig, apg_solve, dbf_spectrum, default_ista_gamma, grid_size,
                      ista_solve, spectrum_peaks)

log = logging.getLogger(__name__)

ALGORITHMS = ("dbf", "ista", "fnlanm")
KINDS = ("ld_sweep", "snr_sweep", "element_sweep", "aperture_sweep", "separation_sweep",
         "scenario", "single", "dbf_resolution", "bench")
METRIC_COLUMNS = ("sweep_var", "sweep_value", "algorithm", "rmse_deg", "sr", "n_trials", "seed_base")
RUNTIME_COLUMNS = ("sweep_var", "sweep_value", "algorithm", "mean_runtime_s", "n_trials")


# ---------------------------------------------------------------------------
# configuration

def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one experiment.

    Defaults reproduce the simulation tables: 77.5 GHz carrier, 16
    elements over 29.0 mm, LD 0.3, SNR 20 dB, super-resolution factor 4.
    Angles are degrees here and radians everywhere else.
    """

    kind: str = "single"
    frequency_hz: float = 77.5e9
    n_elements: int = 16
    aperture_m: float = 29.0e-3
    ld: float = 0.3
    snr_db: float = 20.0
    eta: float = 4.0
    n_trials: int = 100
    seed: int = 0
    algorithms: tuple[str, ...] = ALGORITHMS
    angle_range_deg: tuple[float, float] = (18.0, 162.0)
    # sweep grids
    ld_grid: tuple[float, ...] = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
    ld_snr_db: float = 30.0
    snr_grid_db: tuple[float, ...] = tuple(float(s) for s in range(0, 31, 2))
    alpha_grid: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0)
    aperture_grid_wavelengths: tuple[float, ...] = (2.0, 4.0, 6.0, 8.0, 10.0)
    separation_grid_deg: tuple[float, ...] = ()
    separation_snrs_db: tuple[float, ...] = (0.0, 10.0, 20.0, 30.0)
    theta1_deg: float = 90.0
    offgrid_fraction: float = 0.5
    reflectivity_phase: str = "random"
    ula_assumed: bool = True
    # scenario
    ranges_m: tuple[float, ...] = tuple(float(r) for r in range(10, 51, 2))
    lateral_separation_m: float = 3.0
    # solver block
    step_size: float | None = None
    shrink_threshold: float | None = None
    epsilon: float | None = None
    max_iter: int = 2000
    gamma: float | None = None
    dbf_grid: int = 3600
    known_noise: bool = True
    # bench
    bench_orders: tuple[int, ...] = (8, 16, 32, 64, 128)
    bench_iterations: int = 20
    bench_repeats: int = 3
    # bookkeeping
    threads: int | None = None
    output_dir: str = "results"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        for name in ("frequency_hz", "aperture_m", "eta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_elements < 2:
            raise ConfigError("n_elements must be at least 2")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1")
        if self.ld < 0:
            raise ConfigError("ld must be non-negative")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ConfigError(f"unknown algorithms {sorted(unknown)}; expected a subset of {ALGORITHMS}")
        if self.reflectivity_phase not in ("random", "zero"):
            raise ConfigError("reflectivity_phase must be 'random' or 'zero'")
        lo, hi = self.angle_range_deg
        if not 0 < lo < hi < 180:
            raise ConfigError("angle_range_deg must satisfy 0 < lo < hi < 180")

    @property
    def wavelength(self) -> float:
        return wavelength_from_frequency(self.frequency_hz)

    def apg_config(self, noise_std: float | None = None) -> ApgConfig:
        return ApgConfig(step_size=self.step_size, shrink_threshold=self.shrink_threshold,
                         tolerance=self.epsilon, max_iterations=self.max_iter,
                         noise_std=noise_std if self.known_noise else None)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()


_SOLVER_KEYS = {"step_size": "step_size", "shrink_threshold": "shrink_threshold",
                "epsilon": "epsilon", "max_iter": "max_iter", "grid_factor": "eta",
                "gamma": "gamma"}


def _convert(name: str, text: str):
    f = {f.name: f for f in dataclasses.fields(ExperimentConfig)}[name]
    kind = str(f.type)
    text = text.strip()
    try:
        if kind.startswith("tuple") and not text:
            return ()
        if text.lower() in ("auto", "none", ""):
            if "None" in kind:
                return None
            raise ConfigError(f"{name} cannot be 'auto'")
        if kind.startswith("tuple[str"):
            return tuple(v.strip() for v in text.split(",") if v.strip())
        if kind.startswith("tuple[int"):
            return tuple(int(v) for v in _floats(text))
        if kind.startswith("tuple[float"):
            return _floats(text)
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(float(text)) if float(text).is_integer() else int(text)
        if kind.startswith("float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def load_config(path, kind: str | None = None) -> ExperimentConfig:
    """Read an INI-style config.

    Keys come from ``[experiment]``, then ``[solver]`` (``step_size``,
    ``shrink_threshold``, ``epsilon``, ``max_iter``, ``grid_factor``,
    ``gamma``), then a section named after the experiment kind, later
    sections overriding earlier ones.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values: dict = {}

    def take(section: str, mapping=None):
        if not parser.has_section(section):
            return
        for key, text in parser.items(section):
            target = (mapping or {}).get(key, key)
            if target not in names:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            values[target] = _convert(target, text)

    take("experiment")
    take("solver", _SOLVER_KEYS)
    chosen = kind or values.get("kind", "single")
    take(chosen)
    values["kind"] = chosen
    return ExperimentConfig(**values)


def save_config(path, config: ExperimentConfig) -> None:
    parser = configparser.ConfigParser()
    section = {}
    for key, value in config.to_dict().items():
        if isinstance(value, (tuple, list)):
            text = ", ".join(str(v) for v in value)
        elif value is None:
            text = "auto"
        else:
            text = str(value)
        section[key] = text
    parser["experiment"] = section
    with open(path, "w") as fh:
        parser.write(fh)


# ---------------------------------------------------------------------------
# algorithms

@dataclass
class AlgorithmOutput:
    angles: np.ndarray
    runtime: float
    estimate: DoaEstimate | None = None


def _trial_rng(seed: int, point: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, point, trial]))


def run_algorithm(name: str, snapshot, geometry: ArrayGeometry, k: int, config: ExperimentConfig,
                  noise_std: float | None = None, model_geometry: ArrayGeometry | None = None
                  ) -> AlgorithmOutput:
    """Run one estimator and time it.

    ``model_geometry`` is the geometry the estimator believes in; it
    defaults to the true one and differs for the ULA-assumed variant.
    """
    model = model_geometry or geometry
    t0 = time.perf_counter()
    if name == "fnlanm":
        est = estimate_fnlanm(snapshot, model, k, config.apg_config(noise_std))
        return AlgorithmOutput(est.angles, time.perf_counter() - t0, est)
    _, rho_s = resolution(model, config.eta)
    if name == "dbf":
        spec = dbf_spectrum(snapshot, model, config.dbf_grid)
        angles = spectrum_peaks(spec, k)
    elif name == "ista":
        m = grid_size(rho_s)
        gamma = config.gamma or default_ista_gamma(
            snapshot, model, m, noise_std if config.known_noise else None)
        spec = ista_solve(snapshot, model, m, gamma, max_iterations=config.max_iter)
        angles = spectrum_peaks(spec, k)
    else:
        raise ConfigError(f"unknown algorithm {name!r}")
    return AlgorithmOutput(angles, time.perf_counter() - t0)


def _reflectivities(rng: np.random.Generator, k: int, config: ExperimentConfig) -> np.ndarray:
    if config.reflectivity_phase == "zero":
        return np.ones(k, complex)
    return np.exp(2j * np.pi * rng.uniform(size=k))


# ---------------------------------------------------------------------------
# sweep machinery

@dataclass
class SweepRow:
    sweep_var: str
    sweep_value: float
    algorithm: str
    rmse_deg: float
    sr: float
    mean_runtime_s: float
    n_trials: int
    seed_base: int


@dataclass
class SweepTable:
    """Metric rows plus the raw trials behind them."""

    rows: list[SweepRow] = field(default_factory=list)
    trials: dict = field(default_factory=dict)

    def row(self, value: float, algorithm: str) -> SweepRow:
        for r in self.rows:
            if r.algorithm == algorithm and r.sweep_value == value:
                return r
        raise KeyError((value, algorithm))

    def series(self, algorithm: str, column: str = "rmse_deg") -> np.ndarray:
        return np.array([getattr(r, column) for r in self.rows if r.algorithm == algorithm])


def _fmt(value: float) -> str:
    return repr(float(value)) if np.isfinite(value) else "nan"


def write_metrics_csv(path, table: SweepTable) -> None:
    """Metric table: one row per grid point and algorithm, deterministic bytes."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in table.rows:
            w.writerow([r.sweep_var, _fmt(r.sweep_value), r.algorithm, _fmt(r.rmse_deg),
                        _fmt(r.sr), r.n_trials, r.seed_base])


def write_runtime_csv(path, table: SweepTable) -> None:
    """Wall-clock runtimes, kept apart from the reproducible metrics."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUNTIME_COLUMNS)
        for r in table.rows:
            w.writerow([r.sweep_var, _fmt(r.sweep_value), r.algorithm,
                        f"{r.mean_runtime_s:.6g}", r.n_trials])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


TrialFactory = Callable[[np.random.Generator], tuple]


def _run_points(config: ExperimentConfig, sweep_var: str, values: Sequence[float],
                make_trial: Callable, gamma_of: Callable, algorithms: Sequence[str],
                progress: Callable | None = None) -> SweepTable:
    """Shared loop: for each grid point draw trials and run every algorithm.

    ``make_trial(value, rng)`` returns ``(geometry, truth_angles, snapshot,
    noise_std, extra)`` where ``extra`` maps variant names to model
    geometries.  ``gamma_of(value, geometry)`` gives the success threshold.
    """
    table = SweepTable()
    for point, value in enumerate(values):
        results: dict[str, list[TrialResult]] = {}
        gammas = []
        for trial in range(config.n_trials):
            rng = _trial_rng(config.seed, point, trial)
            try:
                geometry, truth, x, noise_std, variants = make_trial(value, rng)
            except ConstructionError as exc:
                log.warning("skipping %s=%s: %s", sweep_var, value, exc)
                results = {}
                break
            gammas.append(gamma_of(value, geometry))
            for name in algorithms:
                runs = [(name, None)] + [(f"{name}_{v}", g) for v, g in variants.items()
                                         if name == "fnlanm"]
                for label, model in runs:
                    try:
                        out = run_algorithm(name, x, geometry, len(truth), config, noise_std, model)
                        res = TrialResult.from_angles(out.angles, truth, out.runtime)
                    except GridlessDoaError as exc:
                        log.info("trial %d of %s=%s failed for %s: %s", trial, sweep_var, value,
                                 label, exc)
                        res = TrialResult.from_angles([], truth, 0.0)
                    results.setdefault(label, []).append(res)
        gamma = float(np.mean(gammas)) if gammas else math.nan
        for label, trials in results.items():
            table.rows.append(SweepRow(
                sweep_var, float(value), label, math.degrees(rmse(trials)),
                success_rate(trials, gamma), float(np.mean([t.runtime for t in trials])),
                len(trials), config.seed))
            table.trials[(float(value), label)] = trials
        if progress:
            progress(sweep_var, value)
    return table


def _random_angle(rng, config: ExperimentConfig) -> float:
    lo, hi = np.deg2rad(config.angle_range_deg)
    return float(rng.uniform(lo, hi))


def _nla(config: ExperimentConfig, rng, n=None, aperture=None, ld=None) -> ArrayGeometry:
    return make_perturbed_nla(n or config.n_elements, aperture or config.aperture_m,
                              config.ld if ld is None else ld, config.wavelength, seed=rng)


def _snapshot(geometry, angles, rng, snr_db, config):
    scene = Scene.from_arrays(angles, _reflectivities(rng, len(angles), config), snr_db)
    x = synthesize_snapshot(geometry, scene, seed=rng)
    sigma = noise_std_for_snr(noiseless_signal(geometry, scene), snr_db) if snr_db is not None else None
    return scene, x, sigma


# ---------------------------------------------------------------------------
# experiments

def run_ld_sweep(config: ExperimentConfig, progress=None) -> SweepTable:
    """Single-target RMSE versus location deviation at ``ld_snr_db``.

    Each trial draws a fresh array.  With ``ula_assumed`` set, FNLANM is
    also run with the sampling matrix of the equal-aperture ULA, which is
    what plain ANM implicitly assumes.
    """
    def make(ld, rng):
        g = _nla(config, rng, ld=ld)
        th = _random_angle(rng, config)
        _, x, sigma = _snapshot(g, [th], rng, config.ld_snr_db, config)
        variants = {"ula_assumed": equivalent_ula(g)} if config.ula_assumed else {}
        return g, np.array([th]), x, sigma, variants

    return _run_points(config, "ld", config.ld_grid, make,
                       lambda v, g: resolution(g, config.eta)[0] / 4, config.algorithms, progress)


def offgrid_angle(rng, geometry: ArrayGeometry, config: ExperimentConfig) -> float:
    """A grid angle of the ISTA dictionary shifted by ``offgrid_fraction`` cells."""
    _, rho_s = resolution(geometry, config.eta)
    m = grid_size(rho_s)
    cell = math.pi / m
    lo, hi = np.deg2rad(config.angle_range_deg)
    first = int(math.ceil(lo / cell))
    last = int(math.floor(hi / cell)) - 1
    return (int(rng.integers(first, last + 1)) + config.offgrid_fraction) * cell


def run_snr_sweep(config: ExperimentConfig, progress=None, with_crlb: bool = True) -> SweepTable:
    """Off-grid single target versus SNR, SR at ``gamma = rho_s / 2``.

    Adds a ``crlb`` row per SNR holding the root of the mean bound.
    """
    def make(snr, rng):
        g = _nla(config, rng)
        th = offgrid_angle(rng, g, config)
        scene, x, sigma = _snapshot(g, [th], rng, snr, config)
        return g, np.array([th]), x, sigma, {}

    table = _run_points(config, "snr_db", config.snr_grid_db, make,
                        lambda v, g: resolution(g, config.eta)[1] / 2, config.algorithms, progress)
    if with_crlb:
        _append_crlb(table, config, config.snr_grid_db, make, "snr_db")
    return table


def _append_crlb(table, config, values, make, sweep_var):
    rows = []
    for point, value in enumerate(values):
        bounds = []
        for trial in range(config.n_trials):
            rng = _trial_rng(config.seed, point, trial)
            g, truth, _, _, _ = make(value, rng)
            scene = Scene.from_arrays(truth, snr_db=value)
            bounds.append(float(np.mean(crlb_single_snapshot(g, scene))))
        rows.append(SweepRow(sweep_var, float(value), "crlb", math.degrees(math.sqrt(np.mean(bounds))),
                             math.nan, 0.0, config.n_trials, config.seed))
    table.rows.extend(rows)


def run_separation_sweep(config: ExperimentConfig, progress=None) -> SweepTable:
    """Two targets at ``theta_1`` and ``theta_1 - delta``, SR at ``gamma = rho / 4``.

    Runs every SNR in ``separation_snrs_db``; the sweep value column holds
    the separation in degrees and the SNR goes into the variable name.
    """
    table = SweepTable()
    theta1 = math.radians(config.theta1_deg)
    grid = config.separation_grid_deg
    if not grid:
        rho, _ = resolution(ArrayGeometry([0.0, config.aperture_m], config.wavelength), config.eta)
        grid = tuple(float(v) for v in np.round(np.linspace(0.1, 2.0, 20) * math.degrees(rho), 6))
    grid = [d for d in grid if 0 < math.radians(d) < theta1]
    for snr in config.separation_snrs_db:
        def make(delta_deg, rng, snr=snr):
            g = _nla(config, rng)
            truth = np.array([theta1 - math.radians(delta_deg), theta1])
            _, x, sigma = _snapshot(g, truth, rng, snr, config)
            return g, truth, x, sigma, {}

        part = _run_points(config, f"delta_deg@snr={snr:g}", grid, make,
                           lambda v, g: resolution(g, config.eta)[0] / 4, config.algorithms, progress)
        table.rows.extend(part.rows)
        table.trials.update({(snr,) + key: val for key, val in part.trials.items()})
    return table


def run_element_and_aperture_sweeps(config: ExperimentConfig, progress=None) -> dict:
    """FNLANM versus SNR for each element factor and for each aperture.

    Returns ``{"element": SweepTable, "aperture": SweepTable}``; each row
    is one (grid point, SNR) pair with the variable name carrying the grid
    point.
    """
    out = {}
    n_ula = config.n_elements
    element = SweepTable()
    for alpha in config.alpha_grid:
        n = int(round(alpha * n_ula))
        sub = config.replace(n_elements=n)
        part = _snr_rows(sub, f"snr_db@alpha={alpha:g}", progress)
        element.rows.extend(part.rows)
        element.trials.update({(alpha,) + k: v for k, v in part.trials.items()})
    out["element"] = element
    aperture = SweepTable()
    half = config.wavelength / 2
    for dl in config.aperture_grid_wavelengths:
        d = dl * config.wavelength
        n = int(round(d / half)) + 1
        sub = config.replace(n_elements=n, aperture_m=d)
        part = _snr_rows(sub, f"snr_db@D={dl:g}lambda", progress)
        aperture.rows.extend(part.rows)
        aperture.trials.update({(dl,) + k: v for k, v in part.trials.items()})
    out["aperture"] = aperture
    return out


def _snr_rows(config, sweep_var, progress):
    def make(snr, rng):
        g = _nla(config, rng)
        th = _random_angle(rng, config)
        _, x, sigma = _snapshot(g, [th], rng, snr, config)
        return g, np.array([th]), x, sigma, {}

    return _run_points(config, sweep_var, config.snr_grid_db, make,
                       lambda v, g: resolution(g, config.eta)[0] / 4, ("fnlanm",), progress)


def scenario_truth(range_m: float, lateral_separation_m: float) -> np.ndarray:
    """Angles of two reflectors side by side at ``range_m`` on boresight, closed form."""
    half = lateral_separation_m / 2
    return np.sort(math.pi / 2 + np.array([-1.0, 1.0]) * math.atan2(half, range_m))


def scenario_truth_vector(range_m: float, lateral_separation_m: float) -> np.ndarray:
    """Same angles from the angle between each position vector and the array axis."""
    axis = np.array([1.0, 0.0])
    out = []
    for side in (-0.5, 0.5):
        p = np.array([side * lateral_separation_m, range_m])
        out.append(math.acos(float(axis @ p) / float(np.linalg.norm(p))))
    return np.sort(np.array(out))


def run_scenario(config: ExperimentConfig, detection_floor: float = 0.5) -> list[dict]:
    """Two corner reflectors receding side by side; one array for all ranges.

    Returns one record per (range, algorithm) with the truth, the K
    estimates and, for the grid methods, every spectral peak above
    ``detection_floor`` times the strongest one.
    """
    rng0 = _trial_rng(config.seed, 0, 0)
    geometry = _nla(config, rng0)
    records = []
    for point, r in enumerate(config.ranges_m):
        truth = scenario_truth(r, config.lateral_separation_m)
        rng = _trial_rng(config.seed, point + 1, 0)
        _, x, sigma = _snapshot(geometry, truth, rng, config.snr_db, config)
        for name in config.algorithms:
            out = run_algorithm(name, x, geometry, 2, config, sigma)
            detections = out.angles
            if name in ("dbf", "ista"):
                detections = _detections(name, x, geometry, config, sigma, detection_floor)
            err = TrialResult.from_angles(out.angles, truth).max_error
            records.append({
                "range_m": float(r), "algorithm": name,
                "truth_deg": np.rad2deg(truth).tolist(),
                "estimate_deg": np.rad2deg(out.angles).tolist(),
                "detections_deg": np.rad2deg(detections).tolist(),
                "max_error_deg": math.degrees(err),
            })
    return records


def _detections(name, x, geometry, config, sigma, floor):
    if name == "dbf":
        spec = dbf_spectrum(x, geometry, config.dbf_grid)
    else:
        m = grid_size(resolution(geometry, config.eta)[1])
        gamma = config.gamma or default_ista_gamma(x, geometry, m, sigma if config.known_noise else None)
        spec = ista_solve(x, geometry, m, gamma, max_iterations=config.max_iter)
    return spectrum_peaks(spec, None, floor)


def write_scenario_csv(path, records: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["range_m", "algorithm", "truth_deg", "estimate_deg", "detections_deg", "max_error_deg"])
        for rec in records:
            w.writerow([_fmt(rec["range_m"]), rec["algorithm"],
                        ";".join(_fmt(v) for v in rec["truth_deg"]),
                        ";".join(_fmt(v) for v in rec["estimate_deg"]),
                        ";".join(_fmt(v) for v in rec["detections_deg"]),
                        _fmt(rec["max_error_deg"])])


def count_dbf_maxima(snapshot, geometry: ArrayGeometry, truth, config: ExperimentConfig,
                     floor: float = 0.5) -> int:
    """Local maxima of the beam pattern within ``rho`` of the targets.

    Only maxima above ``floor`` times the global maximum count, which
    ignores sidelobes.
    """
    rho, _ = resolution(geometry, config.eta)
    spec = dbf_spectrum(snapshot, geometry, config.dbf_grid)
    peaks = spectrum_peaks(spec, None, floor)
    lo, hi = min(truth) - rho, max(truth) + rho
    return int(np.count_nonzero((peaks > lo) & (peaks < hi)))


def run_dbf_resolution(config: ExperimentConfig, separations: Sequence[float]) -> dict:
    """Count beam-pattern maxima for two noiseless targets per separation (radians)."""
    out = {}
    theta1 = math.radians(config.theta1_deg)
    for point, delta in enumerate(separations):
        counts = []
        for trial in range(config.n_trials):
            rng = _trial_rng(config.seed, point, trial)
            g = _nla(config, rng)
            truth = [theta1 - delta, theta1]
            _, x, _ = _snapshot(g, truth, rng, None, config)
            counts.append(count_dbf_maxima(x, g, truth, config))
        out[float(delta)] = np.array(counts)
    return out


# ---------------------------------------------------------------------------
# measured data

@dataclass(frozen=True)
class MeasuredCapture:
    """A snapshot recorded by a real array, with optional extras."""

    geometry: ArrayGeometry
    snapshot: np.ndarray
    sampling_override: object | None = None
    truth_angles: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.snapshot, dtype=complex).reshape(-1)
        n = self.geometry.n_elements if self.sampling_override is None \
            else self.sampling_override.n_elements
        if x.size != n:
            raise DomainError(f"snapshot has {x.size} samples, array has {n} elements")
        object.__setattr__(self, "snapshot", x)


def load_capture(geometry_path, snapshot_path, wavelength: float,
                 sampling_path=None, truth_deg=None) -> MeasuredCapture:
    geometry = load_geometry(geometry_path, wavelength)
    x = read_complex_column(snapshot_path)
    sampling = load_sampling_matrix(sampling_path) if sampling_path else None
    truth = np.deg2rad(truth_deg) if truth_deg is not None else None
    return MeasuredCapture(geometry, x, sampling, truth)


def estimate_capture(capture: MeasuredCapture, k: int, config: ExperimentConfig,
                     noise_std: float | None = None) -> dict[str, DoaEstimate]:
    """Run every configured algorithm on a capture."""
    out = {}
    for name in config.algorithms:
        if name == "fnlanm":
            out[name] = estimate_fnlanm(capture.snapshot, capture.geometry, k,
                                        config.apg_config(noise_std), sampling=capture.sampling_override)
            continue
        res = run_algorithm(name, capture.snapshot, capture.geometry, k, config, noise_std)
        out[name] = DoaEstimate(res.angles, np.zeros(res.angles.size, complex), math.nan,
                                {"runtime_s": res.runtime})
    return out


def estimate_from_files(geometry_path, snapshot_path, k: int, config: ExperimentConfig | None = None,
                        *, sampling_path=None, output_path=None, noise_std=None) -> DoaEstimate:
    """FNLANM on a geometry file and a snapshot file.

    With ``output_path`` the result record is appended as a JSON line.
    Baselines listed in ``config.algorithms`` are run and written too.
    """
    config = config or ExperimentConfig()
    capture = load_capture(geometry_path, snapshot_path, config.wavelength, sampling_path)
    algorithms = config.algorithms if "fnlanm" in config.algorithms else ("fnlanm",) + config.algorithms
    results = estimate_capture(capture, k, config.replace(algorithms=algorithms), noise_std)
    if output_path is not None:
        for name, est in results.items():
            record = est.to_record()
            record["algorithm"] = name
            append_jsonl(output_path, record)
    return results["fnlanm"]


RADAR_1 = dict(frequency_hz=77.5e9, tx_mm=(0.0, 5.7, 11.4), rx_mm=(0.0, 3.8, 7.6, 11.4))
RADAR_2 = dict(frequency_hz=77.9e9, tx_mm=(0.0, 8.0, 38.0, 68.0),
               rx_mm=(0.0, 28.0, 32.0, 52.0, 64.0, 78.0, 104.0, 118.0))


def radar_geometry(radar: dict) -> ArrayGeometry:
    """Virtual array of one of the measurement radars."""
    return mimo_virtual_array(np.array(radar["tx_mm"]) * 1e-3, np.array(radar["rx_mm"]) * 1e-3,
                              wavelength_from_frequency(radar["frequency_hz"]))


# ---------------------------------------------------------------------------
# complexity benchmark

@dataclass
class BenchResult:
    rows: list[dict]
    slope: float
    slope_ci: tuple[float, float]
    slope_stderr: float


def benchmark_complexity(config: ExperimentConfig, use_symmetry: bool = True) -> BenchResult:
    """Per-iteration APG time across virtual array sizes and its log-log slope.

    Each size runs a fixed number of iterations; one warm-up run is
    discarded and the median of ``bench_repeats`` runs is kept.
    """
    rows = []
    for order in config.bench_orders:
        # Aperture chosen so that the order sits just above the bound.
        wavelength = config.wavelength
        aperture = (order - 1.5) * wavelength / (2 * math.pi)
        g = ArrayGeometry(np.linspace(0.0, aperture, config.n_elements), wavelength)
        s = sampling_matrix(g, order)
        rng = _trial_rng(config.seed, order, 0)
        _, x, sigma = _snapshot(g, [_random_angle(rng, config)], rng, config.snr_db, config)
        cfg = ApgConfig(noise_std=sigma, tolerance=1e-300, max_iterations=config.bench_iterations,
                        use_symmetry=use_symmetry)
        apg_solve(x, s, cfg)
        times = []
        for _ in range(config.bench_repeats):
            t0 = time.perf_counter()
            st = apg_solve(x, s, cfg)
            times.append((time.perf_counter() - t0) / st.iterations)
        rows.append({"order": order, "n_virtual": s.n_virtual,
                     "per_iteration_s": float(np.median(times)),
                     "path": "mirror" if use_symmetry else "dense"})
    nv = np.log([r["n_virtual"] for r in rows])
    ts = np.log([r["per_iteration_s"] for r in rows])
    fit = scipy.stats.linregress(nv, ts)
    tcrit = scipy.stats.t.ppf(0.975, max(len(rows) - 2, 1))
    ci = (fit.slope - tcrit * fit.stderr, fit.slope + tcrit * fit.stderr)
    return BenchResult(rows, float(fit.slope), (float(ci[0]), float(ci[1])), float(fit.stderr))


def write_bench_csv(path, result: BenchResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "order", "n_virtual", "per_iteration_s"])
        for r in result.rows:
            w.writerow([r["path"], r["order"], r["n_virtual"], f"{r['per_iteration_s']:.6g}"])
        w.writerow([])
        w.writerow(["# loglog_slope", f"{result.slope:.4f}", "ci95",
                    f"{result.slope_ci[0]:.4f}", f"{result.slope_ci[1]:.4f}"])


# ---------------------------------------------------------------------------
# manifest

def write_manifest(directory, config: ExperimentConfig, outputs: Sequence[str], extra: dict | None = None) -> Path:
    """Record what produced the files in ``directory``."""
    manifest = {
        "config_sha256": config.digest(),
        "config": config.to_dict(),
        "seed": config.seed,
        "threads": config.threads,
        "outputs": list(outputs),
        "versions": {"gridless_doa": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "argv": sys.argv,
    }
    if extra:
        manifest.update(extra)
    path = Path(directory) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path
