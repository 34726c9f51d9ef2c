"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import harness
from .errors import ConfigError, ConstructionError, DomainError, NumericalError, ParseError
from .geometry import (Scene, make_perturbed_nla, noise_std_for_snr, noiseless_signal, save_geometry,
                       synthesize_snapshot)
from .io import write_complex_column

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("gridless_doa")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI experiment file")
    p.add_argument("--seed", type=int, help="seed base (overrides the config)")
    p.add_argument("--algos", help="comma-separated subset of dbf,ista,fnlanm")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--threads", type=int, help="BLAS thread limit")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials per point")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridless-doa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize an array and one snapshot")
    _common(p)
    p.add_argument("--angles", required=True, help="target angles in degrees, comma-separated")
    p.add_argument("--snr", type=float, help="SNR in dB; omit for a noiseless snapshot")

    p = sub.add_parser("estimate", help="estimate DoAs from geometry and snapshot files")
    _common(p)
    p.add_argument("--geometry", type=Path, required=True)
    p.add_argument("--snapshot", type=Path, required=True)
    p.add_argument("--sampling", type=Path, help="measured sampling matrix file")
    p.add_argument("-k", "--targets", type=int, required=True)
    p.add_argument("--noise-std", type=float)

    p = sub.add_parser("sweep", help="run a Monte-Carlo sweep and write CSV tables")
    _common(p)
    p.add_argument("--kind", choices=("ld_sweep", "snr_sweep", "separation_sweep",
                                      "element_sweep", "aperture_sweep"))

    p = sub.add_parser("scenario", help="two reflectors receding along boresight")
    _common(p)

    p = sub.add_parser("bench", help="time APG iterations across virtual array sizes")
    _common(p)
    p.add_argument("--dense", action="store_true", help="also time the unstructured path")
    return parser


def _config(args, kind: str) -> harness.ExperimentConfig:
    config = harness.load_config(args.config, kind) if args.config else harness.ExperimentConfig(kind=kind)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.algos:
        changes["algorithms"] = tuple(a.strip() for a in args.algos.split(",") if a.strip())
    if args.threads is not None:
        changes["threads"] = args.threads
    if args.trials is not None:
        changes["n_trials"] = args.trials
    changes["output_dir"] = str(args.out)
    return config.replace(**changes)


def cmd_simulate(args) -> tuple[harness.ExperimentConfig, list[str]]:
    config = _config(args, "single")
    rng = np.random.default_rng(config.seed)
    geometry = make_perturbed_nla(config.n_elements, config.aperture_m, config.ld, config.wavelength, seed=rng)
    try:
        angles = np.deg2rad([float(a) for a in args.angles.split(",")])
    except ValueError:
        raise ConfigError(f"bad --angles {args.angles!r}") from None
    scene = Scene.from_arrays(angles, snr_db=args.snr)
    x = synthesize_snapshot(geometry, scene, seed=rng)
    sigma = noise_std_for_snr(noiseless_signal(geometry, scene), args.snr) if args.snr is not None else 0.0
    save_geometry(args.out / "geometry.txt", geometry)
    write_complex_column(args.out / "snapshot.txt", x)
    truth = {"angles_deg": np.rad2deg(angles).tolist(), "snr_db": args.snr, "noise_std": sigma,
             "frequency_hz": config.frequency_hz}
    (args.out / "truth.json").write_text(json.dumps(truth, indent=2) + "\n")
    return config, ["geometry.txt", "snapshot.txt", "truth.json"]


def cmd_estimate(args) -> tuple[harness.ExperimentConfig, list[str]]:
    config = _config(args, "single")
    out = args.out / "results.jsonl"
    est = harness.estimate_from_files(args.geometry, args.snapshot, args.targets, config,
                                      sampling_path=args.sampling, output_path=out,
                                      noise_std=args.noise_std)
    print("fnlanm angles (deg):", " ".join(f"{a:.6f}" for a in np.rad2deg(est.angles)))
    return config, [out.name]


def cmd_sweep(args) -> tuple[harness.ExperimentConfig, list[str]]:
    kind = args.kind or (harness.load_config(args.config).kind if args.config else "snr_sweep")
    config = _config(args, kind)
    progress = lambda var, value: log.info("%s = %s done", var, value)  # noqa: E731
    if kind == "ld_sweep":
        tables = {"": harness.run_ld_sweep(config, progress)}
    elif kind == "snr_sweep":
        tables = {"": harness.run_snr_sweep(config, progress)}
    elif kind == "separation_sweep":
        tables = {"": harness.run_separation_sweep(config, progress)}
    elif kind in ("element_sweep", "aperture_sweep"):
        both = harness.run_element_and_aperture_sweeps(config, progress)
        tables = {"_" + k: v for k, v in both.items()}
    else:
        raise ConfigError(f"{kind} is not a sweep")
    outputs = []
    for suffix, table in tables.items():
        metrics = args.out / f"{kind}{suffix}.csv"
        runtime = args.out / f"{kind}{suffix}_runtime.csv"
        harness.write_metrics_csv(metrics, table)
        harness.write_runtime_csv(runtime, table)
        outputs += [metrics.name, runtime.name]
    return config, outputs


def cmd_scenario(args) -> tuple[harness.ExperimentConfig, list[str]]:
    config = _config(args, "scenario")
    records = harness.run_scenario(config)
    harness.write_scenario_csv(args.out / "scenario.csv", records)
    return config, ["scenario.csv"]


def cmd_bench(args) -> tuple[harness.ExperimentConfig, list[str]]:
    config = _config(args, "bench")
    results = [harness.benchmark_complexity(config, use_symmetry=True)]
    if args.dense:
        results.append(harness.benchmark_complexity(config, use_symmetry=False))
    outputs = []
    for res in results:
        name = f"bench_{res.rows[0]['path']}.csv"
        harness.write_bench_csv(args.out / name, res)
        print(f"{res.rows[0]['path']}: log-log slope {res.slope:.3f} "
              f"(95% CI {res.slope_ci[0]:.3f} .. {res.slope_ci[1]:.3f})")
        outputs.append(name)
    return config, outputs


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "sweep": cmd_sweep,
            "scenario": cmd_scenario, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        args.out.mkdir(parents=True, exist_ok=True)
        limit = threadpool_limits(args.threads) if args.threads else nullcontext()
        with limit:
            config, outputs = COMMANDS[args.command](args)
        harness.write_manifest(args.out, config, outputs, {"command": args.command})
    except (ConfigError, ParseError, DomainError, ConstructionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
