"""Batch command-line front end.

Subcommands: simulate, verify, couple, spectrum, stationary.  Settings come
from an INI-style config file (sections [model], [scheme], [run] plus one
section per command) with precedence defaults < file < command section <
command-line flags; DYADIC_SEED supplies the seed when nothing else does.
Every run writes a JSON manifest recording all parameters that influenced
its outputs, and all numeric output uses full round-trip precision, so a
fixed config and seed reproduce files byte for byte at any --jobs setting.

Exit codes: 0 all checks pass, 1 a certified property was violated,
2 runtime failure (diagnostic on stderr).
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    check_energy_bound,
    check_u0_bound,
    continuity_modulus,
    couple,
    distance_series_to_csv,
    fit_decay_slope,
    regularity_profile,
)
from .core import ModelParams, ShellState, sobolev_norm_sq
from .integrator import (
    IntegrationError,
    SchemeConfig,
    integrate,
    trajectory_to_csv,
    trajectory_to_jsonl,
)
from .noise import sample_brownian, substream
from .stationary import (
    EmpiricalMeasure,
    bootstrap_noise_floor,
    long_run,
    mixing_time_proxy,
    save_measure,
    stationarity_gap,
    uniqueness_experiment,
)

SEED_ENV_VAR = "DYADIC_SEED"


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one command invocation."""

    c: float = 2.0
    sigma: float = 1.0
    T: float = 1.0
    N: int = 8
    dt: float = 1e-3
    path_dt: float | None = None
    scheme: str = "modified-patankar"
    positivity: str = "project"
    stiffness_safety: float = 0.5
    seeds: tuple[int, ...] = (0,)
    jobs: int = 1
    out_dir: str = "out"
    save_every: int = 1
    fmt: str = "csv"
    initial: str = "decay:1.0:0.5"
    initial_b: str = "zero"
    deltas: tuple[float, ...] = (0.4, 0.2, 0.1, 0.05)
    probes: int = 4
    horizons: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    n_samples: int = 16
    burn_in: float | None = None
    thin: float = 1.0
    j_min: int | None = None
    j_max: int | None = None
    slack: float = 0.2
    modulus: bool = False
    mode: str = "uniqueness"
    profile: str | None = None

    def params(self) -> ModelParams:
        return ModelParams(c=self.c, sigma=self.sigma, T=self.T, N=self.N, dt=self.dt)

    def scheme_config(self) -> SchemeConfig:
        return SchemeConfig(scheme=self.scheme, positivity=self.positivity,
                            stiffness_safety=self.stiffness_safety)

    def noise_dt(self) -> float:
        return self.dt if self.path_dt is None else self.path_dt


def _parse_seeds(text: str) -> tuple[int, ...]:
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":")
        return tuple(range(int(lo), int(hi)))
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in str(text).split(",") if str(tok).strip())


_BOOL_KEYS = {"modulus"}
_INT_KEYS = {"N", "jobs", "save_every", "probes", "n_samples", "j_min", "j_max"}
_FLOAT_KEYS = {"c", "sigma", "T", "dt", "path_dt", "stiffness_safety", "burn_in",
               "thin", "slack"}
_FLOATS_KEYS = {"deltas", "horizons"}
_KEY_ALIASES = {"format": "fmt", "n": "N", "t": "T"}


def _coerce(key: str, raw):
    if raw is None:
        return None
    if key == "seeds":
        return _parse_seeds(str(raw))
    if key in _FLOATS_KEYS:
        return _parse_floats(str(raw))
    if key in _BOOL_KEYS:
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return str(raw)


def _load_config_file(path: str, command: str) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValueError(f"cannot read config file {path!r}")
    merged: dict = {}
    for section in ("model", "scheme", "run", command):
        if parser.has_section(section):
            for key, raw in parser.items(section):
                key = _KEY_ALIASES.get(key, key)
                merged[key] = _coerce(key, raw)
    return merged


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config file, environment seed and CLI flags."""
    settings: dict = {}
    if args.config:
        settings.update(_load_config_file(args.config, args.command))
    cli_map = {
        "c": args.c, "sigma": args.sigma, "T": args.T, "N": args.N, "dt": args.dt,
        "path_dt": args.path_dt, "scheme": args.scheme, "positivity": args.positivity,
        "stiffness_safety": args.stiffness_safety, "jobs": args.jobs,
        "out_dir": args.out_dir, "save_every": args.save_every, "fmt": args.fmt,
        "initial": args.initial, "initial_b": args.initial_b,
        "probes": args.probes, "n_samples": args.n_samples,
        "burn_in": args.burn_in, "thin": args.thin,
        "j_min": args.j_min, "j_max": args.j_max, "slack": args.slack,
        "modulus": args.modulus or None, "mode": args.mode, "profile": args.profile,
    }
    if args.deltas:
        cli_map["deltas"] = _parse_floats(args.deltas)
    if args.horizons:
        cli_map["horizons"] = _parse_floats(args.horizons)
    for key, value in cli_map.items():
        if value is not None:
            settings[key] = value
    if args.seeds:
        settings["seeds"] = _parse_seeds(args.seeds)
    elif args.seed is not None:
        settings["seeds"] = (args.seed,)
    elif "seeds" not in settings and "seed" not in settings:
        env = os.environ.get(SEED_ENV_VAR)
        if env is not None:
            settings["seeds"] = (int(env),)
    if "seed" in settings:
        single = settings.pop("seed")
        settings.setdefault("seeds", (int(single),))
    cfg = RunConfig(**settings)
    cfg.params()
    cfg.scheme_config()
    if cfg.fmt not in ("csv", "jsonl", "both"):
        raise ValueError(f"format must be csv, jsonl or both, got {cfg.fmt!r}")
    if cfg.jobs < 1:
        raise ValueError("jobs must be >= 1")
    return cfg


def make_initial(kind: str, N: int, seed: int) -> ShellState:
    """Build an initial state from its grammar.

    zero | unit0 | decay:AMP:RATIO (u_j = AMP * RATIO^j) |
    random:AMP (AMP * 2^-j * xi_j with xi_j uniform in [0.5, 1.5), keyed by
    the run seed).
    """
    n = N + 1
    if kind == "zero":
        return ShellState(np.zeros(n))
    if kind == "unit0":
        u = np.zeros(n)
        u[0] = 1.0
        return ShellState(u)
    if kind.startswith("decay:"):
        _, amp, ratio = kind.split(":")
        return ShellState(float(amp) * float(ratio) ** np.arange(n, dtype=float))
    if kind.startswith("random:"):
        _, amp = kind.split(":")
        rng = np.random.Generator(np.random.Philox(key=substream(seed, 7)))
        xi = rng.uniform(0.5, 1.5, n)
        return ShellState(float(amp) * 2.0 ** (-np.arange(n, dtype=float)) * xi)
    raise ValueError(f"unknown initial state {kind!r}")


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig, outputs: list[str],
                    started: float) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": asdict(cfg),
        "outputs": sorted(outputs),
        "wall_clock_s": time.time() - started,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _map_seeds(worker, cfg: RunConfig, seeds) -> list:
    """Run worker(cfg, seed) for every seed, in parallel when jobs > 1, and
    return the results in seed order regardless of scheduling."""
    if cfg.jobs == 1 or len(seeds) == 1:
        return [worker(cfg, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(worker, [cfg] * len(seeds), seeds))


def _simulate_one(cfg: RunConfig, seed: int):
    params = cfg.params()
    initial = make_initial(cfg.initial, cfg.N, seed)
    path = sample_brownian(params.T, cfg.noise_dt(), seed)
    traj = integrate(initial, params, path, cfg.scheme_config())
    return seed, traj


def cmd_simulate(cfg: RunConfig) -> int:
    started = time.time()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for seed, traj in _map_seeds(_simulate_one, cfg, cfg.seeds):
        if cfg.fmt in ("csv", "both"):
            name = f"trajectory_seed{seed}.csv"
            trajectory_to_csv(traj, out_dir / name, every=cfg.save_every)
            outputs.append(name)
        if cfg.fmt in ("jsonl", "both"):
            name = f"trajectory_seed{seed}.jsonl"
            trajectory_to_jsonl(traj, out_dir / name, every=cfg.save_every)
            outputs.append(name)
    _write_manifest(out_dir, "simulate", cfg, outputs, started)
    return 0


def _verify_one(cfg: RunConfig, seed: int):
    params = cfg.params()
    initial = make_initial(cfg.initial, cfg.N, seed)
    path = sample_brownian(params.T, cfg.noise_dt(), seed)
    traj = integrate(initial, params, path, cfg.scheme_config())
    initial_norm = math.sqrt(sobolev_norm_sq(initial))
    u0_rep = check_u0_bound(traj, path, initial_norm)
    en_rep = check_energy_bound(traj, path, initial_norm)
    j_lo = 2 if cfg.j_min is None else cfg.j_min
    j_hi = max(j_lo + 2, cfg.N - 4) if cfg.j_max is None else cfg.j_max
    try:
        fit = fit_decay_slope(regularity_profile(traj), j_lo, j_hi)
        slope = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
                 "n_points": fit.n_points, "excluded": list(fit.excluded)}
    except ValueError as exc:
        slope = {"error": str(exc)}
    return seed, {"u0": asdict(u0_rep), "energy": asdict(en_rep), "slope": slope}


def cmd_verify(cfg: RunConfig) -> int:
    started = time.time()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_seed = {}
    violations = 0
    for seed, report in _map_seeds(_verify_one, cfg, cfg.seeds):
        per_seed[str(seed)] = report
        violations += int(report["u0"]["violated"]) + int(report["energy"]["violated"])
    summary = {
        "seeds": list(cfg.seeds),
        "violations": violations,
        "reports": per_seed,
    }
    with open(out_dir / "verify.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "verify", cfg, ["verify.json"], started)
    return 0 if violations == 0 else 1


def _couple_one(cfg: RunConfig, seed: int):
    params = cfg.params()
    initial_a = make_initial(cfg.initial, cfg.N, seed)
    initial_b = make_initial(cfg.initial_b, cfg.N, seed)
    path = sample_brownian(params.T, cfg.noise_dt(), seed)
    result = couple(initial_a, initial_b, params, path, cfg.scheme_config())
    distinct = not np.array_equal(initial_a.u, initial_b.u)
    return seed, result, distinct


def cmd_couple(cfg: RunConfig) -> int:
    started = time.time()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    if cfg.modulus:
        params = cfg.params()
        seed = cfg.seeds[0]
        base_initial = make_initial(cfg.initial, cfg.N, seed)
        base_path = sample_brownian(params.T, cfg.noise_dt(), seed)
        points = continuity_modulus(base_initial, base_path, params, cfg.deltas,
                                    cfg.probes, seed, cfg.scheme_config())
        with open(out_dir / "modulus.csv", "w") as fh:
            fh.write("delta,worst_sup_distance\n")
            for point in points:
                fh.write(f"{point.delta!r},{point.worst_distance!r}\n")
        outputs.append("modulus.csv")
        worsts = [p.worst_distance for p in points]
        ok = all(b < a for a, b in zip(worsts, worsts[1:]))
        _write_manifest(out_dir, "couple", cfg, outputs, started)
        return 0 if ok else 1
    failures = 0
    summary = {}
    for seed, result, distinct in _map_seeds(_couple_one, cfg, cfg.seeds):
        name = f"coupling_seed{seed}.csv"
        distance_series_to_csv(result, out_dir / name)
        outputs.append(name)
        ok = result.monotone_violations == 0 and (not distinct or result.contracted)
        failures += 0 if ok else 1
        summary[str(seed)] = {
            "initial": result.initial,
            "final": result.final,
            "monotone_violations": result.monotone_violations,
            "tol_mono": result.tol_mono,
            "contracted": result.contracted,
        }
    with open(out_dir / "coupling.json", "w") as fh:
        json.dump({"seeds": list(cfg.seeds), "failures": failures,
                   "pairs": summary}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append("coupling.json")
    _write_manifest(out_dir, "couple", cfg, outputs, started)
    return 0 if failures == 0 else 1


def _read_profile_csv(path: str) -> list[tuple[int, float, float]]:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().lower().split(",")
        if header[:2] != ["j", "i"]:
            raise ValueError(f"profile file must start with header 'j,I', got {header}")
        for line in fh:
            if not line.strip():
                continue
            parts = line.split(",")
            cross = float(parts[2]) if len(parts) > 2 else math.nan
            rows.append((int(parts[0]), float(parts[1]), cross))
    return rows


def cmd_spectrum(cfg: RunConfig) -> int:
    started = time.time()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg.seeds[0]
    params = cfg.params()
    if cfg.profile:
        profile = _read_profile_csv(cfg.profile)
    else:
        scheme = cfg.scheme_config()
        burn = cfg.burn_in
        if burn is None:
            burn = 10.0 * mixing_time_proxy(replace(params, T=max(params.T, 1.0)),
                                            substream(seed, 3), scheme)
        state = make_initial(cfg.initial, cfg.N, seed)
        if burn > 0.0:
            burn_params = replace(params, T=burn)
            burn_path = sample_brownian(burn, cfg.noise_dt(), substream(seed, 1))
            state = integrate(state, burn_params, burn_path, scheme).final_state
        path = sample_brownian(params.T, cfg.noise_dt(), substream(seed, 2))
        traj = integrate(state, params, path, scheme)
        profile = regularity_profile(traj)
    with open(out_dir / "spectrum.csv", "w") as fh:
        fh.write("j,I,J\n")
        for j, mode, cross in profile:
            fh.write(f"{j},{mode!r},{cross!r}\n")
    j_lo = 2 if cfg.j_min is None else cfg.j_min
    j_hi = max(j_lo + 2, cfg.N - 4) if cfg.j_max is None else cfg.j_max
    fit = fit_decay_slope(profile, j_lo, j_hi)
    threshold = -(2.0 / 3.0) * cfg.c + cfg.slack
    passed = fit.slope <= threshold
    report = {
        "slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
        "n_points": fit.n_points, "excluded": list(fit.excluded),
        "window": [j_lo, j_hi], "threshold": threshold, "passed": passed,
    }
    with open(out_dir / "spectrum.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "spectrum", cfg, ["spectrum.csv", "spectrum.json"], started)
    return 0 if passed else 1


def cmd_stationary(cfg: RunConfig) -> int:
    started = time.time()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg.seeds[0]
    params = cfg.params()
    scheme = cfg.scheme_config()
    if cfg.mode == "sample":
        burn = cfg.burn_in
        if burn is None:
            burn = 10.0 * mixing_time_proxy(replace(params, T=max(params.T, 1.0)),
                                            substream(seed, 3), scheme)
        initial = make_initial(cfg.initial, cfg.N, seed)
        measure = long_run(initial, params, burn, cfg.n_samples, cfg.thin, seed, scheme)
        save_measure(measure, out_dir / "measure.jsonl")
        half = len(measure) // 2
        early = EmpiricalMeasure(measure.samples[:half])
        late = EmpiricalMeasure(measure.samples[half: 2 * half])
        gap = stationarity_gap(early, late)
        floor = bootstrap_noise_floor(early, seed=substream(seed, 5))
        report = {"gap": gap, "noise_floor": floor, "passed": bool(gap <= floor),
                  "n_samples": len(measure), "burn_in": burn}
        with open(out_dir / "stationary.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_manifest(out_dir, "stationary", cfg,
                        ["measure.jsonl", "stationary.json"], started)
        return 0 if report["passed"] else 1
    if cfg.mode != "uniqueness":
        raise ValueError(f"stationary mode must be 'uniqueness' or 'sample', got {cfg.mode!r}")
    initial_a = make_initial(cfg.initial, cfg.N, seed)
    initial_b = make_initial(cfg.initial_b, cfg.N, seed)
    result = uniqueness_experiment(initial_a, initial_b, params, cfg.horizons,
                                   cfg.n_samples, seed, scheme)
    result.to_csv(out_dir / "stationary.csv")
    mean = result.mean_coupled_sq
    cloud = result.cloud_w2
    decreasing = bool(np.all(np.diff(mean) < 0.0) and np.all(np.diff(cloud) < 0.0))
    dominated = bool(np.all(cloud <= mean + 1e-12 * (1.0 + mean)))
    report = {
        "strictly_decreasing": decreasing,
        "cloud_below_coupled_mean": dominated,
        "mean_ratio": float(mean[-1] / mean[0]) if mean[0] > 0.0 else 0.0,
        "cloud_ratio": float(cloud[-1] / cloud[0]) if cloud[0] > 0.0 else 0.0,
        "passed": decreasing and dominated,
    }
    with open(out_dir / "stationary.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "stationary", cfg,
                    ["stationary.csv", "stationary.json"], started)
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadicshell",
        description="Simulate the noisy dyadic cascade and certify its "
                    "pathwise bounds, contraction and stationary-law behavior.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "integrate one or more seeded runs and write trajectories"),
        ("verify", "certify the shell-0 and energy bounds over a seed batch"),
        ("couple", "synchronous coupling contraction (or continuity modulus)"),
        ("spectrum", "per-shell time-integral decay and its fitted exponent"),
        ("stationary", "uniqueness experiment or long-run sampling"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help=f"single seed (falls back to ${SEED_ENV_VAR})")
        p.add_argument("--seeds", help="seed batch: 'lo:hi' or comma list")
        p.add_argument("--jobs", type=int, help="parallel workers over seeds")
        p.add_argument("--out-dir", dest="out_dir", help="output directory")
        p.add_argument("--dt", type=float, help="trajectory/save grid spacing")
        p.add_argument("--path-dt", dest="path_dt", type=float,
                       help="noise grid spacing (stepping resolution); must divide --dt")
        p.add_argument("--N", type=int, help="truncation level")
        p.add_argument("--c", type=float, help="intermittency exponent in [1, 3]")
        p.add_argument("--sigma", type=float, help="noise amplitude on shell 0")
        p.add_argument("--T", type=float, help="time horizon")
        p.add_argument("--scheme",
                       choices=("modified-patankar", "semi-implicit", "explicit-euler"))
        p.add_argument("--positivity", choices=("project", "reject-step"))
        p.add_argument("--stiffness-safety", dest="stiffness_safety", type=float)
        p.add_argument("--save-every", dest="save_every", type=int,
                       help="keep one saved state in this many (output thinning)")
        p.add_argument("--format", dest="fmt", choices=("csv", "jsonl", "both"))
        p.add_argument("--initial", help="zero|unit0|decay:AMP:RATIO|random:AMP")
        p.add_argument("--initial-b", dest="initial_b",
                       help="second initial state for coupled commands")
        p.add_argument("--deltas", help="perturbation ladder, comma separated")
        p.add_argument("--probes", type=int, help="probes per delta rung")
        p.add_argument("--horizons", help="uniqueness horizons, comma separated")
        p.add_argument("--n-samples", dest="n_samples", type=int)
        p.add_argument("--burn-in", dest="burn_in", type=float)
        p.add_argument("--thin", type=float, help="sampling interval after burn-in")
        p.add_argument("--j-min", dest="j_min", type=int, help="slope window start")
        p.add_argument("--j-max", dest="j_max", type=int, help="slope window end")
        p.add_argument("--slack", type=float, help="slope pass slack")
        p.add_argument("--modulus", action="store_true",
                       help="couple: run the continuity-modulus ladder instead")
        p.add_argument("--mode", choices=("uniqueness", "sample"),
                       help="stationary: experiment type")
        p.add_argument("--profile", help="spectrum: fit this profile CSV instead of running")
    return parser


_DISPATCH = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "couple": cmd_couple,
    "spectrum": cmd_spectrum,
    "stationary": cmd_stationary,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _DISPATCH[args.command](cfg)
    except (ValueError, OSError) as exc:
        print(f"dyadicshell {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except IntegrationError as exc:
        print(f"dyadicshell {args.command}: integration failed: {exc} "
              f"(time={exc.time}, shell={exc.mode})", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
