"""Command-line interface.

    gridsense simulate  --case wscc9 --trip 500:5-7 --out run/
    gridsense estimate  --series run/series.csv --case wscc9 --method full
    gridsense detect    --series run/series.csv --case wscc9 --window 300
    gridsense spectral  --case ieee39 --trip 0:2-25,1-39 --series post.csv
    gridsense damping   --series plain.csv --case ieee39
    gridsense pipeline  --case wscc9 --seeds 0..9 --out results/

Exit codes: 0 success, 2 configuration error, 3 numerical error,
4 detection alarm present.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, experiments
from .detector import frobenius_distance, localize, moving_window_scan
from .dynamics import Frame, MachineModel, jacobian_analytic, model_state_matrix, solve_equilibrium
from .errors import CaseFormatError, ConfigError, GridsenseError, NotFoundError
from .estimator import (
    FULL,
    METHODS,
    SIMPLIFIED,
    assemble_estimated_state_matrix,
    estimate_damping,
    estimate_jacobian,
    sample_covariance,
)
from .io import (
    config_hash,
    dumps,
    matrix_doc,
    read_series_csv,
    write_distance_csv,
    write_events_csv,
    write_json,
    write_series_csv,
    write_spectrum_csv,
    write_surface_csv,
)
from .netmodel import NetworkCase, load_case, perturb_topology
from .simulator import AmbientSeries, ScenarioSchedule, simulate_ambient
from .spectral import eigen_decompose, hausdorff_distance, is_stable, rightmost_eigenvalue

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_ALARM = 4


@dataclass
class ScenarioConfig:
    case: str = "wscc9"
    frame: str = "coi"
    duration: float = 500.0
    dt: float = 0.001
    sigma: float = 0.01
    rate: float = 10.0
    trips: list = field(default_factory=list)  # [(t, [bus pairs or branch ids])]
    noise_std: float = 0.0
    method: str = SIMPLIFIED
    window: float | None = None
    stride: float = 1.0
    threshold: float | None = None
    out: str = "."
    seeds: list = field(default_factory=lambda: [0])

    def validate(self):
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if self.method not in METHODS:
            raise ConfigError(f"--method must be one of {METHODS}")
        if self.duration <= 0 or self.dt <= 0 or self.rate <= 0:
            raise ConfigError("duration, dt and rate must be positive")
        if self.window is not None and self.window <= 0:
            raise ConfigError("--window must be positive")


def parse_seeds(text: str) -> list[int]:
    """``N``, ``A..B`` (inclusive) or a comma list."""
    text = text.strip()
    if not text:
        raise ConfigError("seed list is empty")
    if ".." in text:
        a, _, b = text.partition("..")
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ConfigError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(s) for s in text.split(",") if s.strip()]


def parse_trip(text: str) -> tuple[float, list]:
    """``T:5-7,8`` -> (T, [(5, 7), 8]); pairs name a line by its buses, bare ints a branch id."""
    t, sep, spec = text.partition(":")
    if not sep or not spec:
        raise ConfigError(f"--trip expects T:LINES, got {text!r}")
    items = []
    for tok in spec.split(","):
        tok = tok.strip()
        if "-" in tok:
            a, b = tok.split("-", 1)
            items.append((int(a), int(b)))
        else:
            items.append(int(tok))
    return float(t), items


def _branch_ids(case: NetworkCase, items) -> tuple[int, ...]:
    return tuple(case.find_branch(*it).id if isinstance(it, tuple) else case.branch(it).id for it in items)


def _parse_list(text: str | None, cast=float):
    if text is None:
        return None
    return [cast(x) for x in text.split(",") if x.strip()]


def _case(name: str) -> NetworkCase:
    try:
        return load_case(name)
    except FileNotFoundError as exc:
        raise ConfigError(f"case file not found: {exc.filename or name}") from None


def _frame(text: str, model: MachineModel | None = None) -> Frame:
    try:
        fr = Frame.parse(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if model is not None and fr.index is not None and fr.index >= model.n:
        raise ConfigError(f"frame machine {fr.index + 1} exceeds {model.n} machines")
    return fr.resolve(model.M) if model is not None else fr


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _provenance(cfg: ScenarioConfig, **extra) -> dict:
    doc = asdict(cfg)
    return {"config": doc, "config_hash": config_hash(doc), "version": __version__, **extra}


def _load_series(path: str, frame_text: str | None) -> AmbientSeries:
    events = Path(path).with_name("events.csv")
    frame = Frame.parse(frame_text) if frame_text else None
    return read_series_csv(path, frame=frame, events_path=events if events.exists() else None)


def _machine_model(case: NetworkCase, trips=()) -> MachineModel:
    base = MachineModel.from_case(case)
    if not trips:
        return base
    ids = [i for _, items in trips for i in _branch_ids(case, items)]
    red = MachineModel.from_case(perturb_topology(case, ids), emf=base.reduced.E).reduced
    return base.with_network(red)


# ---------------------------------------------------------------- subcommands


def cmd_simulate(cfg: ScenarioConfig) -> int:
    case = _case(cfg.case)
    model = MachineModel.from_case(case)
    frame = _frame(cfg.frame, model)
    contingencies = tuple((t, _branch_ids(case, items)) for t, items in cfg.trips)
    out = _out_dir(cfg.out)
    for seed in cfg.seeds:
        sched = ScenarioSchedule(duration=cfg.duration, dt=cfg.dt, sigma_load=cfg.sigma, contingencies=contingencies,
                                 measurement_noise_std=(cfg.noise_std, cfg.noise_std), output_rate=cfg.rate,
                                 seed=seed)
        series = simulate_ambient(case, frame, sched)
        d = out if len(cfg.seeds) == 1 else _out_dir(str(out / f"seed{seed}"))
        write_series_csv(series, d / "series.csv")
        write_events_csv(series.events, d / "events.csv")
        write_json(_provenance(cfg, seed=seed, frame=str(frame), samples=series.n_samples), d / "simulate.json")
    return EXIT_OK


def _inertia_for(model: MachineModel, labels) -> tuple[np.ndarray, np.ndarray]:
    pos = [k - 1 for k in labels]
    return model.M[pos], model.D[pos]


def cmd_estimate(cfg: ScenarioConfig, series_path: str, observed=None, inertia=None, frame_text=None) -> dict:
    series = _load_series(series_path, frame_text)
    case = _case(cfg.case) if cfg.case else None
    labels = list(series.labels) if observed is None else list(observed)
    if len(labels) < 2:
        raise ConfigError("--observed needs at least two machines")
    missing = [k for k in labels if k not in series.labels]
    if missing:
        raise ConfigError(f"machines {missing} have no channel in {series_path}")
    if case is not None:
        model = MachineModel.from_case(case)
        M, D = _inertia_for(model, labels)
    elif inertia is not None:
        M, D = np.asarray(inertia, dtype=float), None
        if len(M) != len(labels):
            raise ConfigError(f"--inertia has {len(M)} values for {len(labels)} machines")
    else:
        raise ConfigError("either --case or --inertia is required")
    sub = series.select([series.labels.index(k) for k in labels])
    end = sub.t0 + sub.duration
    window = (sub.t0, end) if cfg.window is None or cfg.window >= sub.duration else (end - cfg.window, end)
    noise = (cfg.noise_std, cfg.noise_std)
    cov = sample_covariance(sub, window, noise)
    est = {SIMPLIFIED: estimate_jacobian(cov, M, SIMPLIFIED)}
    if D is not None:
        est[FULL] = estimate_jacobian(cov, M, FULL, D)
    if cfg.method not in est:
        raise ConfigError("--method full needs damping values from --case")
    primary = est[cfg.method]
    report = _provenance(cfg, series=str(series_path), window=list(cov.window), frame=str(series.frame))
    report["labels"] = labels
    report["submatrix"] = len(labels) < series.m
    report["condition"] = primary.condition
    report["jacobian"] = matrix_doc(primary.J, series.frame, cfg.method, labels)
    for name, e in est.items():
        report[f"jacobian_{name}"] = matrix_doc(e.J, series.frame, name, labels)
    if len(est) == 2:
        report["method_delta"] = frobenius_distance(est[SIMPLIFIED].J, est[FULL].J)
    if D is not None:
        A_hat = assemble_estimated_state_matrix(primary, M, D).A
        report["state_matrix"] = matrix_doc(A_hat, series.frame, cfg.method)
    if case is not None and not report["submatrix"]:
        frame = series.frame.resolve(model.M)
        mean_angles = sub.delta[sub.window(*window[:2])].mean(axis=0)
        J_model = jacobian_analytic(model, mean_angles, frame)
        report["jacobian_model"] = matrix_doc(J_model, frame, "model")
        report["distance_to_model"] = frobenius_distance(primary.J, J_model)
        report["localization"] = _loc_doc(localize(J_model, primary.J, labels=labels))
    elif case is not None:
        frame = series.frame.resolve(model.M)
        full_mean = series.delta[series.window(*window[:2])].mean(axis=0)
        J_model = jacobian_analytic(model, full_mean, frame)
        pos = [series.labels.index(k) for k in labels]
        J_sub = J_model[np.ix_(pos, pos)]
        report["jacobian_model"] = matrix_doc(J_sub, frame, "model", labels)
        report["distance_to_model"] = frobenius_distance(primary.J, J_sub)
        report["localization"] = _loc_doc(localize(J_sub, primary.J, labels=labels))
    return report


def _loc_doc(loc) -> dict:
    return {"surface": matrix_doc(loc.surface), "ranking": list(loc.ranking), "pairs": [list(p) for p in loc.pairs]}


def cmd_detect(cfg: ScenarioConfig, series_path: str, frame_text=None) -> tuple[dict, bool]:
    series = _load_series(series_path, frame_text)
    case = _case(cfg.case)
    model = MachineModel.from_case(case)
    frame = series.frame.resolve(model.M)
    eq = solve_equilibrium(model, frame)
    J_model = jacobian_analytic(model, eq, frame)
    M, D = _inertia_for(model, series.labels)
    kw = {} if cfg.threshold is None else {"threshold": None if cfg.threshold < 0 else cfg.threshold}
    rep = moving_window_scan(series, J_model, window_s=cfg.window or 300.0, stride_s=cfg.stride, M=M,
                             method=cfg.method, D=D if cfg.method == FULL else None, **kw)
    out = _out_dir(cfg.out)
    write_distance_csv(rep.times, rep.distances, rep.valid, out / "distance.csv")
    doc = _provenance(cfg, series=str(series_path), frame=str(frame))
    doc.update(threshold=rep.threshold, alarms=[list(a) for a in rep.alarms],
               invalid_band=[list(b) for b in rep.invalid_band], errors=[list(e) for e in rep.errors],
               jacobian_model=matrix_doc(J_model, frame, "model", series.labels))
    if rep.localization is not None:
        write_surface_csv(rep.localization.surface, series.labels, out / "surface.csv")
        doc["localization"] = _loc_doc(rep.localization)
    return doc, bool(rep.alarms)


def cmd_spectral(cfg: ScenarioConfig, series_path: str | None, frame_text=None) -> dict:
    case = _case(cfg.case)
    model = _machine_model(case, cfg.trips)
    series = _load_series(series_path, frame_text) if series_path is not None else None
    if series is not None:
        frame = series.frame.resolve(model.M)
    else:
        frame = _frame(frame_text or cfg.frame, model)
    eq = solve_equilibrium(model, frame)
    A = model_state_matrix(model, frame, eq).A
    rep = eigen_decompose(A)
    spectra = [(rep.eigenvalues, "ModelBased")]
    lam, _, _ = rightmost_eigenvalue(rep)
    doc = _provenance(cfg, frame=str(frame))
    doc["model"] = {"rightmost": lam, "stable": is_stable(rep), "eigenvalues": rep.eigenvalues}
    if series is not None:
        M, D = _inertia_for(model, series.labels)
        cov = sample_covariance(series, None, (cfg.noise_std, cfg.noise_std))
        est = estimate_jacobian(cov, M, cfg.method, D if cfg.method == FULL else None)
        A_hat = assemble_estimated_state_matrix(est, M, D).A
        rep_hat = eigen_decompose(A_hat, "Estimated")
        lam_hat, _, _ = rightmost_eigenvalue(rep_hat)
        spectra.append((rep_hat.eigenvalues, "Estimated"))
        doc["estimated"] = {"rightmost": lam_hat, "stable": is_stable(rep_hat), "eigenvalues": rep_hat.eigenvalues}
        doc["rightmost_relative_error"] = abs(lam_hat.real - lam.real) / abs(lam.real) if lam.real else None
        doc["hausdorff"] = hausdorff_distance(rep.eigenvalues, rep_hat.eigenvalues)
        doc["verdict_agrees"] = is_stable(rep) == is_stable(rep_hat)
    write_spectrum_csv(spectra, _out_dir(cfg.out) / "spectrum.csv")
    return doc


def cmd_damping(cfg: ScenarioConfig, series_path: str, frame_text=None) -> dict:
    series = _load_series(series_path, frame_text)
    case = _case(cfg.case)
    model = MachineModel.from_case(case)
    red = model.reduced
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cov = sample_covariance(series, None, (cfg.noise_std, cfg.noise_std))
    est = estimate_damping(cov, model.M, red.E, np.diag(red.G), np.full(model.n, cfg.sigma), cfg.method)
    actual = model.D[[k - 1 for k in est.labels]]
    rows = [{"machine": k, "actual": a, "estimated": e, "relative_error": abs(e - a) / a}
            for k, a, e in zip(est.labels, actual, est.D)]
    doc = _provenance(cfg, series=str(series_path), frame=str(series.frame))
    doc.update(method=est.method, damping=rows, negative=list(est.negative))
    return doc


# ---------------------------------------------------------------- pipeline


def _pipeline_seed(case_name: str, seed: int) -> dict:
    if case_name == "wscc9":
        return {"simplified": experiments.wscc9_seed(seed, SIMPLIFIED), "full": experiments.wscc9_seed(seed, FULL)}
    if case_name == "ieee39":
        return {
            "localization": experiments.ieee39_localization_seed(seed),
            "damping": experiments.ieee39_damping_seed(seed),
            "spectral": experiments.ieee39_spectral_seed(seed),
        }
    raise ConfigError(f"pipeline knows the shipped cases wscc9 and ieee39, not {case_name!r}")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GRIDSENSE_THREADS", "1")))
    except ValueError:
        raise ConfigError("GRIDSENSE_THREADS must be an integer") from None


def _summarize(case_name: str, results: list[dict]) -> dict:
    mean = lambda xs: float(np.mean(xs))  # noqa: E731
    if case_name == "wscc9":
        s = [r["simplified"] for r in results]
        f = [r["full"] for r in results]
        return {
            "pre_jacobian_error": mean([r["pre_jacobian_error"] for r in s]),
            "pre_state_matrix_error": mean([r["pre_state_matrix_error"] for r in s]),
            "post_model_vs_true": mean([r["post_model_vs_true"] for r in f]),
            "post_estimated_vs_true_full": mean([r["post_estimated_vs_true"] for r in f]),
            "post_estimated_vs_true_simplified": mean([r["post_estimated_vs_true"] for r in s]),
            "seeds_alarmed": sum(bool(r["alarms"]) for r in s),
        }
    loc = [r["localization"] for r in results]
    dmp = [r["damping"] for r in results]
    spc = [r["spectral"] for r in results]
    err = np.array([d["relative_error"] for d in dmp])
    return {
        "model_vs_true": mean([r["model_vs_true"] for r in loc]),
        "estimated_vs_true": mean([r["estimated_vs_true"] for r in loc]),
        "localized_1_and_8": sum(set(r["ranking"][:2]) == {1, 8} for r in loc),
        "damping_table": [
            {"machine": k + 1, "actual": dmp[0]["actual"][k], "estimated_mean": mean([d["estimated"][k] for d in dmp]),
             "relative_error_mean": float(err[:, k].mean())}
            for k in range(err.shape[1])
        ],
        "rightmost_relative_error": mean([r["relative_error"] for r in spc]),
    }


def cmd_pipeline(cfg: ScenarioConfig) -> dict:
    _case(cfg.case)  # fail early on a bad path
    name = Path(cfg.case).stem
    if name not in ("wscc9", "ieee39"):
        raise ConfigError(f"pipeline knows the shipped cases wscc9 and ieee39, not {cfg.case!r}")
    out = _out_dir(cfg.out)
    workers = min(_threads(), len(cfg.seeds))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_pipeline_seed, [name] * len(cfg.seeds), cfg.seeds))
    else:
        results = [_pipeline_seed(name, s) for s in cfg.seeds]
    for seed, res in zip(cfg.seeds, results):
        write_json(res, _out_dir(str(out / f"seed{seed}")) / "report.json")
    summary = _provenance(cfg, seeds=cfg.seeds, summary=_summarize(name, results))
    write_json(summary, out / "summary.json")
    return summary


# ---------------------------------------------------------------- argparse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridsense", description="Ambient-data Jacobian and state-matrix estimation.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, series=False, series_required=False):
        sp.add_argument("--case", default="wscc9", help="case file or shipped case name (wscc9, ieee39)")
        sp.add_argument("--frame", default=None, help="plain | coi | coi:K | ref:K (K is a 1-based machine)")
        sp.add_argument("--method", default=SIMPLIFIED, choices=METHODS)
        sp.add_argument("--window", type=float, default=None, help="window length in seconds")
        sp.add_argument("--noise-std", type=float, default=0.0,
                        help="measurement noise std (simulate: added; estimate: variance subtracted)")
        sp.add_argument("--sigma", type=float, default=0.01, help="load noise std per machine")
        sp.add_argument("--out", default=".")
        if series:
            sp.add_argument("--series", required=series_required, default=None)

    sp = sub.add_parser("simulate", help="write an ambient series and its events")
    common(sp)
    sp.add_argument("--duration", type=float, default=500.0)
    sp.add_argument("--dt", type=float, default=0.001)
    sp.add_argument("--rate", type=float, default=10.0)
    sp.add_argument("--trip", action="append", default=[], help="T:LINES, e.g. 500:5-7 (repeatable)")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--seeds", default=None, help="A..B or comma list")

    sp = sub.add_parser("estimate", help="estimate the Jacobian (and state matrix) from a series")
    common(sp, series=True, series_required=True)
    sp.add_argument("--observed", default=None, help="comma list of machine labels")
    sp.add_argument("--inertia", default=None, help="comma list of M when no case is given")
    sp.add_argument("--no-case", action="store_true", help="estimate without a network case")

    sp = sub.add_parser("detect", help="moving-window topology-change scan")
    common(sp, series=True, series_required=True)
    sp.add_argument("--stride", type=float, default=1.0)
    sp.add_argument("--threshold", type=float, default=None, help="fixed threshold; negative to calibrate")

    sp = sub.add_parser("spectral", help="model-based and estimated spectra")
    common(sp, series=True)
    sp.add_argument("--trip", action="append", default=[], help="lines open in the model, e.g. 0:2-25,1-39")

    sp = sub.add_parser("damping", help="per-machine damping from speed covariances")
    common(sp, series=True, series_required=True)

    sp = sub.add_parser("pipeline", help="reference experiments over a seed list")
    common(sp)
    sp.add_argument("--seeds", default="0..9")
    return p


def _config(args) -> ScenarioConfig:
    seeds = [0]
    if getattr(args, "seeds", None) is not None:
        seeds = parse_seeds(args.seeds)
    elif getattr(args, "seed", None) is not None:
        seeds = [args.seed]
    cfg = ScenarioConfig(
        case=args.case,
        frame=args.frame or "coi",
        duration=getattr(args, "duration", 500.0),
        dt=getattr(args, "dt", 0.001),
        sigma=args.sigma,
        rate=getattr(args, "rate", 10.0),
        trips=[parse_trip(t) for t in getattr(args, "trip", [])],
        noise_std=args.noise_std,
        method=args.method,
        window=args.window,
        stride=getattr(args, "stride", 1.0),
        threshold=getattr(args, "threshold", None),
        out=args.out,
        seeds=seeds,
    )
    cfg.validate()
    return cfg


def _emit(doc: dict, path: Path | None) -> None:
    text = dumps(doc)
    if path is not None:
        path.write_text(text + "\n")
    sys.stdout.write(text + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "estimate":
            if args.no_case:
                cfg.case = ""
            doc = cmd_estimate(cfg, args.series, _parse_list(args.observed, int), _parse_list(args.inertia),
                               args.frame)
            _emit(doc, _out_dir(cfg.out) / "estimate.json")
            return EXIT_OK
        if args.command == "detect":
            doc, alarm = cmd_detect(cfg, args.series, args.frame)
            _emit(doc, _out_dir(cfg.out) / "detect.json")
            return EXIT_ALARM if alarm else EXIT_OK
        if args.command == "spectral":
            _emit(cmd_spectral(cfg, args.series, args.frame), _out_dir(cfg.out) / "spectral.json")
            return EXIT_OK
        if args.command == "damping":
            _emit(cmd_damping(cfg, args.series, args.frame), _out_dir(cfg.out) / "damping.json")
            return EXIT_OK
        if args.command == "pipeline":
            _emit(cmd_pipeline(cfg), None)
            return EXIT_OK
    except (ConfigError, CaseFormatError, NotFoundError, ValueError) as exc:
        print(f"gridsense: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"gridsense: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GridsenseError as exc:
        print(f"gridsense: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    parser.error(f"unknown command {args.command}")
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
