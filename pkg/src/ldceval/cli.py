"""Command-line entry point for the lane-departure evaluation pipeline.

Stages::

    ldceval synth-corpus --n 1000 --seed 7 --out run/corpus
    ldceval extract run/corpus/events.csv --out run/features
    ldceval fit run/features/features.csv --k-range 1..6 --out run/models
    ldceval evaluate --models run/models --n 200 --seed 7 --out run/eval --plot-data
    ldceval pipeline --n 1000 --seed 7 --out run          # all of the above

Every flag may also be given in a ``--config`` file (TOML or JSON, keys
spelled with underscores); command-line values win. Exit status is 0 on
success, 1 for usage errors, 2 for bad input data and 3 for numerical
failures.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .bgm import EmConfig, load_model, sample, save_model, select_components
from .config import config_hash, load_mapping, load_profile
from .controller import OFFSET_CONVENTIONS, PREVIEW_CONVENTIONS, run_controlled
from .errors import (
    DataOutsideBoxError,
    DegenerateComponentError,
    DegenerateGeometryError,
    MalformedEventError,
    SamplingError,
    SchemaError,
    VanishingBoxMassError,
)
from .evaluation import convergence_table, evaluate_batch, side_seed
from .features import FEATURE_NAMES, Side, extract_features, feature_bounds, filter_event
from .io import read_events, read_features, write_csv, write_events, write_features, write_trajectory
from .synthesis import generate_corpus
from .synthetic import ground_truth_model
from .vehicle import CONVENTIONS

log = logging.getLogger("ldceval")

DEFAULTS = {
    "seed": 0,
    "n": 1000,
    "side": "both",
    "k_range": "1..6",
    "T_s": None,
    "noise": True,
    "matrix_convention": "paper",
    "offset_convention": "paper",
    "preview_convention": "paper",
    "plot_data": False,
    "workers": 1,
    "profile": None,
    "bounds": None,
    "max_iter": 500,
    "tol": 1e-6,
    "sweep": None,
    "models": None,
    "model_left": None,
    "model_right": None,
    "model": None,
    "events": None,
}
# keys that never influence results and are kept out of the config hash
# (input files enter the hash through their content instead of their path)
_UNHASHED = {"out", "config", "workers", "command", "verbose", "input", "models", "model_left",
             "model_right", "model", "events", "profile"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def parse_k_range(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(k) for k in text]
    text = str(text)
    try:
        if ".." in text:
            a, b = text.split("..")
            ks = list(range(int(a), int(b) + 1))
        else:
            ks = [int(k) for k in text.split(",")]
    except ValueError:
        raise UsageError(f"bad --k-range {text!r}; use a..b or a comma list") from None
    if not ks or min(ks) < 1:
        raise UsageError(f"--k-range {text!r} must name positive component counts")
    return ks


def _sides(opt) -> list[Side]:
    if opt in ("both", None):
        return [Side.LEFT, Side.RIGHT]
    return [Side.parse(opt)]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML/JSON file mirroring the command-line flags")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--side", choices=("L", "R", "both"), help="which departure side(s) to process")
    p.add_argument("--profile", help="vehicle/controller profile (TOML/JSON); default: bundled profile")
    p.add_argument("--matrix-convention", choices=CONVENTIONS)
    p.add_argument("--offset-convention", choices=OFFSET_CONVENTIONS)
    p.add_argument("--preview-convention", choices=PREVIEW_CONVENTIONS)
    p.add_argument("--plot-data", action="store_const", const=True, help="write plot tables and figures")
    p.add_argument("--workers", type=int, help="worker processes for per-event simulation")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ldceval", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth-corpus", help="write a synthetic event corpus with its ground truth")
    _common(p)
    p.add_argument("--n", type=int, help="events per side")
    p.add_argument("--T-s", dest="T_s", type=float, help="sample time of the events (default 0.1 s)")
    p.add_argument("--no-noise", dest="noise", action="store_const", const=False)

    p = sub.add_parser("extract", help="events CSV -> features CSV")
    _common(p)
    p.add_argument("input", help="event CSV")

    p = sub.add_parser("fit", help="features CSV -> bounded mixture per side + BIC curve")
    _common(p)
    p.add_argument("input", help="feature CSV")
    p.add_argument("--k-range", help="candidate component counts, a..b or a,b,c")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("sample", help="draw feature vectors from a model")
    _common(p)
    p.add_argument("input", help="model JSON")
    p.add_argument("--n", type=int)

    p = sub.add_parser("simulate", help="controlled trajectories for events or model draws")
    _common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model", help="model JSON to generate events from")
    src.add_argument("--events", help="event CSV")
    p.add_argument("--n", type=int)
    p.add_argument("--T-s", dest="T_s", type=float)

    p = sub.add_parser("evaluate", help="Monte-Carlo comparison with and without the controller")
    _common(p)
    p.add_argument("--models", help="directory holding model_L.json / model_R.json")
    p.add_argument("--model-left")
    p.add_argument("--model-right")
    p.add_argument("--n", type=int, help="generated events per side")
    p.add_argument("--T-s", dest="T_s", type=float, help="simulation sample time (default: profile)")
    p.add_argument("--sweep", help="comma list of corpus sizes for a convergence sweep")
    p.add_argument("--no-noise", dest="noise", action="store_const", const=False)

    p = sub.add_parser("pipeline", help="synth-corpus -> extract -> fit -> evaluate")
    _common(p)
    p.add_argument("--n", type=int, help="corpus events per side (evaluation uses 200 per side)")
    p.add_argument("--k-range")
    p.add_argument("--sweep")
    return parser


def resolve(args: argparse.Namespace) -> SimpleNamespace:
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        doc = load_mapping(args.config)
        unknown = set(doc) - set(DEFAULTS) - {"out", "eval_n"}
        if unknown:
            raise UsageError(f"unknown config key(s): {sorted(unknown)}")
        opts.update(doc)
    opts.update({k: v for k, v in vars(args).items() if v is not None})
    if not opts.get("out"):
        raise UsageError("--out is required")
    return SimpleNamespace(**opts)


def provenance(opts: SimpleNamespace, command: str, extra: dict | None = None) -> dict:
    cfg = {k: v for k, v in vars(opts).items() if k not in _UNHASHED and v is not None}
    cfg["command"] = command
    cfg.update(extra or {})
    return {"seed": opts.seed, "config_hash": config_hash(cfg), "ldceval": __version__}


def _comment(prov: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in prov.items())


def _file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _write_json(path, doc) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def cmd_synth_corpus(opts) -> Path:
    out = Path(opts.out)
    T_s = opts.T_s or 0.1
    prov = provenance(opts, "synth-corpus")
    events, truth_rows = [], []
    manifest = {**prov, "n_per_side": opts.n, "T_s": T_s, "noise": opts.noise, "sides": {}}
    for side in _sides(opts.side):
        model = ground_truth_model(side)
        save_model(model, out / f"ground_truth_{side.value}.json")
        evs = generate_corpus(model, opts.n, T_s, side_seed(opts.seed, side), side=side, noise=opts.noise)
        events.extend(evs)
        truth_rows.extend((e.event_id, side.value, e.meta["xi"].to_array()) for e in evs)
        manifest["sides"][side.value] = {
            "model": f"ground_truth_{side.value}.json",
            "n_events": len(evs),
            "n_clamped_samples": int(sum(e.meta["n_clamped"] for e in evs)),
        }
    write_events(events, out / "events.csv", [_comment(prov)])
    write_features([r[0] for r in truth_rows], [r[1] for r in truth_rows],
                   np.array([r[2] for r in truth_rows]).reshape(-1, 8), out / "truth_features.csv", [_comment(prov)])
    _write_json(out / "manifest.json", manifest)
    log.info("wrote %d events to %s", len(events), out / "events.csv")
    return out / "events.csv"


def cmd_extract(opts) -> Path:
    out = Path(opts.out)
    events = read_events(opts.input)
    prov = provenance(opts, "extract", {"input_hash": _file_hash(opts.input)})
    ids, sides, feats, rejected = [], [], [], []
    wanted = {s.value for s in _sides(opts.side)}
    for ev in events:
        if ev.side.value not in wanted:
            continue
        decision = filter_event(ev)
        if not decision:
            rejected.append((ev.event_id, ev.side.value, decision.reason))
            continue
        try:
            xi = extract_features(ev)
        except DegenerateGeometryError as exc:
            rejected.append((ev.event_id, ev.side.value, f"degenerate: {exc}"))
            continue
        ids.append(ev.event_id)
        sides.append(ev.side.value)
        feats.append(xi.to_array())
    write_features(ids, sides, np.array(feats).reshape(-1, 8), out / "features.csv", [_comment(prov)])
    write_csv(out / "rejected.csv", ("event_id", "side", "reason"), rejected, [_comment(prov)])
    log.info("extracted %d feature vectors, rejected %d events", len(ids), len(rejected))
    return out / "features.csv"


def _bounds_for(features: np.ndarray, overrides) -> tuple[np.ndarray, np.ndarray]:
    lower, upper = feature_bounds(features)
    for name, pair in (overrides or {}).items():
        if name not in FEATURE_NAMES:
            raise UsageError(f"unknown feature {name!r} in bounds")
        j = FEATURE_NAMES.index(name)
        lo, hi = pair
        if lo is not None:
            lower[j] = lo
        if hi is not None:
            upper[j] = hi
    return lower, upper


def cmd_fit(opts) -> dict:
    out = Path(opts.out)
    ks = parse_k_range(opts.k_range)
    ids, sides, feats = read_features(opts.input)
    prov = provenance(opts, "fit", {"input_hash": _file_hash(opts.input)})
    cfg = EmConfig(max_iter=opts.max_iter, tol=opts.tol, seed=opts.seed)
    sides = np.array(sides)
    results = {}
    for side in _sides(opts.side):
        data = feats[sides == side.value]
        if len(data) == 0:
            log.warning("no %s-side features; skipping", side.value)
            continue
        bounds = _bounds_for(data, (opts.bounds or {}).get(side.value))
        best_k, curve = select_components(data, bounds, [k for k in ks if k <= len(data)], cfg)
        best = next(p for p in curve if p.K == best_k)
        model = best.model.with_meta(
            **prov, side=side.value, K=best_k, bic=best.bic, loglik=best.loglik,
            data_hash=hashlib.sha256(np.ascontiguousarray(data).tobytes()).hexdigest()[:16],
            feature_names=list(FEATURE_NAMES),
        )
        save_model(model, out / f"model_{side.value}.json")
        write_csv(out / f"bic_{side.value}.csv", ("K", "bic", "loglik", "n_params", "converged", "n_iter", "error"),
                  [(p.K, p.bic, p.loglik, p.n_params, p.converged, p.n_iter, p.error or "") for p in curve],
                  [_comment(prov)])
        if opts.plot_data:
            from .plotting import plot_bic_curve

            plot_bic_curve(curve, out / f"bic_{side.value}.png", f"{side.value} departures")
        log.info("side %s: best K=%d", side.value, best_k)
        results[side.value] = best_k
    return results


def cmd_sample(opts) -> Path:
    model = load_model(opts.input)
    prov = provenance(opts, "sample", {"input_hash": _file_hash(opts.input)})
    xs = sample(model, opts.n, opts.seed)
    if model.d != len(FEATURE_NAMES):
        raise SchemaError(f"{opts.input}: model has {model.d} dimensions, the feature table needs {len(FEATURE_NAMES)}")
    side = model.meta.get("side", "R")
    out = Path(opts.out) / "samples.csv"
    write_features([f"S-{opts.seed}-{i:05d}" for i in range(len(xs))], [side] * len(xs), xs, out, [_comment(prov)])
    return out


def cmd_simulate(opts) -> Path:
    vehicle, ctrl, sim = _profiles(opts)
    T_s = opts.T_s or sim.get("T_s", 0.05)
    if opts.events:
        events = read_events(opts.events)
        prov = provenance(opts, "simulate", {"input_hash": _file_hash(opts.events)})
    elif opts.model:
        model = load_model(opts.model)
        prov = provenance(opts, "simulate", {"input_hash": _file_hash(opts.model)})
        side = model.meta.get("side") or ("L" if model.means[:, 1].mean() < 0 else "R")
        events = generate_corpus(model, opts.n, T_s, opts.seed, side=side)
    else:
        raise UsageError("simulate needs --events or --model")
    out = Path(opts.out)
    rows = []
    for ev in events:
        traj = run_controlled(ev, vehicle, ctrl, T_s, matrix_convention=opts.matrix_convention,
                              offset_convention=opts.offset_convention)
        write_trajectory(traj, out / "trajectories" / f"{ev.event_id}.csv", [_comment(prov)])
        rows.append((ev.event_id, ev.side.value, traj.triggered, traj.t_s if traj.triggered else ""))
    write_csv(out / "simulations.csv", ("event_id", "side", "triggered", "t_s"), rows, [_comment(prov)])
    return out


def _profile_hash(opts) -> str | None:
    return _file_hash(opts.profile) if opts.profile else None


def _profiles(opts):
    vehicle, ctrl, sim = load_profile(opts.profile)
    if opts.preview_convention != ctrl.preview_convention:
        from dataclasses import replace

        ctrl = replace(ctrl, preview_convention=opts.preview_convention)
    return vehicle, ctrl, sim


def _load_models(opts) -> dict:
    paths = {}
    if opts.models:
        for s in ("L", "R"):
            p = Path(opts.models) / f"model_{s}.json"
            if p.exists():
                paths[s] = p
    if opts.model_left:
        paths["L"] = Path(opts.model_left)
    if opts.model_right:
        paths["R"] = Path(opts.model_right)
    wanted = {s.value for s in _sides(opts.side)}
    paths = {s: p for s, p in paths.items() if s in wanted}
    if not paths:
        raise FileNotFoundError("no model files found (use --models DIR or --model-left/--model-right)")
    return {s: load_model(p) for s, p in paths.items()}, {s: _file_hash(p) for s, p in paths.items()}


def cmd_evaluate(opts) -> Path:
    out = Path(opts.out)
    vehicle, ctrl, sim = _profiles(opts)
    T_s = opts.T_s or sim.get("T_s", 0.05)
    models, hashes = _load_models(opts)
    prov = provenance(opts, "evaluate", {"model_hashes": hashes, "profile": _profile_hash(opts)})
    kwargs = dict(vehicle=vehicle, ctrl=ctrl, T_s=T_s, seed=opts.seed, matrix_convention=opts.matrix_convention,
                  offset_convention=opts.offset_convention, noise=opts.noise, workers=opts.workers)
    extra = {**prov, "preview_convention": ctrl.preview_convention, "model_hashes": hashes}
    report = evaluate_batch(models, opts.n, config=extra, **kwargs)
    doc = report.to_dict()
    _write_json(out / "report.json", doc)
    conv = report.offset_convention
    write_csv(out / "report_events.csv",
              ("event_id", "side", "triggered", "t_start", "t_end", "S_uncontrolled", "S_controlled")
              + tuple(f"S_{a}_{c}" for c in OFFSET_CONVENTIONS for a in ("uncontrolled", "controlled")),
              [(r.event_id, r.side, r.triggered, "" if r.t_start is None else r.t_start, r.t_end,
                *(r.areas[conv] if r.triggered else ("", "")),
                *[x for c in OFFSET_CONVENTIONS for x in (r.areas[c] if c in r.areas else ("", ""))])
               for r in report.records],
              [_comment(prov)])
    if opts.sweep:
        n_values = [int(x) for x in str(opts.sweep).split(",")]
        reports = [report if n == opts.n else evaluate_batch(models, n, config=extra, **kwargs) for n in n_values]
        rows = convergence_table(reports)
        _write_json(out / "sweep.json", {**prov, "rows": rows})
        if opts.plot_data:
            write_csv(out / "plot_sweep.csv", ("n", "side", "arm", "n_triggered", "mean_S", "std_S", "stderr_S"),
                      [tuple("" if r[k] is None else r[k] for k in
                             ("n", "side", "arm", "n_triggered", "mean_S", "std_S", "stderr_S")) for r in rows],
                      [_comment(prov)])
            from .plotting import plot_sweep

            plot_sweep(rows, out / "plot_sweep.png")
    if opts.plot_data:
        _write_plot_data(report, models, out, prov, vehicle, ctrl, T_s, opts)
    summary = report.summary
    for side, agg in summary.items():
        if agg["comparison_defined"]:
            log.info("side %s: %d/%d triggered, S %.3f -> %.3f (%.2f%% reduction)", side, agg["n_triggered"],
                     agg["n_events"], agg["mean_S_uncontrolled"], agg["mean_S_controlled"], agg["reduction_percent"])
        else:
            log.info("side %s: no triggered events; comparison undefined", side)
    return out / "report.json"


def _write_plot_data(report, models, out, prov, vehicle, ctrl, T_s, opts) -> None:
    from .plotting import plot_area_bars, plot_trajectories

    rows = []
    for side, agg in report.summary.items():
        for arm in ("uncontrolled", "controlled"):
            rows.append((side, arm, agg["n_triggered"],
                         "" if agg[f"mean_S_{arm}"] is None else agg[f"mean_S_{arm}"],
                         "" if agg[f"std_S_{arm}"] is None else agg[f"std_S_{arm}"]))
    write_csv(out / "plot_area_bars.csv", ("side", "arm", "n_triggered", "mean_S", "std_S"), rows, [_comment(prov)])
    plot_area_bars(report.summary, out / "plot_area_bars.png")
    for side, model in models.items():
        evs = generate_corpus(model, 5, T_s, side_seed(opts.seed, side) + 1, side=side, noise=opts.noise)
        trajs = [run_controlled(e, vehicle, ctrl, T_s, matrix_convention=opts.matrix_convention,
                                offset_convention=opts.offset_convention) for e in evs]
        plot_trajectories(trajs, out / f"plot_trajectories_{side}.png")


def cmd_pipeline(opts) -> Path:
    root = Path(opts.out)
    base = vars(opts)
    corpus = cmd_synth_corpus(SimpleNamespace(**{**base, "out": root / "corpus"}))
    feats = cmd_extract(SimpleNamespace(**{**base, "input": str(corpus), "out": root / "features"}))
    cmd_fit(SimpleNamespace(**{**base, "input": str(feats), "out": root / "models"}))
    eval_n = base.get("eval_n") or 200
    return cmd_evaluate(SimpleNamespace(**{**base, "models": root / "models", "n": eval_n, "T_s": None,
                                           "out": root / "evaluation"}))


COMMANDS = {
    "synth-corpus": cmd_synth_corpus,
    "extract": cmd_extract,
    "fit": cmd_fit,
    "sample": cmd_sample,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve(args)
        if opts.n is not None and int(opts.n) < 0:
            raise UsageError("--n must be non-negative")
        COMMANDS[args.command](opts)
    except UsageError as exc:
        log.error("%s", exc)
        return 1
    except (VanishingBoxMassError, SamplingError, DegenerateComponentError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return 3
    except (SchemaError, MalformedEventError, DegenerateGeometryError, DataOutsideBoxError,
            OSError, json.JSONDecodeError) as exc:
        log.error("data error: %s", exc)
        return 2
    except ValueError as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
