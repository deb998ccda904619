"""Monte-Carlo comparison of departures with and without the controller.

For every generated event that triggers the controller, both arms are
scored by the time integral of |e_y| over the same window, from the
trigger sample to the end of the event. Events that never trigger are
counted but left out of the paired statistics.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bgm import BoundedGmm
from .controller import OFFSET_CONVENTIONS, ControllerParams, run_controlled
from .features import DepartureEvent, Side
from .synthesis import generate_corpus
from .vehicle import VehicleParams

REPORT_SCHEMA = "ldceval.report/1"


def departure_area(t, e_y, t_start: float | None = None, t_end: float | None = None) -> float:
    """Trapezoidal integral of |e_y| over ``[t_start, t_end]``.

    Window ends that fall between samples are filled by linear interpolation.
    """
    t = np.asarray(t, dtype=float)
    e_y = np.asarray(e_y, dtype=float)
    if t.size == 0:
        raise ValueError("empty trajectory")
    t_start = t[0] if t_start is None else float(t_start)
    t_end = t[-1] if t_end is None else float(t_end)
    if not t_start < t_end:
        raise ValueError(f"empty integration window [{t_start}, {t_end}]")
    tol = 1e-9 * max(1.0, abs(t_end))
    if t_start < t[0] - tol or t_end > t[-1] + tol:
        raise ValueError("samples do not cover the integration window")
    inner = (t > t_start) & (t < t_end)
    grid = np.concatenate([[t_start], t[inner], [t_end]])
    vals = np.abs(np.interp(grid, t, e_y))
    return float(np.trapezoid(vals, grid))


@dataclass(frozen=True)
class EventRecord:
    event_id: str
    side: str
    triggered: bool
    t_start: float | None
    t_end: float
    # offset convention -> (S_uncontrolled, S_controlled)
    areas: dict = field(default_factory=dict)

    def S(self, convention: str) -> tuple[float, float]:
        return self.areas[convention]


def evaluate_event(event: DepartureEvent, vehicle: VehicleParams, ctrl: ControllerParams,
                   T_s: float | None = None, matrix_convention: str = "paper",
                   offset_conventions=OFFSET_CONVENTIONS) -> EventRecord:
    areas = {}
    first = None
    for conv in offset_conventions:
        traj = run_controlled(event, vehicle, ctrl, T_s, matrix_convention=matrix_convention, offset_convention=conv)
        first = first or traj
        if traj.triggered and traj.t.size >= 2:
            areas[conv] = (departure_area(traj.t, traj.e_y_uncontrolled), departure_area(traj.t, traj.e_y))
    triggered = bool(areas)
    return EventRecord(event.event_id, event.side.value, triggered,
                       first.t_s if triggered else None, float(event.t[-1]), areas)


def _evaluate_star(args):
    return evaluate_event(*args)


def _std(x) -> float:
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def aggregate(records: list[EventRecord], convention: str) -> dict:
    """Per-arm means and spreads plus paired statistics for one side."""
    paired = [r.S(convention) for r in records if r.triggered and convention in r.areas]
    out = {"n_events": len(records), "n_triggered": len(paired), "comparison_defined": bool(paired)}
    if not paired:
        out.update({k: None for k in (
            "mean_S_uncontrolled", "std_S_uncontrolled", "mean_S_controlled", "std_S_controlled",
            "stderr_S_uncontrolled", "stderr_S_controlled", "reduction_percent",
            "mean_paired_reduction_percent", "mean_paired_difference", "std_paired_difference",
            "fraction_improved")})
        return out
    unc = np.array([p[0] for p in paired])
    ctl = np.array([p[1] for p in paired])
    diff = unc - ctl
    n = len(paired)
    mean_unc = float(unc.mean())
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(unc > 0, 100.0 * diff / unc, np.nan)
    out.update({
        "mean_S_uncontrolled": mean_unc,
        "std_S_uncontrolled": _std(unc),
        "mean_S_controlled": float(ctl.mean()),
        "std_S_controlled": _std(ctl),
        "stderr_S_uncontrolled": _std(unc) / math.sqrt(n),
        "stderr_S_controlled": _std(ctl) / math.sqrt(n),
        "reduction_percent": 100.0 * (mean_unc - float(ctl.mean())) / mean_unc if mean_unc > 0 else None,
        "mean_paired_reduction_percent": float(np.nanmean(rel)) if np.any(np.isfinite(rel)) else None,
        "mean_paired_difference": float(diff.mean()),
        "std_paired_difference": _std(diff),
        "fraction_improved": float(np.mean(ctl < unc)),
    })
    return out


@dataclass
class EvaluationReport:
    records: list[EventRecord]
    offset_convention: str
    by_convention: dict
    config: dict = field(default_factory=dict)

    @property
    def summary(self) -> dict:
        return self.by_convention[self.offset_convention]

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "config": self.config,
            "offset_convention": self.offset_convention,
            "summary": self.summary,
            "by_convention": self.by_convention,
            "events": [
                {**{k: v for k, v in asdict(r).items() if k != "areas"},
                 "areas": {c: {"S_uncontrolled": a[0], "S_controlled": a[1]} for c, a in r.areas.items()}}
                for r in self.records
            ],
        }


def evaluate_events(events_by_side: dict, vehicle: VehicleParams = VehicleParams(),
                    ctrl: ControllerParams = ControllerParams(), T_s: float | None = None, *,
                    matrix_convention: str = "paper", offset_convention: str = "paper",
                    workers: int = 1, config: dict | None = None) -> EvaluationReport:
    """Score given event lists (keyed by side) under every offset convention."""
    convs = (offset_convention,) + tuple(c for c in OFFSET_CONVENTIONS if c != offset_convention)
    sides = sorted(events_by_side, key=lambda s: Side.parse(s).value)
    jobs = [(ev, vehicle, ctrl, T_s, matrix_convention, convs) for s in sides for ev in events_by_side[s]]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_evaluate_star, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        records = [_evaluate_star(j) for j in jobs]
    by_conv = {}
    for conv in convs:
        by_conv[conv] = {
            Side.parse(s).value: aggregate([r for r in records if r.side == Side.parse(s).value], conv)
            for s in sides
        }
    return EvaluationReport(records, offset_convention, by_conv, dict(config or {}))


def evaluate_batch(models: dict, n_per_side: int, vehicle: VehicleParams = VehicleParams(),
                   ctrl: ControllerParams = ControllerParams(), T_s: float = 0.05, seed: int = 0, *,
                   matrix_convention: str = "paper", offset_convention: str = "paper",
                   noise: bool = True, workers: int = 1, config: dict | None = None) -> EvaluationReport:
    """Generate ``n_per_side`` events from each side's model and score them.

    Args:
        models: mapping from side (``"L"``/``"R"`` or :class:`Side`) to a fitted
            8-feature :class:`BoundedGmm`.
        seed: master seed; side ``s`` uses the corpus seed ``(seed, s)``.
        workers: process count for per-event simulation; results do not
            depend on it.
    """
    events = {}
    for side, model in models.items():
        side = Side.parse(side)
        events[side.value] = generate_corpus(model, n_per_side, T_s, side_seed(seed, side), side=side, noise=noise)
    cfg = {"n_per_side": n_per_side, "T_s": T_s, "seed": seed, "matrix_convention": matrix_convention,
           "noise": noise, **(config or {})}
    return evaluate_events(events, vehicle, ctrl, T_s, matrix_convention=matrix_convention,
                           offset_convention=offset_convention, workers=workers, config=cfg)


def side_seed(seed: int, side) -> int:
    """Corpus seed for one side derived from the master seed."""
    side = Side.parse(side)
    return int(np.random.SeedSequence([int(seed), ord(side.value)]).generate_state(1)[0])


def sweep_report(models: dict, n_values, **kwargs) -> list[EvaluationReport]:
    """One evaluation per corpus size, all from the same master seed."""
    n_values = list(n_values)
    if not n_values:
        raise ValueError("n_values is empty")
    return [evaluate_batch(models, n, **kwargs) for n in n_values]


def convergence_table(reports: list[EvaluationReport], convention: str | None = None) -> list[dict]:
    """Mean, spread and standard error of S per corpus size, side and arm."""
    rows = []
    for rep in reports:
        conv = convention or rep.offset_convention
        for side, agg in rep.by_convention[conv].items():
            for arm in ("uncontrolled", "controlled"):
                rows.append({
                    "n": agg["n_events"], "side": side, "arm": arm, "n_triggered": agg["n_triggered"],
                    "mean_S": agg[f"mean_S_{arm}"], "std_S": agg[f"std_S_{arm}"],
                    "stderr_S": agg[f"stderr_S_{arm}"],
                })
    return rows
