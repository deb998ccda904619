"""CSV readers and writers for events, features and trajectories.

Files may start with ``#`` comment lines (provenance: schema, seed, config
hash); readers skip them. Numbers are written with ``repr`` so they round
trip exactly.
"""
from __future__ import annotations

import csv
import math
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import MalformedEventError, SchemaError
from .features import FEATURE_NAMES, DepartureEvent, Side, resample_uniform

EVENT_COLUMNS = ("event_id", "side", "t", "y", "v", "c")
FEATURE_COLUMNS = ("event_id", "side") + FEATURE_NAMES
TRAJECTORY_COLUMNS = ("t", "e_y", "e_y_dot", "e_psi", "e_psi_dot", "delta", "triggered")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows, comments=()) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path, required) -> tuple[list[dict], list[str]]:
    """Rows as dicts plus the comment lines; checks the required columns."""
    path = Path(path)
    comments = []
    with path.open(newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif line.strip():
                lines.append(line)
    if not lines:
        raise SchemaError(f"{path}: no header row")
    reader = csv.DictReader(lines)
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}; found {reader.fieldnames}")
    return list(reader), comments


def _float(row, col, lineno, path) -> float:
    try:
        val = float(row[col])
    except (TypeError, ValueError):
        raise SchemaError(f"{path}: row {lineno}, column {col!r}: not a number ({row[col]!r})") from None
    if not math.isfinite(val):
        raise SchemaError(f"{path}: row {lineno}, column {col!r}: non-finite value")
    return val


def check_schema(comments, expected: str, path) -> None:
    for line in comments:
        for token in line.split():
            if token.startswith("schema=") and token[7:] != expected:
                raise SchemaError(f"{path}: schema {token[7:]!r} does not match expected {expected!r}")


def write_events(events, path, comments=()) -> None:
    rows = []
    for ev in events:
        for t, y, v, c in zip(ev.t, ev.y, ev.v, ev.c):
            rows.append((ev.event_id, ev.side.value, t, y, v, c))
    write_csv(path, EVENT_COLUMNS, rows, ("schema=ldceval.events/1", *comments))


def read_events(path, resample: bool = True) -> list[DepartureEvent]:
    """Events grouped by ``event_id`` in file order.

    Records with non-uniform time steps are linearly resampled to a uniform
    grid with the same number of samples unless ``resample`` is false.
    """
    rows, comments = read_csv(path, EVENT_COLUMNS)
    check_schema(comments, "ldceval.events/1", path)
    groups: OrderedDict[str, dict] = OrderedDict()
    for i, row in enumerate(rows, start=2):
        g = groups.setdefault(row["event_id"], {"side": row["side"], "cols": ([], [], [], [])})
        if row["side"] != g["side"]:
            raise SchemaError(f"{path}: row {i}: event {row['event_id']!r} changes side")
        for store, col in zip(g["cols"], "tyvc"):
            store.append(_float(row, col, i, path))
    events = []
    for eid, g in groups.items():
        try:
            side = Side.parse(g["side"])
        except ValueError as exc:
            raise SchemaError(f"{path}: event {eid!r}: {exc}") from None
        ev = DepartureEvent(*g["cols"], side=side, event_id=eid)
        if resample:
            try:
                ev.spacing
            except MalformedEventError:
                ev = resample_uniform(ev)
        events.append(ev)
    return events


def write_features(ids, sides, features, path, comments=()) -> None:
    rows = [(i, Side.parse(s).value, *map(float, f)) for i, s, f in zip(ids, sides, np.atleast_2d(features))]
    write_csv(path, FEATURE_COLUMNS, rows, ("schema=ldceval.features/1", *comments))


def read_features(path) -> tuple[list[str], list[str], np.ndarray]:
    rows, comments = read_csv(path, FEATURE_COLUMNS)
    check_schema(comments, "ldceval.features/1", path)
    ids, sides, values = [], [], []
    for i, row in enumerate(rows, start=2):
        ids.append(row["event_id"])
        try:
            sides.append(Side.parse(row["side"]).value)
        except ValueError as exc:
            raise SchemaError(f"{path}: row {i}: {exc}") from None
        values.append([_float(row, c, i, path) for c in FEATURE_NAMES])
    return ids, sides, np.array(values, dtype=float).reshape(-1, len(FEATURE_NAMES))


def write_trajectory(traj, path, comments=()) -> None:
    """One controlled episode in the trajectory CSV layout.

    Untriggered episodes list the recorded offset with zero steering.
    """
    if traj.triggered:
        rows = [(t, *s, d, True) for t, s, d in zip(traj.t, traj.states, traj.delta)]
    else:
        rows = [(t, e, 0.0, 0.0, 0.0, 0.0, False) for t, e in zip(traj.t, traj.e_y_uncontrolled)]
    write_csv(path, TRAJECTORY_COLUMNS, rows, ("schema=ldceval.trajectory/1", *comments))
