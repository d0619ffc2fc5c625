"""Readers and writers for the on-disk formats.

* ``sessions.jsonl``: one JSON object per line with ``session_id``,
  ``clicked_images``, ``intuition`` and ``true_label``.
* ``features.csv``: header ``image_id,f0,...,f{D-1}``; floats are written
  with ``repr`` so they read back bit-identically.
* trajectory CSV: ``t,arm,reward,cum_reward``.
* summary CSV: ``context,policy,cutoff,mean_acc,std_acc,n,best_other,p_vs_best_other``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from cfbandit.contexts import ImageFeatureTable, InvalidSession, SessionRecord
from cfbandit.replay import SummaryRow, Trajectory

SESSION_FIELDS = ("session_id", "clicked_images", "intuition", "true_label")
TRAJECTORY_HEADER = ("t", "arm", "reward", "cum_reward")
SUMMARY_HEADER = ("context", "policy", "cutoff", "mean_acc", "std_acc", "n",
                  "best_other", "p_vs_best_other")


class DataError(ValueError):
    """Malformed or inconsistent input file."""


def _fmt(x: float) -> str:
    return repr(float(x))


# -- sessions -----------------------------------------------------------------

def session_to_json(s: SessionRecord) -> str:
    return json.dumps({
        "session_id": s.session_id,
        "clicked_images": list(s.clicked_images),
        "intuition": int(s.intuition),
        "true_label": int(s.true_label),
    })


def write_sessions(path, sessions: Iterable[SessionRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sessions:
            fh.write(session_to_json(s) + "\n")


def _parse_session(obj, where: str) -> SessionRecord:
    if not isinstance(obj, dict):
        raise DataError(f"{where}: expected a JSON object")
    missing = [k for k in SESSION_FIELDS if k not in obj]
    if missing:
        raise DataError(f"{where}: missing field(s) {', '.join(missing)}")
    sid, imgs = obj["session_id"], obj["clicked_images"]
    if not isinstance(sid, str):
        raise DataError(f"{where}: session_id must be a string")
    if not isinstance(imgs, list) or not all(isinstance(i, str) for i in imgs):
        raise DataError(f"{where}: clicked_images must be an array of strings")
    for key in ("intuition", "true_label"):
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, int):
            raise DataError(f"{where}: {key} must be an integer")
    try:
        return SessionRecord(sid, tuple(imgs), obj["intuition"], obj["true_label"])
    except InvalidSession as err:
        raise DataError(f"{where}: {err}") from None


def read_sessions(path, num_arms: int | None = None) -> list[SessionRecord]:
    """Parse a sessions file; errors carry ``path:line``. Blank lines are
    skipped. Labels are range-checked when ``num_arms`` is given."""
    sessions, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise DataError(f"{where}: invalid JSON ({err.msg})") from None
            s = _parse_session(obj, where)
            if s.session_id in seen:
                raise DataError(f"{where}: duplicate session_id {s.session_id!r}")
            if num_arms is not None:
                try:
                    s.check_labels(num_arms)
                except InvalidSession as err:
                    raise DataError(f"{where}: {err}") from None
            seen.add(s.session_id)
            sessions.append(s)
    if not sessions:
        raise DataError(f"{path}: no sessions")
    return sessions


# -- features -----------------------------------------------------------------

def write_features(path, table: ImageFeatureTable) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id"] + [f"f{j}" for j in range(table.feature_dim)])
        for image_id, vec in table.rows.items():
            w.writerow([image_id] + [_fmt(v) for v in vec])


def read_features(path) -> ImageFeatureTable:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "image_id":
            raise DataError(f"{path}:1: header must start with image_id")
        dim = len(header) - 1
        if dim < 1 or header[1:] != [f"f{j}" for j in range(dim)]:
            raise DataError(f"{path}:1: feature columns must be f0..f{{D-1}}")
        rows: dict[str, np.ndarray] = {}
        for row in reader:
            where = f"{path}:{reader.line_num}"
            if not row:
                continue
            if len(row) != dim + 1:
                raise DataError(f"{where}: expected {dim + 1} fields, got {len(row)}")
            image_id = row[0]
            if image_id in rows:
                raise DataError(f"{where}: duplicate image_id {image_id!r}")
            try:
                vec = np.array([float(v) for v in row[1:]])
            except ValueError as err:
                raise DataError(f"{where}: {err}") from None
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{where}: non-finite feature value")
            rows[image_id] = vec
    if not rows:
        raise DataError(f"{path}: no feature rows")
    return ImageFeatureTable(dim, rows)


def check_images_known(sessions: Sequence[SessionRecord], table: ImageFeatureTable) -> None:
    known = set(table.rows)
    for s in sessions:
        for img in s.clicked_images:
            if img not in known:
                raise DataError(f"session {s.session_id!r} references unknown image {img!r}")


# -- trajectories and summaries -------------------------------------------------

def write_trajectory(path, traj: Trajectory) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        w.writerows(traj.records())


def read_trajectory(path, policy: str = "") -> Trajectory:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != TRAJECTORY_HEADER:
            raise DataError(f"{path}:1: bad trajectory header")
        arms, rewards = [], []
        cum = 0
        for row in reader:
            where = f"{path}:{reader.line_num}"
            try:
                t, arm, reward, c = (int(v) for v in row)
            except ValueError:
                raise DataError(f"{where}: expected four integers") from None
            cum += reward
            if t != len(rewards) + 1 or reward not in (0, 1) or c != cum:
                raise DataError(f"{where}: inconsistent trajectory record")
            arms.append(arm)
            rewards.append(reward)
    return Trajectory(policy, np.array(arms, dtype=np.int64), np.array(rewards, dtype=np.int64))


def write_summary(path, rows: Iterable[SummaryRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            p = "" if r.p_vs_best_other is None else _fmt(r.p_vs_best_other)
            w.writerow([r.context, r.policy, r.cutoff, _fmt(r.mean_acc), _fmt(r.std_acc),
                        r.n, r.best_other, p])


def read_summary(path) -> list[SummaryRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != SUMMARY_HEADER:
            raise DataError(f"{path}:1: bad summary header")
        for row in reader:
            where = f"{path}:{reader.line_num}"
            if len(row) != len(SUMMARY_HEADER):
                raise DataError(f"{where}: expected {len(SUMMARY_HEADER)} fields")
            try:
                p = None if row[7] == "" else float(row[7])
                rows.append(SummaryRow(row[0], row[1], int(row[2]), float(row[3]),
                                       float(row[4]), int(row[5]), row[6], p))
            except ValueError as err:
                raise DataError(f"{where}: {err}") from None
            if not (0.0 <= rows[-1].mean_acc <= 1.0) or (p is not None and math.isnan(p)):
                raise DataError(f"{where}: value out of range")
    return rows


# -- manifest -------------------------------------------------------------------

def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def source_hash() -> str:
    """Digest of the package's own source files, to pin the code version."""
    h = hashlib.sha256()
    root = Path(__file__).resolve().parent
    for p in sorted(root.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as err:
        raise DataError(f"{path}:{err.lineno}: invalid JSON ({err.msg})") from None
    if not isinstance(obj, dict):
        raise DataError(f"{path}: expected a JSON object")
    return obj
