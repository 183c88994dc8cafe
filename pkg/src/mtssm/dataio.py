"""CSV/JSON formats for datasets, draws, summaries, and run metadata.

All writers emit LF line endings and shortest-roundtrip float formatting,
so a rerun with the same configuration reproduces files byte for byte.
Nothing here writes timestamps.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .preprocess import AngleDataset, MalformedInputError, RawTrajectory


def fmt(value) -> str:
    """Shortest decimal string that round-trips the float exactly."""
    return repr(float(value))


def _open_reader(path):
    return open(path, newline="", encoding="utf-8")


def _check_header(header, required, path):
    if header is None:
        raise MalformedInputError(f"{path}: empty file")
    missing = [c for c in required if c not in header]
    if missing:
        raise MalformedInputError(f"{path}: missing column '{missing[0]}'")
    return {c: header.index(c) for c in header}


def load_raw_csv(path) -> list[RawTrajectory]:
    """Read raw trajectories from `subject,trial,t,x,y` rows."""
    groups: dict[tuple[int, int], list[tuple[float, float, float]]] = {}
    order: list[tuple[int, int]] = []
    with _open_reader(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        cols = _check_header(header, ["subject", "trial", "t", "x", "y"], path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                key = (int(row[cols["subject"]]), int(row[cols["trial"]]))
                sample = (
                    float(row[cols["t"]]),
                    float(row[cols["x"]]),
                    float(row[cols["y"]]),
                )
            except (ValueError, IndexError) as exc:
                raise MalformedInputError(f"{path}:{lineno}: malformed row ({exc})") from None
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(sample)
    out = []
    for key in order:
        arr = np.array(groups[key])
        try:
            out.append(RawTrajectory(key[0], key[1], arr[:, 0], arr[:, 1], arr[:, 2]))
        except ValueError as exc:
            raise MalformedInputError(f"{path}: {exc}") from None
    return out


def load_design_csv(path):
    """Read `trial,level,covariate` rows.

    Returns (trial_ids, levels, covariate) with covariate None when the
    column is absent or entirely empty.
    """
    trials, levels, xs = [], [], []
    with _open_reader(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        cols = _check_header(header, ["trial", "level"], path)
        has_x = "covariate" in cols
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                trials.append(int(row[cols["trial"]]))
                levels.append(int(row[cols["level"]]))
                if has_x:
                    cell = row[cols["covariate"]].strip() if len(row) > cols["covariate"] else ""
                    xs.append(float(cell) if cell else None)
            except (ValueError, IndexError) as exc:
                raise MalformedInputError(f"{path}:{lineno}: malformed row ({exc})") from None
    if not trials:
        raise MalformedInputError(f"{path}: no design rows")
    trial_ids = np.array(trials)
    if len(set(trials)) != len(trials):
        raise MalformedInputError(f"{path}: duplicate trial ids")
    covariate = None
    if has_x and any(v is not None for v in xs):
        if any(v is None for v in xs):
            raise MalformedInputError(f"{path}: covariate present for only some trials")
        covariate = np.array(xs, dtype=float)
    order = np.argsort(trial_ids)
    return (
        trial_ids[order],
        np.array(levels)[order],
        None if covariate is None else covariate[order],
    )


def write_dataset_csv(dataset: AngleDataset, path) -> None:
    """Long format `subject,trial,step,angle,u`, canonical row order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("subject,trial,step,angle,u\n")
        for i, sid in enumerate(dataset.subjects):
            for j, tid in enumerate(dataset.trials):
                for n in range(dataset.n_steps):
                    fh.write(
                        f"{sid},{tid},{n},{fmt(dataset.Y[i, j, n])},{int(dataset.U[i, j, n])}\n"
                    )


def read_dataset_csv(path) -> AngleDataset:
    """Inverse of write_dataset_csv."""
    cells: dict[tuple[int, int], dict[int, tuple[float, int]]] = {}
    with _open_reader(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        cols = _check_header(header, ["subject", "trial", "step", "angle", "u"], path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                sid = int(row[cols["subject"]])
                tid = int(row[cols["trial"]])
                step = int(row[cols["step"]])
                val = (float(row[cols["angle"]]), int(row[cols["u"]]))
            except (ValueError, IndexError) as exc:
                raise MalformedInputError(f"{path}:{lineno}: malformed row ({exc})") from None
            cells.setdefault((sid, tid), {})[step] = val
    if not cells:
        raise MalformedInputError(f"{path}: no data rows")
    subjects = sorted({k[0] for k in cells})
    trials = sorted({k[1] for k in cells})
    steps = {len(v) for v in cells.values()}
    if len(cells) != len(subjects) * len(trials) or len(steps) != 1:
        raise MalformedInputError(f"{path}: incomplete subject/trial/step grid")
    N = steps.pop()
    Y = np.empty((len(subjects), len(trials), N))
    U = np.empty((len(subjects), len(trials), N), dtype=np.int8)
    for i, sid in enumerate(subjects):
        for j, tid in enumerate(trials):
            series = cells[(sid, tid)]
            if sorted(series) != list(range(N)):
                raise MalformedInputError(
                    f"{path}: steps for subject {sid}, trial {tid} are not 0..{N - 1}"
                )
            for n in range(N):
                Y[i, j, n], U[i, j, n] = series[n]
    return AngleDataset(Y=Y, U=U, subjects=np.array(subjects), trials=np.array(trials))


def write_draws_csv(draws: np.ndarray, param_names, burn_in: int, path) -> None:
    """Kept draws in long format `chain,iter,param,value`."""
    chains, kept, d = draws.shape
    if len(param_names) != d:
        raise ValueError("parameter name count does not match draw dimension")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("chain,iter,param,value\n")
        for c in range(chains):
            for k in range(kept):
                for p, name in enumerate(param_names):
                    fh.write(f"{c},{burn_in + k},{name},{fmt(draws[c, k, p])}\n")


def read_draws_csv(path):
    """Returns (draws (chains, kept, d), param_names, first_iter)."""
    rows = []
    with _open_reader(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        cols = _check_header(header, ["chain", "iter", "param", "value"], path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append(
                    (
                        int(row[cols["chain"]]),
                        int(row[cols["iter"]]),
                        row[cols["param"]],
                        float(row[cols["value"]]),
                    )
                )
            except (ValueError, IndexError) as exc:
                raise MalformedInputError(f"{path}:{lineno}: malformed row ({exc})") from None
    if not rows:
        raise MalformedInputError(f"{path}: no draws")
    names = list(dict.fromkeys(r[2] for r in rows))
    chains = sorted({r[0] for r in rows})
    iters = sorted({r[1] for r in rows})
    lookup = {(r[0], r[1], r[2]): r[3] for r in rows}
    if len(lookup) != len(chains) * len(iters) * len(names):
        raise MalformedInputError(f"{path}: draws do not form a complete grid")
    draws = np.empty((len(chains), len(iters), len(names)))
    for ci, c in enumerate(chains):
        for ki, k in enumerate(iters):
            for p, name in enumerate(names):
                draws[ci, ki, p] = lookup[(c, k, name)]
    return draws, names, iters[0]


def write_summary_csv(summaries, path) -> None:
    """One row per parameter, mirroring the posterior-table layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("param,mean,q0.05,q0.975,rhat,hdpi_low,hdpi_high\n")
        for s in summaries:
            fh.write(
                f"{s.name},{fmt(s.mean)},{fmt(s.q05)},{fmt(s.q975)},"
                f"{fmt(s.rhat)},{fmt(s.hdpi[0])},{fmt(s.hdpi[1])}\n"
            )


def write_smoothed_csv(subjects, mean: np.ndarray, var: np.ndarray, path) -> None:
    """Smoothed latent states, `subject,step,z_mean,z_var`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("subject,step,z_mean,z_var\n")
        for i, sid in enumerate(subjects):
            for n in range(mean.shape[1]):
                fh.write(f"{sid},{n},{fmt(mean[i, n])},{fmt(var[i, n])}\n")


def write_pi_csv(subjects, trials, pi: np.ndarray, path) -> None:
    """Attraction-probability curves, `subject,trial,step,pi`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("subject,trial,step,pi\n")
        for i, sid in enumerate(subjects):
            for j, tid in enumerate(trials):
                for n in range(pi.shape[2]):
                    fh.write(f"{sid},{tid},{n},{fmt(pi[i, j, n])}\n")


def write_config(path, mapping: dict) -> None:
    """Plain key=value echo of every resolved option, sorted by key."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key in sorted(mapping):
            value = mapping[key]
            if isinstance(value, bool):
                text = str(value).lower()
            elif isinstance(value, float):
                text = fmt(value)
            elif value is None:
                text = ""
            else:
                text = str(value)
            fh.write(f"{key}={text}\n")


def write_json(path, obj) -> None:
    """Deterministic JSON sidecar (sorted keys, LF, trailing newline)."""

    def _default(o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(f"not JSON serializable: {type(o)!r}")

    with open(path, "w", newline="", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")
