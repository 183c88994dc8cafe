"""Turn raw cursor trajectories into normalized movement angles.

Pipeline: rescale (anchor the start point at the origin, scale to the
screen box) -> time_normalize (resample to a fixed number of steps) ->
project_atan2 (angles in [0, pi]) -> hemispace indicators.

Raw input is a CSV with header ``subject,trial,t,x,y``; the assembled
dataset serializes to a long CSV ``subject,trial,step,angle,u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_STEPS = 101
CLAMP_TOL = 1e-9

HALF_PI = 0.5 * math.pi


class MalformedInputError(ValueError):
    """Raised for unparseable or inconsistent input files."""


@dataclass(frozen=True)
class ScreenBounds:
    """Recording area, used only through its width and height."""

    width: float = 1.0
    height: float = 1.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("screen bounds must have positive width and height")


@dataclass(frozen=True)
class RawTrajectory:
    subject_id: int
    trial_id: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if not (t.shape == x.shape == y.shape) or t.ndim != 1:
            raise ValueError("t, x, y must be 1-d arrays of equal length")
        if t.size < 2:
            raise ValueError("a trajectory needs at least 2 samples")
        if not np.all(np.diff(t) > 0):
            raise ValueError(
                f"timestamps must be strictly increasing "
                f"(subject {self.subject_id}, trial {self.trial_id})"
            )
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n_samples(self) -> int:
        return self.t.size


@dataclass(frozen=True)
class NormalizedTrajectory:
    """Resampled path: exactly n points, starting at the origin."""

    subject_id: int
    trial_id: int
    points: np.ndarray  # (n, 2)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must be an (n, 2) array")
        if abs(pts[0, 0]) > 1e-12 or abs(pts[0, 1]) > 1e-12:
            raise ValueError("normalized path must start at the origin")
        object.__setattr__(self, "points", pts)


def rescale(raw: RawTrajectory, bounds: ScreenBounds = ScreenBounds()) -> RawTrajectory:
    """Anchor the first sample at the origin and scale to the screen box.

    x spans two units per screen width (so a centered start reaches
    [-1, 1]), y one unit per screen height.
    """
    x = 2.0 * (raw.x - raw.x[0]) / bounds.width
    y = (raw.y - raw.y[0]) / bounds.height
    return RawTrajectory(raw.subject_id, raw.trial_id, raw.t, x, y)


def time_normalize(path: RawTrajectory, n_steps: int = DEFAULT_STEPS,
                   mode: str = "index") -> NormalizedTrajectory:
    """Resample a path to exactly n_steps points by linear interpolation.

    mode "index" spaces query points uniformly over the sample index
    (the convention of common mouse-tracking tooling); mode "arclength"
    spaces them uniformly over cumulative path length.  Endpoints are
    preserved exactly either way.
    """
    if n_steps < 2:
        raise ValueError("need at least 2 output steps")
    n = path.n_samples
    if mode == "index":
        s = np.arange(n, dtype=float) / (n - 1)
    elif mode == "arclength":
        seg = np.hypot(np.diff(path.x), np.diff(path.y))
        total = seg.sum()
        if total == 0.0:
            s = np.arange(n, dtype=float) / (n - 1)
        else:
            s = np.concatenate([[0.0], np.cumsum(seg)]) / total
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    q = np.linspace(0.0, 1.0, n_steps)
    pts = np.column_stack([np.interp(q, s, path.x), np.interp(q, s, path.y)])
    pts[0] = (path.x[0], path.y[0])
    pts[-1] = (path.x[-1], path.y[-1])
    return NormalizedTrajectory(path.subject_id, path.trial_id, pts)


def project_atan2(traj: NormalizedTrajectory) -> np.ndarray:
    """Movement angles in [0, pi]; the origin maps to pi/2 by convention.

    Values marginally outside [0, pi] (floating-point noise) are clamped;
    anything beyond the tolerance means the path left the upper half-plane
    and is rejected.
    """
    pts = traj.points
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    ang[(pts[:, 0] == 0.0) & (pts[:, 1] == 0.0)] = HALF_PI
    low, high = ang.min(), ang.max()
    if low < -CLAMP_TOL or high > math.pi + CLAMP_TOL:
        bad = int(np.argmax((ang < -CLAMP_TOL) | (ang > math.pi + CLAMP_TOL)))
        raise ValueError(
            f"angle {ang[bad]:.6f} at step {bad} outside [0, pi] "
            f"(subject {traj.subject_id}, trial {traj.trial_id})"
        )
    return np.clip(ang, 0.0, math.pi)


def wrap_angle(angle):
    """Wrap to (-pi, pi]; values already in range pass through unchanged."""
    a = np.asarray(angle, dtype=float)
    out = a.copy()
    outside = (a <= -math.pi) | (a > math.pi)
    if np.any(outside):
        w = np.remainder(a[outside] + math.pi, 2.0 * math.pi) - math.pi
        w[w <= -math.pi] += 2.0 * math.pi
        out[outside] = w
    return out if out.ndim else float(out)


def hemispace_indicator(angle):
    """1 when the wrapped angle lies strictly in the left half-plane.

    The boundary pi/2 itself counts as the right (target) side so that
    the origin convention stays neutral.
    """
    w = wrap_angle(angle)
    u = (np.abs(np.asarray(w)) > HALF_PI).astype(np.int8)
    return u if u.ndim else int(u)


@dataclass(frozen=True)
class AngleDataset:
    """Angle array Y and hemispace indicators U, both (I, J, N).

    Preprocessed data lie in [0, pi]; simulated data may use the full
    circle (-pi, pi], and the indicator rule applies uniformly.
    """

    Y: np.ndarray
    U: np.ndarray
    subjects: np.ndarray
    trials: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        U = np.asarray(self.U, dtype=np.int8)
        subjects = np.asarray(self.subjects, dtype=int)
        trials = np.asarray(self.trials, dtype=int)
        if Y.ndim != 3 or Y.shape != U.shape:
            raise ValueError("Y and U must be (I, J, N) arrays of equal shape")
        if subjects.shape != (Y.shape[0],) or trials.shape != (Y.shape[1],):
            raise ValueError("index maps must match the array dimensions")
        if not np.all(np.isfinite(Y)):
            raise ValueError("angles must be finite")
        if Y.size and (Y.min() <= -math.pi or Y.max() > math.pi):
            raise ValueError("angles must lie in (-pi, pi]")
        if not np.array_equal(U, hemispace_indicator(Y)):
            raise ValueError("indicators inconsistent with the hemispace rule")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "trials", trials)

    @property
    def n_subjects(self) -> int:
        return self.Y.shape[0]

    @property
    def n_trials(self) -> int:
        return self.Y.shape[1]

    @property
    def n_steps(self) -> int:
        return self.Y.shape[2]


def build_dataset(trajectories, n_steps: int = DEFAULT_STEPS,
                  bounds: ScreenBounds = ScreenBounds(),
                  mode: str = "index") -> AngleDataset:
    """Run the full pipeline over raw trajectories and assemble the arrays.

    Every subject must supply every trial (the grid must be complete).
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise MalformedInputError("no trajectories supplied")
    subjects = sorted({tr.subject_id for tr in trajectories})
    trials = sorted({tr.trial_id for tr in trajectories})
    index = {(tr.subject_id, tr.trial_id): tr for tr in trajectories}
    if len(index) != len(trajectories):
        raise MalformedInputError("duplicate (subject, trial) pair in input")
    Y = np.empty((len(subjects), len(trials), n_steps))
    for i, sid in enumerate(subjects):
        for j, tid in enumerate(trials):
            tr = index.get((sid, tid))
            if tr is None:
                raise MalformedInputError(
                    f"missing trial {tid} for subject {sid}: "
                    "every subject must supply every trial"
                )
            norm = time_normalize(rescale(tr, bounds), n_steps, mode)
            Y[i, j] = project_atan2(norm)
    U = hemispace_indicator(Y)
    return AngleDataset(Y=Y, U=U, subjects=np.array(subjects), trials=np.array(trials))
