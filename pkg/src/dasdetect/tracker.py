"""Spatio-temporal association of detections into tracks and alarms.

A track counts one qualifying detection per distinct time step; several
detections landing on the same track in the same step are kept on the
track but count once toward confirmation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .errors import DataError

PROB_CEILING = 1.0 - 1e-12


@dataclass(frozen=True)
class Detection:
    time_s: float
    position_m: float
    probability: float
    pipeline: str = "classic"

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise DataError(f"probability {self.probability} outside [0, 1]")
        if self.position_m < 0:
            raise DataError(f"position_m {self.position_m} is negative")


class TrackState(str, Enum):
    OPEN = "open"
    CONFIRMED = "confirmed"
    CLOSED = "closed"


@dataclass
class AlarmPolicy:
    radius_m: float = 5.0
    K: int = 90
    gap_tolerance_s: float = 3.0
    min_probability: float = 0.5

    def __post_init__(self):
        if self.K < 1:
            raise DataError("K must be >= 1")
        if self.radius_m <= 0:
            raise DataError("radius_m must be positive")

    @classmethod
    def classic(cls, **kw) -> "AlarmPolicy":
        return cls(**{"K": 90, "gap_tolerance_s": 3.0, **kw})

    @classmethod
    def image(cls, **kw) -> "AlarmPolicy":
        # one patch already spans 15 s; patches arrive every 7.5 s, so one
        # missed patch must not split a track
        return cls(**{"K": 1, "gap_tolerance_s": 15.0, **kw})


@dataclass
class Track:
    id: int
    detections: list = field(default_factory=list)
    centroid_m: float = 0.0
    state: TrackState = TrackState.OPEN
    confirmed_at: Optional[float] = None
    closed: bool = False

    @property
    def last_time(self) -> float:
        return self.detections[-1].time_s

    @property
    def steps(self) -> list:
        """Distinct detection times in order."""
        out = []
        for d in self.detections:
            if not out or d.time_s != out[-1]:
                out.append(d.time_s)
        return out

    @property
    def length(self) -> int:
        return len(self.steps)

    def add(self, det: Detection) -> None:
        n = len(self.detections)
        self.centroid_m = (self.centroid_m * n + det.position_m) / (n + 1)
        self.detections.append(det)


@dataclass(frozen=True)
class Confirmation:
    confirmed: bool
    time_s: Optional[float] = None


@dataclass(frozen=True)
class EventRecord:
    t_confirmed: float
    position_m: float
    probability: float
    pipeline: str
    track_length: int

    def to_json(self) -> str:
        return json.dumps({"t_confirmed": self.t_confirmed, "position_m": self.position_m,
                           "probability": self.probability, "pipeline": self.pipeline,
                           "track_length": self.track_length}, sort_keys=True)


def _det_key(d: Detection):
    return (d.position_m, d.probability, d.pipeline)


def associate(tracks: list, detections: Iterable[Detection], t: float, policy: AlarmPolicy,
              next_id: Optional[int] = None) -> list:
    """Fold the detections of time step ``t`` into ``tracks`` (in place).

    Tracks silent for longer than the gap tolerance are closed first. Each
    detection then joins the nearest open track within ``radius_m``; ties go
    to the longer track, then the lower centroid. Unmatched detections open
    new tracks. Returns ``tracks``.
    """
    for tr in tracks:
        if not tr.closed and t - tr.last_time > policy.gap_tolerance_s:
            tr.closed = True
            if tr.state is TrackState.OPEN:
                tr.state = TrackState.CLOSED
    open_tracks = [tr for tr in tracks if not tr.closed]
    nid = next_id if next_id is not None else (max((tr.id for tr in tracks), default=-1) + 1)
    for det in sorted(detections, key=_det_key):
        if det.time_s != t:
            raise DataError(f"detection at {det.time_s} s passed to step {t} s")
        best, best_key = None, None
        for tr in open_tracks:
            dist = abs(tr.centroid_m - det.position_m)
            if dist <= policy.radius_m:
                key = (dist, -len(tr.detections), tr.centroid_m)
                if best_key is None or key < best_key:
                    best, best_key = tr, key
        if best is None:
            best = Track(id=nid, centroid_m=det.position_m)
            nid += 1
            best.detections.append(det)
            tracks.append(best)
            open_tracks.append(best)
        else:
            best.add(det)
    return tracks


def confirm(track: Track, policy: AlarmPolicy) -> Confirmation:
    """Confirmed once ``K`` distinct steps accumulate with no oversize gap.

    The confirmation time is the time of the K-th step. A gap larger than
    the tolerance restarts the count.
    """
    run, prev = 0, None
    for t in track.steps:
        run = run + 1 if prev is not None and t - prev <= policy.gap_tolerance_s else 1
        prev = t
        if run >= policy.K:
            return Confirmation(True, t)
    return Confirmation(False)


def track_probability(track: Track) -> float:
    """``1 - prod(1 - p_i)`` over the track's detections, capped below 1."""
    if not track.detections:
        raise DataError("track has no detections")
    miss = math.prod(1.0 - d.probability for d in track.detections)
    return min(max(1.0 - miss, 0.0), PROB_CEILING)


def far_estimate(p_fp: float, K: int, sensors: int, horizon_s: float) -> float:
    """Expected count of false tracks reaching ``K`` consecutive hits.

    Counts run starts: each (sensor, second) begins a qualifying run with
    probability ``(1 - p) * p**K``.
    """
    if not 0.0 <= p_fp < 1.0:
        raise DataError("p_fp must be in [0, 1)")
    if K < 1:
        raise DataError("K must be >= 1")
    return sensors * horizon_s * (1.0 - p_fp) * p_fp ** K


class Tracker:
    """Streaming driver: feed one time step at a time, collect events."""

    def __init__(self, policy: AlarmPolicy, pipeline: str = "classic", keep_closed: bool = True):
        self.policy = policy
        self.pipeline = pipeline
        self.keep_closed = keep_closed
        self.tracks: list = []
        self.events: list = []
        self._next_id = 0
        self._t: Optional[float] = None

    def step(self, t: float, detections: Iterable[Detection]) -> list:
        if self._t is not None and t <= self._t:
            raise DataError(f"time steps must increase ({t} after {self._t})")
        self._t = t
        associate(self.tracks, detections, t, self.policy, next_id=self._next_id)
        if self.tracks:
            self._next_id = max(self._next_id, self.tracks[-1].id + 1)
        new = []
        for tr in self.tracks:
            if tr.closed or tr.state is TrackState.CONFIRMED or tr.last_time != t:
                continue
            c = confirm(tr, self.policy)
            if c.confirmed:
                tr.state = TrackState.CONFIRMED
                tr.confirmed_at = c.time_s
                new.append(EventRecord(t_confirmed=c.time_s, position_m=tr.centroid_m,
                                       probability=track_probability(tr), pipeline=self.pipeline,
                                       track_length=tr.length))
        if not self.keep_closed:
            self.tracks = [tr for tr in self.tracks if not tr.closed]
        new.sort(key=lambda e: (e.t_confirmed, e.position_m))
        self.events.extend(new)
        return new


def simulate_false_alarms(p_fp: float, K: int, sensors: int, horizon_s: int, seed: int = 0,
                          spacing_m: float = 10.0) -> int:
    """Monte-Carlo count of confirmed tracks from independent per-cell hits.

    Hits are Bernoulli(p_fp) per (sensor, second) and pass through the real
    associate/confirm machinery with strict consecutiveness (gap 1 s).
    ``spacing_m`` should exceed the association radius so neighbouring
    sensors stay independent.
    """
    rng = np.random.default_rng(seed)
    policy = AlarmPolicy(K=K, gap_tolerance_s=1.0, radius_m=5.0, min_probability=0.0)
    tracker = Tracker(policy, keep_closed=False)
    chunk = 10_000
    for lo in range(0, horizon_s, chunk):
        hits = rng.random((min(chunk, horizon_s - lo), sensors)) < p_fp
        for dt, row in enumerate(hits):
            t = float(lo + dt)
            idx = np.flatnonzero(row)
            if idx.size == 0 and not tracker.tracks:
                continue
            tracker.step(t, [Detection(t, float(s * spacing_m), 0.5) for s in idx])
    return len(tracker.events)


def write_events(events, destination) -> int:
    text = "".join(e.to_json() + "\n" for e in events)
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8") as fh:
            fh.write(text)
    return len(events)


def read_events(source) -> list:
    with open(source, encoding="utf-8") as fh:
        return [EventRecord(**json.loads(line)) for line in fh if line.strip()]
