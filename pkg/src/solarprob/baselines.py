"""Reference forecasters: complete-history and recent persistence
ensembles, and the Markov-chain mixture model."""
from __future__ import annotations

from dataclasses import dataclass
from datetime import timedelta
from typing import Sequence

import numpy as np

from solarprob.dist import EnsemblePrediction, PiecewiseUniformPrediction
from solarprob.errors import DegenerateRange, EmptyBucket, InsufficientHistory

PEEN_WINDOW = timedelta(hours=2)
PEEN_MIN_MEMBERS = 6
MCM_STATES = 30


def _slot_of(times, slot_minutes: int) -> np.ndarray:
    t = np.asarray(times, dtype="datetime64[m]")
    return ((t - t.astype("datetime64[D]")).astype(np.int64) // slot_minutes).astype(np.int64)


@dataclass(frozen=True)
class ChpModel:
    """Historical clearness-index values grouped by time-of-day slot."""

    slot_minutes: int
    buckets: dict  # slot index -> sorted tuple of k values

    def forecast(self, target_time) -> EnsemblePrediction:
        slot = int(_slot_of(np.atleast_1d(target_time), self.slot_minutes)[0])
        values = self.buckets.get(slot)
        if not values:
            raise EmptyBucket(f"no training data in time-of-day slot {slot}")
        return EnsemblePrediction(np.array(values))

    def has_slot(self, target_times) -> np.ndarray:
        slots = _slot_of(target_times, self.slot_minutes)
        return np.array([int(s) in self.buckets for s in slots], dtype=bool)

    def to_dict(self) -> dict:
        return {"slot_minutes": self.slot_minutes, "buckets": {str(k): list(v) for k, v in sorted(self.buckets.items())}}

    @classmethod
    def from_dict(cls, d: dict) -> "ChpModel":
        return cls(d["slot_minutes"], {int(k): tuple(v) for k, v in d["buckets"].items()})


def chp_fit(times, k, slot_minutes: int = 5) -> ChpModel:
    """Bucket every valid training clearness index by its time-of-day slot."""
    k = np.asarray(k, dtype=float)
    slots = _slot_of(times, slot_minutes)
    ok = np.isfinite(k)
    buckets = {}
    for slot in np.unique(slots[ok]):
        buckets[int(slot)] = tuple(np.sort(k[ok & (slots == slot)]).tolist())
    return ChpModel(slot_minutes, buckets)


def chp_forecast(model: ChpModel, target_time) -> EnsemblePrediction:
    return model.forecast(target_time)


def peen_forecast(
    times,
    k,
    issue_time,
    window: timedelta = PEEN_WINDOW,
    min_members: int = PEEN_MIN_MEMBERS,
) -> EnsemblePrediction:
    """Ensemble of the valid clearness-index values in ``(issue_time - window, issue_time]``.

    ``times`` must be sorted. NaN values (night, missing) are skipped.
    """
    times = np.asarray(times, dtype="datetime64[m]")
    k = np.asarray(k, dtype=float)
    end = np.datetime64(issue_time, "m")
    start = end - np.timedelta64(int(window.total_seconds() // 60), "m")
    lo = np.searchsorted(times, start, side="right")
    hi = np.searchsorted(times, end, side="right")
    members = k[lo:hi]
    members = members[np.isfinite(members)]
    if members.size < min_members:
        raise InsufficientHistory(f"{members.size} valid values in window, need {min_members}")
    return EnsemblePrediction(members)


def peen_members(times, k, issue_times, window: timedelta = PEEN_WINDOW) -> list[np.ndarray]:
    """Vector helper: the PeEn member set for each issue time."""
    times = np.asarray(times, dtype="datetime64[m]")
    k = np.asarray(k, dtype=float)
    ends = np.asarray(issue_times, dtype="datetime64[m]")
    starts = ends - np.timedelta64(int(window.total_seconds() // 60), "m")
    lo = np.searchsorted(times, starts, side="right")
    hi = np.searchsorted(times, ends, side="right")
    out = []
    for a, b in zip(lo, hi):
        v = k[a:b]
        out.append(v[np.isfinite(v)])
    return out


@dataclass(frozen=True, eq=False)
class McmModel:
    edges: np.ndarray
    transition: np.ndarray
    horizon_steps: int

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def state_of(self, k) -> np.ndarray:
        # uniform bins; values outside the training range clamp to the end states
        idx = np.searchsorted(self.edges, np.asarray(k, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.n_states - 1)

    def forecast(self, current_k: float) -> PiecewiseUniformPrediction:
        state = int(self.state_of(current_k))
        return PiecewiseUniformPrediction(self.edges, self.transition[state])

    def to_dict(self) -> dict:
        return {"edges": self.edges.tolist(), "transition": self.transition.tolist(), "horizon_steps": self.horizon_steps}

    @classmethod
    def from_dict(cls, d: dict) -> "McmModel":
        return cls(np.array(d["edges"]), np.array(d["transition"]), int(d["horizon_steps"]))


def mcm_fit(train_k: Sequence[float] | Sequence[Sequence[float]], n_states: int = MCM_STATES, horizon_steps: int = 1) -> McmModel:
    """Estimate the ``horizon_steps``-ahead transition matrix of a binned clearness index.

    ``train_k`` is one sequence or a list of sequences (one per day); pairs
    never cross sequence boundaries or NaN gaps.
    """
    if n_states < 2:
        raise ValueError("n_states must be at least 2")
    if horizon_steps < 1:
        raise ValueError("horizon_steps must be positive")
    if len(train_k) and np.ndim(train_k[0]) == 0:
        segments = [np.asarray(train_k, dtype=float)]
    else:
        segments = [np.asarray(s, dtype=float) for s in train_k]
    finite = np.concatenate([s[np.isfinite(s)] for s in segments]) if segments else np.array([])
    if finite.size == 0:
        raise ValueError("training sequence has no valid values")
    lo, hi = float(finite.min()), float(finite.max())
    if hi <= lo:
        raise DegenerateRange(f"training values span a zero-width range [{lo}, {hi}]")
    edges = np.linspace(lo, hi, n_states + 1)
    model = McmModel(edges, np.zeros((n_states, n_states)), horizon_steps)

    counts = np.zeros((n_states, n_states))
    for s in segments:
        if s.size <= horizon_steps:
            continue
        a, b = s[:-horizon_steps], s[horizon_steps:]
        ok = np.isfinite(a) & np.isfinite(b)
        np.add.at(counts, (model.state_of(a[ok]), model.state_of(b[ok])), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    transition = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / n_states)
    return McmModel(edges, transition, horizon_steps)


def mcm_forecast(model: McmModel, current_k: float) -> PiecewiseUniformPrediction:
    return model.forecast(current_k)
