"""
Frame-level simulation of distributed relay contention.

Every relay in the decoding subset starts a timer of ``base_time_us / |h|``
on its buffered channel prediction. The first timer to expire announces
itself; if the runner-up expires less than ``guard_us`` later the two
announcements overlap and the frame is a collision.

Each frame follows the pipeline: the relay fetches the prediction that was
buffered in the previous frame, contends on it, then estimates the current
channel and buffers the prediction for the next frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, TextIO

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class ContentionParams:
    base_time_us: float = 100.0
    guard_us: float = 0.005

    def __post_init__(self):
        if not self.base_time_us > 0:
            raise InvalidArgumentError("base_time_us must be > 0")
        if self.guard_us < 0:
            raise InvalidArgumentError("guard_us must be >= 0")


@dataclass(frozen=True)
class Event:
    frame: int
    relay: int
    kind: str
    time_us: float

    def line(self) -> str:
        relay = "-" if self.relay < 0 else str(self.relay)
        return f"{self.frame} {relay} {self.kind} {self.time_us:.6f}"


@dataclass
class ContentionResult:
    winner: int | None
    collision: bool
    timers_us: dict[int, float]
    events: list[Event] = field(default_factory=list)


def run_frame(buffered: Sequence[float], ds: Sequence[int],
              params: ContentionParams = ContentionParams(), frame: int = 0) -> ContentionResult:
    """Contention among ``ds`` on buffered channel magnitudes ``buffered``.

    An empty decoding subset gives ``winner=None`` without a collision.
    """
    values = np.abs(np.asarray(buffered, dtype=float))
    ds = [int(k) for k in ds]
    events: list[Event] = []
    if not ds:
        events.append(Event(frame, -1, "no_contention", 0.0))
        return ContentionResult(None, False, {}, events)
    if np.any(values[ds] <= 0):
        raise InvalidArgumentError("buffered values of contending relays must be > 0")
    timers = {k: params.base_time_us / values[k] for k in ds}
    for k in ds:
        events.append(Event(frame, k, "timer_start", 0.0))
    order = sorted(ds, key=lambda k: (timers[k], k))
    first = order[0]
    events.append(Event(frame, first, "timer_expire", timers[first]))
    if len(order) > 1:
        second = order[1]
        gap = timers[second] - timers[first]
        # exact ties always collide, even without a guard time
        if gap < params.guard_us or gap == 0:
            events.append(Event(frame, second, "timer_expire", timers[second]))
            events.append(Event(frame, -1, "collision", timers[second]))
            return ContentionResult(None, True, timers, events)
    events.append(Event(frame, first, "announce", timers[first]))
    for k in order[1:]:
        events.append(Event(frame, k, "timer_cancel", timers[first]))
    return ContentionResult(first, False, timers, events)


@dataclass
class FrameSchedule:
    frame: int
    sample: int
    decoding_subset: tuple[int, ...]
    buffered: np.ndarray
    source: str
    result: ContentionResult
    written: np.ndarray

    @property
    def winner(self) -> int | None:
        return self.result.winner


def run_pipeline(rd_traces, sr_snrs, target_rate: float, predictor: Callable, frames: int,
                 horizon: int, history: int, params: ContentionParams = ContentionParams(),
                 start: int | None = None) -> list[FrameSchedule]:
    """Run ``frames`` consecutive frames over ``(K, N)`` relay-destination traces.

    Frame ``t`` transmits at sample ``n_t = start + t * horizon``.
    ``predictor(windows)`` maps a ``(K, history)`` array of magnitudes ending
    at ``n_t`` to ``(K,)`` magnitudes ``horizon`` samples ahead; its output is
    buffered for frame ``t + 1``. Frame 0 has no buffer and contends on the
    outdated estimate ``|h[n_0 - horizon]|``. ``sr_snrs`` is ``(frames, K)``.
    """
    from .cooperative import decoding_subset

    traces = np.atleast_2d(np.asarray(rd_traces))
    K, N = traces.shape
    sr_snrs = np.asarray(sr_snrs, dtype=float)
    if sr_snrs.shape != (frames, K):
        raise InvalidArgumentError(f"sr_snrs must have shape ({frames}, {K})")
    if frames < 1 or horizon < 1 or history < 1:
        raise InvalidArgumentError("frames, horizon and history must be >= 1")
    if start is None:
        start = max(history - 1, horizon)
    if start - horizon < 0 or start + 1 < history:
        raise InvalidArgumentError("start leaves no room for the history window")
    last = start + (frames - 1) * horizon
    if last >= N:
        raise InvalidArgumentError(f"traces of {N} samples cannot cover {frames} frames")
    mags = np.abs(traces)
    schedules = []
    buffer = None
    for t in range(frames):
        n = start + t * horizon
        ds = decoding_subset(sr_snrs[t], target_rate)
        if buffer is None:
            buffered, source = mags[:, n - horizon].copy(), "outdated"
        else:
            buffered, source = buffer, "predicted"
        result = run_frame(buffered, ds, params, frame=t)
        lead = [Event(t, k, "rts_decode", 0.0) for k in ds]
        lead += [Event(t, k, "cts_receive", 0.0) for k in range(K)]
        lead += [Event(t, k, "buffer_fetch", 0.0) for k in ds]
        result.events[:0] = lead
        written = np.asarray(predictor(mags[:, n - history + 1:n + 1]), dtype=float)
        # a zero prediction would mean an infinite timer
        written = np.maximum(written, 1e-12)
        for k in range(K):
            result.events.append(Event(t, k, "predict_buffer", 0.0))
        schedules.append(FrameSchedule(t, n, ds, buffered, source, result, written))
        buffer = written
    return schedules


def write_event_log(schedules: Sequence[FrameSchedule], fh: TextIO) -> None:
    """One line per event: ``frame relay kind time_us``."""
    for sched in schedules:
        for ev in sched.result.events:
            fh.write(ev.line() + "\n")
