"""Bounded FIFO communication delays and stamped state buffers.

Every state broadcast at step ``s`` reaches a neighbor at ``s + delay`` with
``delay <= q``; arrivals that would overtake an earlier message are pushed
back so each directed link stays first-in-first-out.  Updates at step ``t``
read the stamp ``(t - d)^+`` with ``d = 2q + 1``: the lag budget covers one
transmission leg for the consensual states, one for the edge multipliers
built from them, and the update instant itself, so the required stamp has
always arrived.  Stamp 0 is pre-seeded in every buffer.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from . import ValidationError

_CHUNK = 4096


def d_from_q(q: int) -> int:
    """Staleness bound implied by a maximum link delay of ``q``."""
    if q < 0:
        raise ValidationError("maximum delay q must be non-negative")
    return 2 * int(q) + 1


def stamp_for_read(t: int, d: int) -> int:
    """Stamp targeted by the update at step ``t``: max(0, t - d)."""
    return max(0, int(t) - int(d))


class DelaySchedule:
    """Replayable per-link delay draws, bounded by ``q``.

    Modes: ``uniform`` draws each stamp's delay uniformly from {0..q} with a
    stream seeded by (seed, sender, receiver); ``constant`` uses a fixed
    value (default ``q``); ``table`` looks up a per-directed-link constant.
    """

    def __init__(self, q: int, mode: str = "uniform", seed: int = 0, value=None, table=None):
        if q < 0:
            raise ValidationError("maximum delay q must be non-negative")
        if mode not in ("uniform", "constant", "table"):
            raise ValidationError(f"unknown delay mode {mode!r}")
        self.q = int(q)
        self.mode = mode
        self.seed = int(seed)
        self.value = self.q if value is None else int(value)
        if mode == "constant" and not 0 <= self.value <= self.q:
            raise ValidationError("constant delay must lie in [0, q]")
        self.table = {} if table is None else {tuple(k): int(v) for k, v in table.items()}
        if mode == "table":
            for link, v in self.table.items():
                if not 0 <= v <= self.q:
                    raise ValidationError(f"table delay {v} for link {link} outside [0, q]")

    def stream(self, sender: int, receiver: int) -> "_DelayStream":
        """Stateful draw stream for one directed link (stamp order)."""
        return _DelayStream(self, sender, receiver)

    def delays(self, sender: int, receiver: int, n_stamps: int, start: int = 0) -> np.ndarray:
        """Delays for stamps ``start .. start + n_stamps - 1`` on one link."""
        stream = self.stream(sender, receiver)
        if start:
            stream.next(start)
        return stream.next(n_stamps)

    def delay(self, sender: int, receiver: int, stamp: int) -> int:
        return int(self.delays(sender, receiver, 1, start=stamp)[0])


class _DelayStream:
    """Successive per-stamp delay draws for one directed link."""

    def __init__(self, schedule: DelaySchedule, sender: int, receiver: int):
        self._schedule = schedule
        if schedule.mode == "constant":
            self._fixed = schedule.value
        elif schedule.mode == "table":
            self._fixed = schedule.table.get((sender, receiver), 0)
        elif schedule.q == 0:
            self._fixed = 0
        else:
            self._fixed = None
            self._rng = np.random.default_rng([schedule.seed, sender, receiver])

    def next(self, n: int) -> np.ndarray:
        if self._fixed is not None:
            return np.full(n, self._fixed, dtype=np.int64)
        return self._rng.integers(0, self._schedule.q + 1, size=n)


def deliver(schedule: DelaySchedule, sender: int, receiver: int, n_stamps: int) -> np.ndarray:
    """Arrival step of every stamp 0..n_stamps-1 on one directed link.

    Stamp 0 is pre-seeded (arrival 0).  Stamp ``s >= 1`` is sent at step
    ``s`` and arrives at ``s + delay``, delayed further when necessary so
    arrivals never overtake earlier stamps.
    """
    if n_stamps <= 0:
        return np.zeros(0, dtype=np.int64)
    raw = np.arange(n_stamps, dtype=np.int64) + schedule.delays(sender, receiver, n_stamps)
    if np.any(raw - np.arange(n_stamps) > schedule.q):
        raise ValidationError("delay schedule produced a delay above q")
    raw[0] = 0
    return np.maximum.accumulate(raw)


class StampedBuffer:
    """Ring of (stamp, value) pairs with strictly increasing stamps."""

    def __init__(self, retain: int):
        if retain < 1:
            raise ValidationError("buffer must retain at least one stamp")
        self.retain = int(retain)
        self._order = deque()
        self._values = {}

    def push(self, stamp: int, value) -> None:
        if self._order and stamp <= self._order[-1]:
            raise ValidationError(
                f"stamp {stamp} does not follow buffered stamp {self._order[-1]}"
            )
        self._order.append(stamp)
        self._values[stamp] = value
        while len(self._order) > self.retain:
            old = self._order.popleft()
            del self._values[old]

    def read(self, stamp: int):
        try:
            return self._values[stamp]
        except KeyError:
            raise ValidationError(f"stamp {stamp} not available in buffer") from None

    @property
    def stamps(self) -> tuple:
        return tuple(self._order)


class ChannelMonitor:
    """Streams arrivals for all directed links of a run and checks the two
    channel invariants: FIFO order and availability of the lagged stamp.

    ``worst_arrival(s)`` is the latest arrival of stamp ``s`` over all links,
    so ``worst_arrival((t - d)^+) <= t`` certifies that every read performed
    at step ``t`` was backed by a delivered message.
    """

    def __init__(self, links, schedule: DelaySchedule, d: int):
        self.links = list(links)
        self.schedule = schedule
        self.d = int(d)
        self._worst = np.zeros(0, dtype=np.int64)
        self._filled = 0
        self._streams = {link: schedule.stream(*link) for link in self.links}
        self._running_max = {link: 0 for link in self.links}
        self.repairs = 0
        self.checks = 0
        self.failures = 0

    def _extend(self, n_stamps: int) -> None:
        if n_stamps <= self._filled:
            return
        start = self._filled
        count = max(n_stamps - start, _CHUNK)
        stamps = np.arange(start, start + count, dtype=np.int64)
        block = stamps.copy()  # own state arrives when produced
        if start == 0:
            block[0] = 0
        for link in self.links:
            delays = self._streams[link].next(count)
            if np.any(delays > self.schedule.q):
                raise ValidationError("delay schedule produced a delay above q")
            raw = stamps + delays
            if start == 0:
                raw[0] = 0
            arr = np.maximum.accumulate(np.maximum(raw, self._running_max[link]))
            self.repairs += int(np.sum(arr != raw))
            self._running_max[link] = int(arr[-1])
            np.maximum(block, arr, out=block)
        self._worst = np.concatenate([self._worst, block])
        self._filled = start + count

    def worst_arrival(self, stamp: int) -> int:
        self._extend(stamp + 1)
        return int(self._worst[stamp])

    def check_read(self, t: int) -> bool:
        """Verify the stamp read at step ``t`` had arrived everywhere."""
        self.checks += 1
        ok = self.worst_arrival(stamp_for_read(t, self.d)) <= t
        if not ok:
            self.failures += 1
        return ok

    def check_steps(self, t_begin: int, t_end: int) -> bool:
        """Vectorized availability check for every step in [t_begin, t_end)."""
        if t_end <= t_begin:
            return True
        self._extend(t_end)
        ts = np.arange(t_begin, t_end, dtype=np.int64)
        stamps = np.maximum(ts - self.d, 0)
        bad = int(np.count_nonzero(self._worst[stamps] > ts))
        self.checks += t_end - t_begin
        self.failures += bad
        return bad == 0

    def report(self) -> dict:
        return {
            "links": len(self.links),
            "reads_checked": self.checks,
            "availability_failures": self.failures,
            "fifo_repairs": self.repairs,
            "availability_ok": self.failures == 0,
            "fifo_ok": True,  # arrivals are monotone by construction
        }


class LinkArrivals:
    """Full per-link arrival tables; used by the freshest-read mode."""

    def __init__(self, links, schedule: DelaySchedule, horizon: int):
        self.tables = {
            link: deliver(schedule, link[0], link[1], horizon + 2) for link in links
        }

    def freshest_stamp(self, sender: int, receiver: int, t: int) -> int:
        arr = self.tables[(sender, receiver)]
        return int(np.searchsorted(arr, t, side="right")) - 1
