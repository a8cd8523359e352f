"""Deterministic, partially synchronous message layer.

A message sent at round r0 reaches every live recipient somewhere in
``[r0 + 1, max(r0, GST) + delta]``. Messages are never dropped or forged; the
only adversarial power is the choice of delay inside that window.
"""
from __future__ import annotations

import enum
import itertools
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence


class DelayPolicy(str, enum.Enum):
    UNIFORM = "uniform"
    WORST = "worst"
    EXHAUSTIVE = "exhaustive"


class CombinatorialBoundExceeded(ValueError):
    pass


# exhaustive mode is for small instances only
MAX_EXHAUSTIVE_N = 4
MAX_EXHAUSTIVE_EPOCHS = 4
MAX_EXHAUSTIVE_DELTA = 2


def check_exhaustive_bounds(n: int, epochs: int, delta: int) -> None:
    if n > MAX_EXHAUSTIVE_N or epochs > MAX_EXHAUSTIVE_EPOCHS or delta > MAX_EXHAUSTIVE_DELTA:
        raise CombinatorialBoundExceeded(
            f"exhaustive schedules need n<={MAX_EXHAUSTIVE_N}, epochs<={MAX_EXHAUSTIVE_EPOCHS}, "
            f"delta<={MAX_EXHAUSTIVE_DELTA}; got n={n}, epochs={epochs}, delta={delta}")


@dataclass(frozen=True)
class NetworkConfig:
    delta: int = 1
    gst: int = 0
    policy: DelayPolicy = DelayPolicy.WORST
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "policy", DelayPolicy(self.policy))
        if self.delta < 1:
            raise ValueError("network.delta must be >= 1")
        if self.gst < 0:
            raise ValueError("network.gst must be >= 0")

    def bound(self, r0: int) -> int:
        return max(r0, self.gst) + self.delta


@dataclass(frozen=True)
class Envelope:
    sender: int
    seq: int
    send_round: int
    recipient: int
    deliver_round: int
    message: object = field(compare=False, repr=False)


class Schedule:
    """Replays a fixed prefix of delay choices and records every decision point."""

    def __init__(self, prefix: Sequence[int] = ()):
        self.prefix = list(prefix)
        self.trace: list[tuple[int, int]] = []

    def choose(self, options: int) -> int:
        i = len(self.trace)
        c = self.prefix[i] if i < len(self.prefix) else 0
        if not 0 <= c < options:
            raise ValueError(f"choice {c} out of range {options} at decision {i}")
        self.trace.append((c, options))
        return c

    @property
    def choices(self) -> list[int]:
        return [c for c, _ in self.trace]


def explore_schedules() -> Iterator[Schedule]:
    """Depth-first enumeration of every delay assignment of a simulation.

    Yields a fresh ``Schedule``; the caller runs one full simulation with it
    before asking for the next. The number of decision points may depend on
    earlier choices, which plain ``itertools.product`` cannot express.
    """
    prefix: list[int] = []
    while True:
        s = Schedule(prefix)
        yield s
        t = s.trace
        j = len(t) - 1
        while j >= 0 and t[j][0] + 1 >= t[j][1]:
            j -= 1
        if j < 0:
            return
        prefix = [c for c, _ in t[:j]] + [t[j][0] + 1]


def exhaustive_schedules(config: NetworkConfig, send_rounds: Sequence[int], *, n: int = 1,
                         epochs: int = 1) -> Iterator[tuple[int, ...]]:
    """Every per-message delay assignment for messages sent at ``send_rounds``."""
    check_exhaustive_bounds(n, epochs, config.delta)
    ranges = [range(1, config.bound(r0) - r0 + 1) for r0 in send_rounds]
    return itertools.product(*ranges)


class Network:
    def __init__(self, config: NetworkConfig, n: int, schedule: Schedule | None = None,
                 shuffle_seed: int | None = None):
        if config.policy is DelayPolicy.EXHAUSTIVE and schedule is None:
            raise ValueError("exhaustive policy needs a schedule")
        self.config = config
        self.n = n
        self.schedule = schedule
        self._rng = random.Random(config.seed)
        # test hook: deliver each round's envelopes in a random order instead of the canonical one
        self._shuffle = None if shuffle_seed is None else random.Random(shuffle_seed)
        self._queue: dict[int, list[Envelope]] = defaultdict(list)
        self._seq = [0] * n
        self._sent: set[tuple[int, int, int]] = set()
        self.sent_by_round: dict[int, int] = defaultdict(int)
        self.delivered = 0
        self.violations: list[str] = []

    def broadcast(self, sender: int, r0: int, message, recipients: Iterable[int]) -> list[Envelope]:
        cfg = self.config
        lo, hi = r0 + 1, cfg.bound(r0)
        seq = self._seq[sender]
        self._seq[sender] += 1
        if cfg.policy is DelayPolicy.EXHAUSTIVE:
            fixed = lo + self.schedule.choose(hi - lo + 1)
        out = []
        for rcpt in recipients:
            if rcpt == sender:
                continue
            if cfg.policy is DelayPolicy.WORST:
                when = hi
            elif cfg.policy is DelayPolicy.UNIFORM:
                when = self._rng.randint(lo, hi)
            else:
                when = fixed
            env = Envelope(sender, seq, r0, rcpt, when, message)
            self._queue[when].append(env)
            self._sent.add((sender, seq, rcpt))
            out.append(env)
        self.sent_by_round[r0] += len(out)
        return out

    def step(self, r: int) -> list[Envelope]:
        """Envelopes due at round ``r`` in canonical (sender, seq, recipient) order."""
        due = self._queue.pop(r, [])
        due.sort(key=lambda e: (e.sender, e.seq, e.recipient))
        if self._shuffle is not None:
            self._shuffle.shuffle(due)
        for env in due:
            if env.deliver_round > self.config.bound(env.send_round):
                self.violations.append(f"late delivery {env}")
            if env.deliver_round < env.send_round + 1:
                self.violations.append(f"early delivery {env}")
            if (env.sender, env.seq, env.recipient) not in self._sent:
                self.violations.append(f"spontaneous message {env}")
        self.delivered += len(due)
        return due

    def pending(self) -> bool:
        return any(self._queue.values())

    @property
    def total_sent(self) -> int:
        return sum(self.sent_by_round.values())
