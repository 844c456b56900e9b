"""Retransmission-bound analysis: exact formulas and Monte-Carlo experiments.

The retry chain walks sender/receiver pairs diagonally; a message is through
once both endpoints of a pair are correct.  Three facts are checked here:

* worst case: with full-omission faulty sets, no message ever needs more than
  u_s + u_r + 1 transmissions, and an adversarial contiguous placement makes
  some message need exactly that many;
* random placement: the probability that one random pair is faulty is below
  (alpha_r + alpha_s - 1) / (alpha_s * alpha_r) for replication factors
  alpha = (n-1)/u, which is 5/9 when n = 3f+1 on both sides;
* tail: the chance a message is still undelivered after q tries decays at
  least geometrically in that ratio, giving small universal retry budgets.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction

from .core import ConfigError
from .scheduler import retransmit_pair


@dataclass(frozen=True)
class BoundConfig:
    """Monte-Carlo setup: cluster sizes n = alpha*u + 1 per side, trial count."""

    n_s: int
    n_r: int
    u_s: int
    u_r: int
    trials: int = 100_000
    seed: int = 0

    @property
    def alpha_s(self) -> Fraction:
        return Fraction(self.n_s - 1, self.u_s)

    @property
    def alpha_r(self) -> Fraction:
        return Fraction(self.n_r - 1, self.u_r)


def faulty_pair_fraction(alpha_s, alpha_r) -> Fraction:
    """Upper bound on the fraction of (sender, receiver) pairs with a faulty end."""
    a_s, a_r = Fraction(alpha_s), Fraction(alpha_r)
    if a_s <= 1 or a_r <= 1:
        raise ConfigError("replication factors must exceed 1")
    return (a_r + a_s - 1) / (a_s * a_r)


def min_retries(p_fail: float, base) -> int:
    """Smallest q with base**q <= p_fail, by exact rational arithmetic."""
    if not 0 < p_fail <= 1:
        raise ConfigError("p_fail must be in (0, 1]")
    b = Fraction(base)
    if not 0 < b < 1:
        raise ConfigError("base must be in (0, 1)")
    target = Fraction(p_fail)
    q = 0
    power = Fraction(1)
    while power > target:
        power *= b
        q += 1
    return q


def attempts_for(orig_sender: int, orig_receiver: int,
                 faulty_s: set[int], faulty_r: set[int],
                 n_s: int, n_r: int) -> int:
    """Transmissions until the retry walk reaches a correct-correct pair."""
    for t in range(n_s * n_r + 1):
        s, r = retransmit_pair(orig_sender, orig_receiver, t, n_s, n_r)
        if s not in faulty_s and r not in faulty_r:
            return t + 1
    raise AssertionError("no correct pair found; faulty sets exceed budgets")


def contiguous_placement(u_s: int, u_r: int) -> tuple[set[int], set[int]]:
    """The adversarial placement that maximizes attempts for message 0:
    faulty senders first on the walk, then faulty receivers."""
    return set(range(u_s)), set(range(u_s, u_s + u_r))


def exhaustive_max_attempts(n_s: int, n_r: int, u_s: int, u_r: int) -> int:
    """Max transmissions over every faulty placement and every original pair."""
    worst = 0
    for fs in itertools.combinations(range(n_s), u_s):
        for fr in itertools.combinations(range(n_r), u_r):
            faulty_s, faulty_r = set(fs), set(fr)
            for s0 in range(n_s):
                for r0 in range(n_r):
                    worst = max(worst, attempts_for(s0, r0, faulty_s, faulty_r,
                                                    n_s, n_r))
    return worst


def monte_carlo_tail(config: BoundConfig) -> dict[int, int]:
    """Histogram of transmissions per message under random faulty placement.

    Each trial places u_s and u_r full-omission faulty replicas uniformly at
    random (the randomized identifier assignment seen from the walk's frame)
    and a uniformly random original pair, then runs the retry walk.
    """
    rng = random.Random(config.seed)
    histogram: dict[int, int] = {}
    senders = range(config.n_s)
    receivers = range(config.n_r)
    for _ in range(config.trials):
        faulty_s = set(rng.sample(senders, config.u_s))
        faulty_r = set(rng.sample(receivers, config.u_r))
        s0 = rng.randrange(config.n_s)
        r0 = rng.randrange(config.n_r)
        attempts = attempts_for(s0, r0, faulty_s, faulty_r, config.n_s, config.n_r)
        histogram[attempts] = histogram.get(attempts, 0) + 1
    return histogram


def tail_fraction(histogram: dict[int, int], q: int) -> float:
    """Empirical P(attempts > q)."""
    total = sum(histogram.values())
    over = sum(c for a, c in histogram.items() if a > q)
    return over / total if total else 0.0


def histogram_csv(histogram: dict[int, int]) -> str:
    total = sum(histogram.values())
    lines = ["attempts,count,fraction"]
    for attempts in sorted(histogram):
        count = histogram[attempts]
        lines.append("%d,%d,%.6f" % (attempts, count, count / total))
    return "\n".join(lines) + "\n"
