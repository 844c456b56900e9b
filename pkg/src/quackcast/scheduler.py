"""Assignment math: who sends what to whom, initially and on every retry.

Covers the equal-share rotation rules, the largest-remainder (Hamilton)
apportionment used for stake-proportional quotas, the smooth weighted
rotation that orders a quantum, LCM share scaling, and the retry walks
(plain modular walk for equal shares, scaled share-slot walk otherwise).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .core import ConfigError, RsmConfig


@dataclass(frozen=True)
class IdAssignment:
    """Bijection physical replica index -> logical protocol identifier."""

    to_logical: tuple[int, ...]

    def __post_init__(self) -> None:
        n = len(self.to_logical)
        if sorted(self.to_logical) != list(range(n)):
            raise ConfigError("identifier assignment is not a bijection")

    @property
    def to_physical(self) -> tuple[int, ...]:
        inv = [0] * len(self.to_logical)
        for phys, logical in enumerate(self.to_logical):
            inv[logical] = phys
        return tuple(inv)


def assign_ids(config: RsmConfig, permutation: list[int] | None = None) -> IdAssignment:
    """Derive the identifier permutation from the config seed.

    Passing ``permutation`` explicitly selects adversarial mode, used by
    worst-case experiments that want to control replica placement; it must
    be a bijection on 0..n-1.
    """
    if permutation is not None:
        return IdAssignment(tuple(permutation))
    rng = random.Random(config.id_seed)
    perm = list(range(config.node_count))
    rng.shuffle(perm)
    return IdAssignment(tuple(perm))


def assign_sender(seq: int, n_s: int) -> int:
    """Logical id of the replica that owns the original send of ``seq``."""
    return seq % n_s


def assign_receiver(seq: int, n_s: int, n_r: int) -> int:
    """Destination of the original send: sender l starts at receiver l and
    advances one receiver per subsequent send of its own."""
    return (seq % n_s + seq // n_s) % n_r


def retransmit_pair(orig_sender: int, orig_receiver: int, retry: int,
                    n_s: int, n_r: int) -> tuple[int, int]:
    """Deterministic retry pair: both sides advance by the retry count."""
    return (orig_sender + retry) % n_s, (orig_receiver + retry) % n_r


def hamilton_apportion(shares: list[int] | tuple[int, ...], q: int) -> list[int]:
    """Split ``q`` message slots across replicas proportionally to shares.

    Largest-remainder method with exact integer arithmetic: each replica gets
    the floor of its standard quota share_l * q / total, and the leftover
    slots go one each to the largest fractional remainders (ties broken by
    lowest id).  The result always sums to q and stays within 1 of the exact
    quota for every replica.
    """
    if q < 0:
        raise ConfigError("quantum size must be non-negative")
    if any(s < 1 for s in shares):
        raise ConfigError("all shares must be >= 1")
    if q == 0:
        return [0] * len(shares)
    total = sum(shares)
    quotas = [(s * q) // total for s in shares]
    remainders = [(s * q) % total for s in shares]
    leftover = q - sum(quotas)
    order = sorted(range(len(shares)), key=lambda l: (-remainders[l], l))
    for l in order[:leftover]:
        quotas[l] += 1
    return quotas


def smooth_schedule(quotas: list[int] | tuple[int, ...]) -> list[int]:
    """Order one quantum so each id's sends are spread, not bunched.

    Classic smooth weighted rotation: every slot each id gains its quota as
    credit, the highest credit (lowest id on ties) is scheduled and pays back
    the quota total.  Each id l appears exactly quotas[l] times.
    """
    total = sum(quotas)
    schedule: list[int] = []
    credit = [0] * len(quotas)
    for _ in range(total):
        for l, quota in enumerate(quotas):
            credit[l] += quota
        winner = max(range(len(quotas)), key=lambda l: (credit[l], -l))
        credit[winner] -= total
        schedule.append(winner)
    return schedule


@dataclass(frozen=True)
class Quantum:
    """A fixed-size block of send slots with per-replica quotas and ordering."""

    q: int
    quotas: tuple[int, ...]
    schedule: tuple[int, ...]


def build_quantum(shares: list[int] | tuple[int, ...], q: int) -> Quantum:
    quotas = hamilton_apportion(shares, q)
    return Quantum(q=q, quotas=tuple(quotas), schedule=tuple(smooth_schedule(quotas)))


def default_quantum_size(n_s: int, n_r: int) -> int:
    return max(n_s, n_r)


def dss_pair(seq: int, sender_quantum: Quantum, receiver_quantum: Quantum) -> tuple[int, int]:
    """Stake-proportional (sender, receiver) pair for stream position ``seq``.

    Both quanta must be built over the same q.  Quotas are recomputed
    identically per quantum, so with static shares the schedule is stationary
    and a single global seq -> slot map suffices.
    """
    if sender_quantum.q != receiver_quantum.q:
        raise ConfigError("sender and receiver quanta must share the same size")
    slot = seq % sender_quantum.q
    return sender_quantum.schedule[slot], receiver_quantum.schedule[slot]


def lcm_scale(delta_s: int, delta_r: int) -> tuple[int, int]:
    """Multiplicative share-scaling factors equalizing the two share totals.

    Applied only once failures are detected (first duplicate quorum ack), so
    the common case keeps its small quanta.
    """
    if delta_s < 1 or delta_r < 1:
        raise ConfigError("share totals must be >= 1")
    big = math.lcm(delta_s, delta_r)
    return big // delta_s, big // delta_r


def _slot_owner(prefix: list[int], slot: int) -> int:
    # prefix[i] = first slot of replica i; prefix[-1] = total
    lo, hi = 0, len(prefix) - 2
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if prefix[mid] <= slot:
            lo = mid
        else:
            hi = mid - 1
    return lo


def _prefix(shares: list[int]) -> list[int]:
    out = [0]
    for s in shares:
        out.append(out[-1] + s)
    return out


def weighted_retry_walk(orig_sender: int, orig_receiver: int,
                        scaled_s: list[int], scaled_r: list[int]) -> list[tuple[int, int]]:
    """One full lap of the retry chain over LCM-scaled share slots.

    Both scaled share vectors must total the same L.  The chain starts at the
    original replicas' first slots and advances both sides in lockstep; each
    retry consumes the overlap segment of the current sender and receiver
    slot ranges, so a retry's cost equals the smaller of the two scaled
    shares it pairs.  With equal shares this degrades to the plain modular
    walk.  The walk repeats after one lap (L slots).
    """
    total_s, total_r = sum(scaled_s), sum(scaled_r)
    if total_s != total_r:
        raise ConfigError("scaled share totals must match (apply lcm_scale first)")
    big = total_s
    pref_s, pref_r = _prefix(scaled_s), _prefix(scaled_r)
    anchor_s, anchor_r = pref_s[orig_sender], pref_r[orig_receiver]
    pairs: list[tuple[int, int]] = []
    offset = 0
    while offset < big:
        slot_s = (anchor_s + offset) % big
        slot_r = (anchor_r + offset) % big
        s = _slot_owner(pref_s, slot_s)
        r = _slot_owner(pref_r, slot_r)
        room_s = pref_s[s + 1] - slot_s
        room_r = pref_r[r + 1] - slot_r
        pairs.append((s, r))
        offset += min(room_s, room_r)
    return pairs


def weighted_retry_pair(orig_sender: int, orig_receiver: int, retry: int,
                        scaled_s: list[int], scaled_r: list[int]) -> tuple[int, int]:
    """The ``retry``-th pair of the scaled share-slot walk (retry 0 = original)."""
    lap = weighted_retry_walk(orig_sender, orig_receiver, scaled_s, scaled_r)
    return lap[retry % len(lap)]
