"""Cross-cluster reliable broadcast with cumulative quorum acknowledgments.

A sending replicated cluster streams committed messages to a receiving
cluster with a single cross-cluster copy per message in the failure-free
case.  Receivers return cumulative acks; u+1 share of matching acks forms a
quorum ack proving a correct receiver holds the prefix, while r+1 repeated
acks from distinct receivers elect exactly one retransmitter for the next
missing message.  Stake-weighted clusters schedule senders and receivers by
largest-remainder apportionment over a smooth weighted rotation.

The package ships a deterministic discrete-event simulator with adversary
models and baseline protocols, plus analytic and Monte-Carlo checks of the
retransmission bounds.
"""

from .core import (
    AckReport,
    Certificate,
    CommittedMessage,
    ConfigError,
    MetricRecord,
    RsmConfig,
    make_certificate,
    parse_ack,
    verify_certificate,
)
from .node import PicsouNode, Wire
from .receiver import ADVANCE, FETCH, AckBuffer, apply_gc_hint
from .scheduler import (
    IdAssignment,
    Quantum,
    assign_ids,
    assign_receiver,
    assign_sender,
    build_quantum,
    dss_pair,
    hamilton_apportion,
    lcm_scale,
    retransmit_pair,
    smooth_schedule,
    weighted_retry_pair,
)
from .sender import PendingSend, QuackState, gc_collect, plan_resends
from .simnet import (
    AdversarySpec,
    Scenario,
    Trace,
    gc_stall_scenario,
    run,
    run_baseline,
)

__all__ = [
    "ADVANCE",
    "FETCH",
    "AckBuffer",
    "AckReport",
    "AdversarySpec",
    "Certificate",
    "CommittedMessage",
    "ConfigError",
    "IdAssignment",
    "MetricRecord",
    "PendingSend",
    "PicsouNode",
    "Quantum",
    "QuackState",
    "RsmConfig",
    "Scenario",
    "Trace",
    "Wire",
    "apply_gc_hint",
    "assign_ids",
    "assign_receiver",
    "assign_sender",
    "build_quantum",
    "dss_pair",
    "gc_collect",
    "gc_stall_scenario",
    "hamilton_apportion",
    "lcm_scale",
    "make_certificate",
    "parse_ack",
    "plan_resends",
    "retransmit_pair",
    "run",
    "run_baseline",
    "smooth_schedule",
    "verify_certificate",
    "weighted_retry_pair",
]
