"""Experiment runner: scenario configs, bound calculations, canned repros.

Exit codes: 0 success, 1 configuration error, 2 liveness timeout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bounds, golden
from .core import ConfigError, RsmConfig
from .receiver import ADVANCE
from .scheduler import hamilton_apportion
from .simnet import (
    PICSOU,
    AdversarySpec,
    Scenario,
    gc_stall_scenario,
    run,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_TIMEOUT = 2


def _rsm_from_json(obj: dict, field: str, default_id: int) -> RsmConfig:
    if not isinstance(obj, dict):
        raise ConfigError("%s: expected an object" % field)
    try:
        nodes = int(obj["nodes"])
    except KeyError:
        raise ConfigError("%s.nodes: required" % field) from None
    shares = tuple(int(s) for s in obj.get("shares", [1] * nodes))
    try:
        u = int(obj["u"])
        r = int(obj["r"])
    except KeyError as exc:
        raise ConfigError("%s.%s: required" % (field, exc.args[0])) from None
    try:
        return RsmConfig(int(obj.get("rsm_id", default_id)), nodes, shares, u, r,
                         int(obj.get("id_seed", 0)))
    except ConfigError as exc:
        raise ConfigError("%s: %s" % (field, exc)) from None


def _adversary_from_json(obj: dict) -> dict[tuple[str, int], AdversarySpec]:
    out: dict[tuple[str, int], AdversarySpec] = {}
    for key, spec in obj.items():
        try:
            side, idx = key.split(":")
            idx = int(idx)
        except ValueError:
            raise ConfigError("adversary.%s: keys look like 's:0' or 'r:2'" % key) from None
        if not isinstance(spec, dict) or "kind" not in spec:
            raise ConfigError("adversary.%s.kind: required" % key)
        out[(side, idx)] = AdversarySpec(
            kind=spec["kind"],
            at_tick=int(spec.get("at_tick", 0)),
            mode=spec.get("mode", ""),
            positions=tuple(spec.get("positions", ())),
            target=int(spec.get("target", -1)),
            share_with=tuple(spec.get("share_with", ())),
        )
    return out


def scenario_from_json(obj: dict, seed_override: int | None = None) -> Scenario:
    """Build and validate a scenario from the JSON config structure."""
    for key in ("rsm_s", "rsm_r"):
        if key not in obj:
            raise ConfigError("%s: required" % key)
    links = obj.get("links", {})
    drops = {tuple(d) if not isinstance(d, list) else
             (int(d[0]), str(d[1]), int(d[2]), str(d[3]), int(d[4]))
             for d in links.get("drops", [])}
    scenario = Scenario(
        rsm_s=_rsm_from_json(obj["rsm_s"], "rsm_s", 0),
        rsm_r=_rsm_from_json(obj["rsm_r"], "rsm_r", 1),
        protocol=obj.get("protocol", PICSOU),
        messages=int(obj.get("messages", 8)),
        reverse_messages=int(obj.get("reverse_messages", 0)),
        phi=int(obj.get("phi", 8)),
        window=int(obj.get("window", 64)),
        quantum=obj.get("quantum"),
        send_interval=int(obj.get("send_interval", 2)),
        ack_interval=int(obj.get("ack_interval", 2)),
        latency=int(links.get("latency", 1)),
        adversary=_adversary_from_json(obj.get("adversary", {})),
        drops=drops,
        seed=int(obj["seed"]) if seed_override is None and "seed" in obj
        else (seed_override or 0),
        tick_cap=int(obj.get("tick_cap", 10_000)),
        gc_hints=bool(obj.get("gc_hints", True)),
        gc_mode=obj.get("gc_mode", ADVANCE),
        randomize_ids=bool(obj.get("randomize_ids", False)),
        payload_size=int(obj.get("payload_size", 8)),
    )
    scenario.validate()
    return scenario


def cmd_run(args: argparse.Namespace) -> int:
    try:
        obj = json.loads(Path(args.config).read_text())
        scenario = scenario_from_json(obj, args.seed)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    trace, metrics = run(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics.to_csv())
    if args.trace:
        (out / "trace.txt").write_text("\n".join(trace.lines()) + "\n")
    print("protocol=%s messages=%d copies_per_message=%.3f resends=%d "
          "delivered_all=%s trace_sha256=%s"
          % (scenario.protocol, scenario.messages, metrics.copies_per_message(),
             metrics.resend_count, metrics.delivered_all, trace.sha256()))
    return EXIT_TIMEOUT if metrics.liveness_timeout else EXIT_OK


def cmd_bounds(args: argparse.Namespace) -> int:
    if args.mc is not None:
        f, trials = args.mc
        if f < 1:
            print("bounds error: f must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        cfg = bounds.BoundConfig(n_s=3 * f + 1, n_r=3 * f + 1, u_s=f, u_r=f,
                                 trials=trials, seed=args.seed or 0)
        hist = bounds.monte_carlo_tail(cfg)
        csv = bounds.histogram_csv(hist)
        if args.out:
            Path(args.out).write_text(csv)
        print(csv, end="")
        analytic = bounds.faulty_pair_fraction(3, 3)
        for q in (1, 2, 4, 8):
            print("tail P(attempts>%d) = %.5f (analytic bound %.5f)"
                  % (q, bounds.tail_fraction(hist, q), float(analytic) ** q))
        return EXIT_OK
    try:
        ratio = bounds.faulty_pair_fraction(args.alpha_s, args.alpha_r)
        q = bounds.min_retries(args.pfail, ratio)
    except ConfigError as exc:
        print("bounds error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    print("faulty_pair_fraction=%s min_retries(p_fail=%g)=%d"
          % (ratio, args.pfail, q))
    return EXIT_OK


def _check(label: str, ok: bool, failures: list[str]) -> None:
    print("%s %s" % ("PASS" if ok else "FAIL", label))
    if not ok:
        failures.append(label)


def _repro_timeline(failures: list[str]) -> None:
    trace, metrics = run(golden.timeline_scenario())
    got = sorted((e.tick, e.node, e.position) for e in trace.select("QUACK"))
    _check("timeline: quack events match the canonical walkthrough",
           got == golden.TIMELINE_QUACKS, failures)
    _check("timeline: full trace matches the golden fingerprint",
           trace.sha256() == golden.TIMELINE_TRACE_SHA256, failures)
    _check("timeline: every message delivered everywhere",
           metrics.delivered_all, failures)


def _repro_crash(failures: list[str]) -> None:
    trace, metrics = run(golden.crash_m5_scenario())
    resends = trace.select("RESEND")
    _check("crash-m5: exactly one resend", len(resends) == 1, failures)
    if resends:
        ev = resends[0]
        _check("crash-m5: position %d resent by %s at tick %d"
               % (golden.CRASH_POSITION, golden.CRASH_RESENDER, golden.CRASH_RESEND_TICK),
               (ev.node, ev.position, ev.tick)
               == (golden.CRASH_RESENDER, golden.CRASH_POSITION, golden.CRASH_RESEND_TICK),
               failures)
    dup_acks = [e.tick for e in trace.select("DUP_ACK", node=golden.CRASH_RESENDER)
                if e.position == golden.CRASH_POSITION]
    _check("crash-m5: flagged after exactly 2 duplicate acks (ticks %s)"
           % golden.CRASH_DUP_ACK_TICKS,
           dup_acks[:2] == golden.CRASH_DUP_ACK_TICKS, failures)
    _check("crash-m5: all messages delivered", metrics.delivered_all, failures)


def _repro_gc_stall(failures: list[str]) -> None:
    for mode in (ADVANCE, "FETCH"):
        _, metrics = run(gc_stall_scenario(mode=mode, hints=True))
        _check("gc-stall: stream completes with hints in %s mode" % mode,
               metrics.stream_complete and not metrics.liveness_timeout, failures)
    _, metrics = run(gc_stall_scenario(hints=False))
    _check("gc-stall: provably stalls with hints disabled",
           metrics.liveness_timeout, failures)


def _repro_apportionment(failures: list[str]) -> None:
    for shares, q, expected in golden.APPORTIONMENT_ROWS:
        got = hamilton_apportion(shares, q)
        print("shares=%s q=%d -> %s" % (shares, q, got))
        _check("apportionment row %s" % (expected,), got == expected, failures)


def _repro_lemma1(failures: list[str]) -> None:
    for n_s, n_r, u_s, u_r in golden.LEMMA1_SETUPS:
        bound = u_s + u_r + 1
        worst = bounds.exhaustive_max_attempts(n_s, n_r, u_s, u_r)
        _check("lemma1 %dx%d u=%d: max attempts %d == %d"
               % (n_s, n_r, u_s, worst, bound), worst == bound, failures)
        fs, fr = bounds.contiguous_placement(u_s, u_r)
        achieved = bounds.attempts_for(0, 0, fs, fr, n_s, n_r)
        _check("lemma1 %dx%d: contiguous placement achieves the bound"
               % (n_s, n_r), achieved == bound, failures)


REPROS = {
    "timeline": _repro_timeline,
    "crash-m5": _repro_crash,
    "gc-stall": _repro_gc_stall,
    "apportionment": _repro_apportionment,
    "lemma1": _repro_lemma1,
}


def cmd_repro(args: argparse.Namespace) -> int:
    failures: list[str] = []
    REPROS[args.name](failures)
    return EXIT_OK if not failures else EXIT_CONFIG


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="quackcast",
        description="Cross-cluster broadcast simulator and bound checker")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config", help="JSON scenario file")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--trace", action="store_true", help="also write the event trace")
    p_run.set_defaults(func=cmd_run)

    p_bounds = sub.add_parser("bounds", help="retransmission bounds")
    p_bounds.add_argument("--alpha-s", type=float, default=3.0)
    p_bounds.add_argument("--alpha-r", type=float, default=3.0)
    p_bounds.add_argument("--pfail", type=float, default=1e-11)
    p_bounds.add_argument("--mc", nargs=2, type=int, metavar=("F", "TRIALS"),
                          default=None, help="Monte-Carlo tail for n=3f+1 clusters")
    p_bounds.add_argument("--seed", type=int, default=0)
    p_bounds.add_argument("--out", default=None, help="write the histogram CSV here")
    p_bounds.set_defaults(func=cmd_bounds)

    p_repro = sub.add_parser("repro", help="replay a canned scenario against goldens")
    p_repro.add_argument("name", choices=sorted(REPROS))
    p_repro.set_defaults(func=cmd_repro)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
