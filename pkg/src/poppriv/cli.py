"""Command-line experiment driver.

Subcommands::

    poppriv run          one execution on the reference engine
    poppriv convergence  Alg. 3 step statistics over a list of n
    poppriv privacy      one privacy-lab experiment
    poppriv probe-bench  probe round accuracy vs round length
    poppriv p2p-test     delivery and uniformity of the secure transfer

Exit status: 0 success, 1 usage error, 2 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any, Sequence


from . import __version__, engine, montecarlo, privacy_lab
from .engine import UNDECIDED, InvariantViolation
from .protocols import alg1, alg3
from .protocols.remainder import InvalidInputError, RemainderParams, check_inputs, remainder_oracle
from .rng import Streams
from .subroutines import DEFAULT_M as PROBE_DEFAULT_M

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT = 0, 1, 2

ATTACKS = ("first-partner", "view-distribution", "p2p-uniformity", "freshness")
DEFAULT_D = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, required=True, help="root seed (mandatory)")
    common.add_argument("--k", type=int, default=3, help="modulus")
    common.add_argument("--r", type=int, default=0, help="target remainder")
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--budget", type=int, default=None, help="step budget per run")
    common.add_argument("--m", type=int, default=None, help="phase-clock phases")
    common.add_argument("--p-m1", type=float, default=0.5, help="Alg. 1 probability of M1 over M2")
    common.add_argument("--adversary", type=int, default=0)
    common.add_argument("--leader", type=int, default=1)
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = _Parser(prog="poppriv", description="Population protocol privacy experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="one execution on the reference engine")
    p.add_argument("--protocol", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--inputs", type=_int_list, default=None, help="comma-separated inputs")
    p.add_argument("--trace", default=None, help="write the schedule as JSON lines")

    p = sub.add_parser("convergence", parents=[common], help="Alg. 3 steps vs n")
    p.add_argument("--protocol", default="alg3")
    p.add_argument("--n", type=_int_list, default=[8, 16, 32, 64])

    p = sub.add_parser("privacy", parents=[common], help="privacy-lab experiment")
    p.add_argument("--attack", required=True)
    p.add_argument("--protocol", default=None)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--inputs1", type=_int_list, default=None)
    p.add_argument("--inputs2", type=_int_list, default=None)
    p.add_argument("--prefix", type=int, default=2, help="observations per view feature")
    p.add_argument("--mu", type=int, default=1, help="secret for p2p-uniformity")
    p.add_argument("--histograms", default=None, help="CSV prefix for view-feature histograms")

    p = sub.add_parser("probe-bench", parents=[common], help="probe accuracy vs round length")
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--d", type=_float_list, default=list(DEFAULT_D))

    p = sub.add_parser("p2p-test", parents=[common], help="secure transfer checks")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--mu", type=int, default=1)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _check_common(args) -> None:
    if args.k < 2:
        raise UsageError("--k must be at least 2")
    if not 0 <= args.r < args.k:
        raise UsageError("--r must lie in [0, k)")
    if args.trials is not None and args.trials < 1:
        raise UsageError("--trials must be positive")
    if args.budget is not None and args.budget < 0:
        raise UsageError("--budget must be non-negative")
    if args.m is not None and args.m < 2:
        raise UsageError("--m must be at least 2")
    if not 0.0 <= args.p_m1 <= 1.0:
        raise UsageError("--p-m1 must be a probability")


def _check_n(n: int, args, least: int = 2) -> None:
    if n < least:
        raise UsageError(f"--n must be at least {least}")
    if not 0 <= args.adversary < n:
        raise UsageError("--adversary must index an agent")


def _config(args, **resolved) -> dict:
    skip = {"out", "format", "trace", "histograms"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip}
    cfg.update(resolved)
    return cfg


def _envelope(command: str, cfg: dict, result: dict) -> dict:
    return {"command": command, "version": __version__, "seed": cfg["seed"], "config": cfg, **result}


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=privacy_lab._jsonable)


def _flatten(obj, prefix="") -> list[tuple[str, Any]]:
    if isinstance(obj, dict):
        rows = []
        for key in sorted(obj):
            rows += _flatten(obj[key], f"{prefix}.{key}" if prefix else str(key))
        return rows
    if isinstance(obj, (list, tuple)) and any(isinstance(x, (dict, list)) for x in obj):
        rows = []
        for i, x in enumerate(obj):
            rows += _flatten(x, f"{prefix}.{i}")
        return rows
    return [(prefix, obj)]


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _render(args, payload: dict, table: tuple | None = None) -> str:
    if args.format == "json":
        return _dumps(payload) + "\n"
    if table is not None:
        return _csv(*table)
    return _csv(("key", "value"), [(k, json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in _flatten(payload)])


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_run(args) -> dict:
    if args.protocol not in ("alg1", "alg3"):
        raise UsageError(f"unknown protocol {args.protocol!r} (choose alg1 or alg3)")
    params = RemainderParams(args.k, args.r)
    if args.inputs is not None:
        inputs = check_inputs(args.inputs, args.k)
        if args.n is not None and args.n != len(inputs):
            raise UsageError("--n disagrees with the number of --inputs")
        n = len(inputs)
    else:
        if args.n is None:
            raise UsageError("give --n or --inputs")
        n = args.n
        inputs = Streams(args.seed).named("cli-inputs").integers(0, args.k, n).tolist()
    _check_n(n, args)
    streams = Streams(args.seed)
    if args.protocol == "alg1":
        proto = alg1.protocol(params, args.p_m1)
        budget = args.budget if args.budget is not None else int(math.ceil(50 * n**3 * math.log(n)))
        proto_inputs = inputs
        m = None
    else:
        if not 0 <= args.leader < n:
            raise UsageError("--leader must index an agent")
        m = args.m or alg3.DEFAULT_M
        proto = alg3.protocol(params, m)
        budget = args.budget if args.budget is not None else alg3.default_budget(n)
        proto_inputs = alg3.leader_inputs(inputs, args.leader)
    config = engine.initialize(proto, proto_inputs, streams)
    trace = engine.run(config, proto, budget, streams, inputs=proto_inputs, record_views=False)
    if args.trace:
        trace.write_jsonl(args.trace)
    agents = trace.final.agents
    output = engine.population_output(proto, agents) if trace.converged else UNDECIDED
    truth = remainder_oracle(inputs, params)
    result = {
        "converged": trace.converged,
        "steps": trace.steps,
        "parallel_time": trace.parallel_time,
        "output": None if output is UNDECIDED else bool(output),
        "ground_truth": truth,
        "agree": output is not UNDECIDED and bool(output) == truth,
    }
    if args.protocol == "alg3":
        result["broadcast"] = alg3.broadcast_value(agents)
        result["sum_mod_k"] = sum(inputs) % args.k
    cfg = _config(args, n=n, inputs=list(inputs), budget=budget, m=m)
    return _envelope("run", cfg, result)


def cmd_convergence(args) -> tuple[dict, tuple | None]:
    if args.protocol != "alg3":
        raise UsageError("convergence is measured for alg3 only")
    trials = args.trials or 30
    if trials < 30:
        raise UsageError("need at least 30 trials per n")
    for n in args.n:
        _check_n(n, args, least=3)
    m = args.m or alg3.DEFAULT_M
    rows = montecarlo.convergence_sweep(args.n, args.k, trials, args.seed, m=m, budget=args.budget)
    result: dict[str, Any] = {"rows": [vars(r) | {"flagged": r.unconverged > 0} for r in rows]}
    if len(rows) > 1:
        ns = [r.n for r in rows]
        med = [r.median for r in rows]
        alpha, c = montecarlo.fit_exponent(ns, med)
        alpha_log, c_log = montecarlo.fit_exponent(ns, med, log_factor=True)
        result["fit"] = {"alpha": alpha, "c": c, "alpha_with_log": alpha_log, "c_with_log": c_log}
    cfg = _config(args, trials=trials, m=m)
    header = ("n", "median_steps", "q1", "q3", "trials", "unconverged", "incorrect", "flagged")
    table = (header, [(r.n, r.median, r.q1, r.q3, r.trials, r.unconverged, r.incorrect, r.unconverged > 0) for r in rows])
    return _envelope("convergence", cfg, result), table


def cmd_privacy(args) -> dict:
    attack = args.attack
    if attack not in ATTACKS:
        raise UsageError(f"unknown attack {attack!r} (choose from {', '.join(ATTACKS)})")
    trials = args.trials or 100_000
    if attack in ("first-partner", "view-distribution"):
        if args.protocol not in ("alg1", "alg3"):
            raise UsageError(f"{attack} needs --protocol alg1 or alg3")
    elif attack == "p2p-uniformity":
        if args.protocol not in (None, "p2p"):
            raise UsageError("p2p-uniformity runs on the p2p transfer only")
    elif args.protocol is not None:
        raise UsageError("freshness depends on the scheduler only; drop --protocol")
    if attack == "view-distribution" and args.inputs1 is not None:
        args.n = len(args.inputs1)
    n = args.n
    _check_n(n, args)
    cfg = _config(args, trials=trials)
    try:
        if attack == "freshness":
            result = {
                "n": n,
                "closed_form": privacy_lab.freshness_probability(n),
                "monte_carlo": montecarlo.freshness_estimate(n, trials, args.seed, args.adversary),
                "trials": trials,
            }
        elif attack == "p2p-uniformity":
            result = privacy_lab.p2p_uniformity(n, args.k, args.mu, trials, args.seed)
        elif attack == "first-partner":
            result = privacy_lab.first_partner_attack(
                args.protocol, n, args.k, trials, args.seed, r=args.r, adversary=args.adversary,
                m=args.m, p_m1=args.p_m1, leader=args.leader,
            ).to_dict()
        else:
            i1, i2 = args.inputs1, args.inputs2
            if i1 is None and i2 is None:
                # swap two non-adversary inputs: same sum, same adversary input
                i1, i2 = [0] * n, [0] * n
                a, b = [x for x in range(n) if x != args.adversary][:2]
                i1[a], i2[b] = 1, 1
            elif i1 is None or i2 is None:
                raise UsageError("give both --inputs1 and --inputs2")
            rep = privacy_lab.view_distribution_test(
                args.protocol, i1, i2, args.k, trials, args.seed, r=args.r, adversary=args.adversary,
                prefix=args.prefix, m=args.m, p_m1=args.p_m1, leader=args.leader,
            )
            if args.histograms and rep.histograms:
                for tag, h in zip((1, 2), rep.histograms):
                    h.to_csv(f"{args.histograms}_{tag}.csv")
            result = rep.to_dict()
    except (privacy_lab.InvalidExperimentError, privacy_lab.InsufficientSamplesError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    return _envelope("privacy", cfg, {"attack": attack, "report": result})


def cmd_probe_bench(args) -> tuple[dict, tuple]:
    n = args.n
    if n < 8:
        raise UsageError("probe-bench needs --n >= 8")
    rounds = args.trials or 10_000
    m = args.m or PROBE_DEFAULT_M
    phase = montecarlo.probe_bench(n, rounds, args.seed, m=m)
    sweep = []
    for d in args.d:
        if d <= 0:
            raise UsageError("--d values must be positive")
        b = montecarlo.probe_bench(n, rounds, args.seed, m=m, d=d)
        sweep.append({"d": d, "round_steps": b.timer, "accuracy": b.accuracy})
    result = {
        "phase_clock": {
            "m": m,
            "accuracy": phase.accuracy,
            "rounds": rounds,
            "mean_round_steps": float(phase.length.mean()),
            "round_steps_over_n_ln_n": float(phase.length.mean() / (n * math.log(n))),
            "inconclusive": int((phase.outcome == 0).sum()),
        },
        "sweep": sweep,
    }
    cfg = _config(args, trials=rounds, m=m)
    table = (("d", "round_steps", "accuracy"), [(s["d"], s["round_steps"], s["accuracy"]) for s in sweep])
    return _envelope("probe-bench", cfg, result), table


def cmd_p2p_test(args) -> dict:
    if not 0 <= args.mu < args.k:
        raise UsageError("--mu must lie in [0, k)")
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    trials = args.trials or 100_000
    result = privacy_lab.p2p_uniformity(args.n, args.k, args.mu, trials, args.seed)
    return _envelope("p2p-test", _config(args, trials=trials), result)


COMMANDS = {
    "run": cmd_run,
    "convergence": cmd_convergence,
    "privacy": cmd_privacy,
    "probe-bench": cmd_probe_bench,
    "p2p-test": cmd_p2p_test,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _check_common(args)
        out = COMMANDS[args.command](args)
    except (UsageError, InvalidInputError) as exc:
        print(f"poppriv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as exc:
        print(f"poppriv: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    payload, table = out if isinstance(out, tuple) else (out, None)
    _emit(args, _render(args, payload, table))
    if args.format == "csv" and "fit" in payload:
        # the fit is not a row of the table
        print("fit: " + ", ".join(f"{k}={v:.4g}" for k, v in payload["fit"].items()), file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
