"""Command line front end.

Exit codes: 0 success / negative verdict, 2 positive verdict, 3
inconclusive verdict, 1 any error (bad usage, bad files, bad config).

--program accepts either a builtin name (fir, conv2x2, euler2, euler3,
rk2, rk3, conv_layer) or a path to a program JSON file; an instrumented
file (as written by fbc-instrument) is accepted wherever a program is.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .approx import ArithBackend, FpTruncModel, IntUnitModel, Paradigm
from .errors import DhacError, InputError
from .fbc import (
    SentinelKind,
    auto_sites,
    instrument,
    instrumented_from_dict,
    instrumented_to_dict,
    judge,
    make_sentinel,
)
from .graph import DFGraph, Trace, parse_program
from .interp import evaluate
from .programs import SHORTHAND, builtin_program
from .rcc import Judgement, ModuleSet, rcc_check
from .rng import substream
from .scenario import (
    config_from_dict,
    report_to_csv,
    run_bench,
    sweep_threshold,
)

_EXIT_OK = 0
_EXIT_ERROR = 1
_EXIT_POSITIVE = 2
_EXIT_INCONCLUSIVE = 3


class _Parser(argparse.ArgumentParser):
    # usage problems are errors (1), not verdicts (2)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(_EXIT_ERROR, f"error: {message}\n")


def _load_json(path: str):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _load_program(value: str) -> DFGraph:
    if os.path.exists(value):
        with open(value, "r", encoding="utf-8") as f:
            text = f.read()
        doc = json.loads(text)
        if isinstance(doc, dict) and "sentinels" in doc:
            return instrumented_from_dict(doc).graph
        return parse_program(text)
    if value in SHORTHAND:
        return builtin_program(value)
    raise InputError(f"'{value}' is neither a file nor a builtin name")


def _load_inputs(path: str) -> list:
    doc = _load_json(path)
    if not isinstance(doc, list):
        raise InputError("inputs file must be a JSON array")
    return doc


def _unit(text: str) -> IntUnitModel:
    kind, _, k = text.partition(":")
    return IntUnitModel(kind, int(k) if k else 0)


def _backend_from_args(args) -> ArithBackend:
    adder = _unit(args.adder) if args.adder else IntUnitModel("exact")
    mul = _unit(args.multiplier) if args.multiplier else IntUnitModel("exact")
    fp = FpTruncModel(args.fp_bits or 0)
    if args.paradigm:
        paradigm = Paradigm(args.paradigm)
    elif adder.is_exact and mul.is_exact and fp.is_exact:
        paradigm = Paradigm.ACCURATE
    else:
        paradigm = Paradigm.APPROXIMATE
    return ArithBackend(paradigm, adder, mul, fp)


def _trace_to_dict(trace: Trace) -> dict:
    def num(v):
        return float(v) if isinstance(v, float) else int(v)

    return {
        "outputs": [num(v) for v in trace.outputs],
        "exports": {k: num(v) for k, v in trace.exports.items()},
    }


def _trace_from_dict(doc: dict) -> Trace:
    if not isinstance(doc, dict) or "outputs" not in doc or "exports" not in doc:
        raise InputError("trace file needs 'outputs' and 'exports'")
    return Trace(outputs=tuple(doc["outputs"]), exports=dict(doc["exports"]))


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)


def _cmd_run(args) -> int:
    g = _load_program(args.program)
    inputs = _load_inputs(args.inputs)
    backend = _backend_from_args(args)
    trace = evaluate(g, inputs, backend)
    if args.out:
        _write_text(args.out, json.dumps(_trace_to_dict(trace), indent=2) + "\n")
    for nid, v in zip(g.outputs, trace.outputs):
        print(f"{nid} {v}")
    return _EXIT_OK


def _cmd_rcc(args) -> int:
    g = _load_program(args.program)
    inputs = _load_inputs(args.inputs)
    moduli = ModuleSet(tuple(int(m) for m in args.moduli.split(",")))
    verdict = rcc_check(g, inputs, args.claimed, moduli)
    doc = {
        "judgement": verdict.judgement.value,
        "failed_round": verdict.failed_round,
        "rounds_run": verdict.rounds_run,
        "skipped": list(verdict.skipped),
    }
    if args.out:
        _write_text(args.out, json.dumps(doc, indent=2) + "\n")
    if verdict.judgement is Judgement.POSITIVE:
        print(f"positive (round {verdict.failed_round})")
        return _EXIT_POSITIVE
    if verdict.judgement is Judgement.INCONCLUSIVE:
        print(f"inconclusive (all {len(moduli)} rounds skipped)")
        return _EXIT_INCONCLUSIVE
    print(f"negative ({verdict.rounds_run} rounds)")
    return _EXIT_OK


def _cmd_fbc_instrument(args) -> int:
    g = _load_program(args.program)
    kinds = [SentinelKind(k) for k in args.kinds.split(",")]
    if args.sites == "auto":
        sites = auto_sites(g, len(kinds))
    else:
        sites = args.sites.split(",")
        if len(sites) != len(kinds):
            raise InputError(f"{len(kinds)} kinds but {len(sites)} sites")
    sentinels = [
        make_sentinel(kind, site, substream(args.seed, "fbc", g.name, "sentinel", kind.value),
                      n=args.n, delta=args.delta)
        for kind, site in zip(kinds, sites)
    ]
    ins = instrument(g, sentinels)
    _write_text(args.out, json.dumps(instrumented_to_dict(ins), indent=2) + "\n")
    if args.out:
        print(f"instrumented {g.name}: {len(sentinels)} sentinels -> {args.out}")
    return _EXIT_OK


def _cmd_fbc_judge(args) -> int:
    ins = instrumented_from_dict(_load_json(args.instrumented))
    trace = _trace_from_dict(_load_json(args.trace))
    verdict = judge(ins, trace)
    doc = {
        "judgement": verdict.judgement.value,
        "sentinels": [
            {"kind": r.kind.value, "site": r.site, "distance": r.distance, "positive": r.positive}
            for r in verdict.results
        ],
    }
    if args.out:
        _write_text(args.out, json.dumps(doc, indent=2) + "\n")
    for r in verdict.results:
        print(f"{r.site} {r.kind.value} distance={r.distance:.3e} {'POSITIVE' if r.positive else 'negative'}")
    print(verdict.judgement.value)
    return _EXIT_POSITIVE if verdict.positive else _EXIT_OK


def _make_config(args):
    doc = _load_json(args.config) if args.config else {}
    cfg = config_from_dict(doc)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "quick", None) is not None:
        cfg = replace(cfg, trials=args.quick)
    return cfg


def _cmd_bench(args) -> int:
    cfg = _make_config(args)
    report = run_bench(cfg, jobs=args.jobs)
    _write_text(args.out, report_to_csv(report))
    if args.out:
        print(f"{len(report.rows)} rows -> {args.out}")
    return _EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _make_config(args)
    deltas = [float(d) for d in args.deltas.split(",")]
    report = sweep_threshold(cfg, deltas)
    _write_text(args.out, report_to_csv(report))
    if args.out:
        print(f"{len(report.rows)} rows -> {args.out}")
    return _EXIT_OK


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--adder", help="integer adder unit, e.g. loa:4, trunc_add:6, seg_carry:4")
    p.add_argument("--multiplier", help="integer multiplier unit, e.g. trunc_mul:4, broken_array:4, log_approx")
    p.add_argument("--fp-bits", type=int, default=0, help="float mantissa bits to truncate (0 = exact)")
    p.add_argument("--paradigm", choices=["accurate", "approximate"],
                   help="override the paradigm implied by the unit flags")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dhac", description="verification toolkit against dishonest approximate computing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[], help="evaluate a program under a chosen backend")
    p.add_argument("--program", required=True)
    p.add_argument("--inputs", required=True, help="JSON array of input values")
    _add_backend_flags(p)
    p.add_argument("--out", help="write the trace (outputs + exports) as JSON")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("rcc", help="residue recheck of a claimed integer result")
    p.add_argument("--program", required=True)
    p.add_argument("--inputs", required=True)
    p.add_argument("--claimed", required=True, type=int, help="the result the server returned")
    p.add_argument("--moduli", default="3,5,7")
    p.add_argument("--out", help="write the verdict as JSON")
    p.set_defaults(func=_cmd_rcc)

    p = sub.add_parser("fbc-instrument", help="graft forward-backward sentinels onto a program")
    p.add_argument("--program", required=True)
    p.add_argument("--sites", default="auto", help="'auto' or comma-separated node ids")
    p.add_argument("--kinds", default="add,mul,tan")
    p.add_argument("--n", type=int, default=3, help="forward steps per add/mul sentinel")
    p.add_argument("--delta", type=float, default=1e-13)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fbc_instrument)

    p = sub.add_parser("fbc-judge", help="judge a trace of an instrumented program")
    p.add_argument("--instrumented", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--out", help="write the verdict as JSON")
    p.set_defaults(func=_cmd_fbc_judge)

    p = sub.add_parser("bench", help="detection-rate campaign over programs and backends")
    p.add_argument("--config", help="campaign config (JSON); defaults apply without it")
    p.add_argument("--out", help="write the CSV report here instead of stdout")
    p.add_argument("--quick", type=int, nargs="?", const=500, help="cut trials per cell (default 500)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent cells")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("sweep", help="false rates across sentinel thresholds")
    p.add_argument("--config", help="campaign config (JSON)")
    p.add_argument("--deltas", required=True, help="comma-separated thresholds")
    p.add_argument("--out", help="write the CSV here instead of stdout")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DhacError as e:
        print(f"error: {e}", file=sys.stderr)
        return _EXIT_ERROR
    except (OSError, json.JSONDecodeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return _EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
