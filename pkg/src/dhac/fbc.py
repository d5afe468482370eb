"""Forward-backward sentinels: invertible float detours grafted onto a graph.

A sentinel taps one float node, pushes its value through n invertible
forward steps and then the inverse steps in reverse order, and exposes both
the tapped value and the round trip result as exports. Under exact IEEE-754
double arithmetic the round trip lands within a few ulps of the tapped
value (each step rounds once), orders of magnitude below any workable
threshold for moderate magnitudes, so a distance at or above the sentinel's
threshold indicates the job did not run on accurate hardware. Sentinels
never feed back into the host graph: its own outputs are unchanged bit for
bit.

Step kinds:
  add: x -> x + r_1 ... + r_n -> - r_n ... - r_1
  mul: x -> x * r_1 ... * r_n -> / r_n ... / r_1   (r_i in (0,1))
  tan: x -> arctan(x) -> tan(.)                    (single step)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .approx import FpTruncModel, fp_op
from .errors import SiteError, TraceError, ValidationError
from .graph import (
    ARITH_OPS,
    DFGraph,
    DFNode,
    Op,
    ScalarType,
    Trace,
    graph_of,
    parse_program_dict,
    program_to_dict,
)
from .rcc import Judgement

DEFAULT_DELTA = 1e-13
DEFAULT_STEPS = 3

# Operand draw ranges, chosen for judge-margin reasons rather than taste.
#
# Addition steps sit far below a unit-scale site so the running sum keeps the
# site's binade: under round-to-nearest the detour then restores the tap
# exactly, while a truncating float unit discards probe tail bits at every
# step, one-sidedly, leaving a residue of a few truncation ulps. Steps of
# site-comparable size would instead align binades and let the truncation
# cancel on its own.
#
# Multiplication steps stay in [0.5, 1) so each backward division amplifies
# accumulated error by at most 2x; an operand near zero would blow rounding
# noise past the 1e-14 floor of the useful threshold band.
_ADD_STEP_RANGE = (1e-6, 1e-5)
_MUL_STEP_RANGE = (0.5, 1.0)


class SentinelKind(Enum):
    ADDITION = "add"
    MULTIPLICATION = "mul"
    TAN_ARCTAN = "tan"


@dataclass(frozen=True)
class Sentinel:
    kind: SentinelKind
    site: str
    n: int
    operands: tuple[float, ...]
    delta: float = DEFAULT_DELTA
    entry_export: str | None = None  # set by instrument()
    exit_export: str | None = None

    def __post_init__(self):
        if self.kind is SentinelKind.TAN_ARCTAN:
            if self.n != 1 or self.operands:
                raise ValidationError("tan sentinel has n=1 and no operands")
        else:
            if self.n < 1:
                raise ValidationError("sentinel needs n >= 1 steps")
            if len(self.operands) != self.n:
                raise ValidationError(f"expected {self.n} operands, got {len(self.operands)}")
            if self.kind is SentinelKind.MULTIPLICATION and any(
                not 0.0 < r < 1.0 for r in self.operands
            ):
                raise ValidationError("mul sentinel operands must lie in (0, 1)")
        if not 0.0 < self.delta:
            raise ValidationError("delta must be positive")


def make_sentinel(
    kind: SentinelKind | str,
    site: str,
    rng,
    n: int = DEFAULT_STEPS,
    delta: float = DEFAULT_DELTA,
) -> Sentinel:
    """Draw sentinel operands from rng; tan sentinels take none."""
    kind = SentinelKind(kind) if not isinstance(kind, SentinelKind) else kind
    if kind is SentinelKind.TAN_ARCTAN:
        return Sentinel(kind=kind, site=site, n=1, operands=(), delta=delta)
    lo, hi = _MUL_STEP_RANGE if kind is SentinelKind.MULTIPLICATION else _ADD_STEP_RANGE
    ops = tuple(float(rng.uniform(lo, hi)) for _ in range(n))
    return Sentinel(kind=kind, site=site, n=n, operands=ops, delta=delta)


def forward_steps(s: Sentinel) -> list[tuple[Op, float | None]]:
    if s.kind is SentinelKind.ADDITION:
        return [(Op.ADD, r) for r in s.operands]
    if s.kind is SentinelKind.MULTIPLICATION:
        return [(Op.MUL, r) for r in s.operands]
    return [(Op.ARCTAN, None)]


def backward_steps(s: Sentinel) -> list[tuple[Op, float | None]]:
    if s.kind is SentinelKind.ADDITION:
        return [(Op.SUB, r) for r in reversed(s.operands)]
    if s.kind is SentinelKind.MULTIPLICATION:
        return [(Op.DIV, r) for r in reversed(s.operands)]
    return [(Op.TAN, None)]


def sentinel_roundtrip(s: Sentinel, value: float, fp: FpTruncModel | None = None):
    """Run the detour outside any graph; returns (restored, distance).

    Bit-identical to evaluating the instrumented graph under the same float
    unit model.
    """
    fp = fp if fp is not None else FpTruncModel(0)
    v = float(value)
    for op, r in forward_steps(s) + backward_steps(s):
        v = fp_op(fp, op.value, v, r)
    d = abs(float(value) - v)
    return v, d


@dataclass(frozen=True)
class InstrumentedGraph:
    graph: DFGraph
    sentinels: tuple[Sentinel, ...]


def instrument(graph: DFGraph, sentinels) -> InstrumentedGraph:
    """Graft sentinels onto a graph; host nodes and outputs are untouched.

    Sites must be distinct float64 nodes. The returned sentinels carry the
    export ids the judge reads.
    """
    types = graph.node_types()
    existing = {n.id for n in graph.nodes}
    nodes = list(graph.nodes)
    placed = []
    seen_sites = set()
    for i, s in enumerate(sentinels):
        if s.site not in existing:
            raise SiteError(f"site '{s.site}' not in graph '{graph.name}'")
        if types[s.site] is not ScalarType.FLOAT64:
            raise SiteError(f"site '{s.site}' is {types[s.site].value}; sentinels need a float64 site")
        if s.site in seen_sites:
            raise SiteError(f"duplicate sentinel site '{s.site}'")
        seen_sites.add(s.site)

        pre = f"{s.site}__fbc{i}"
        entry, exit_ = f"{pre}_in", f"{pre}_out"
        new_ids = [entry, exit_]
        steps = forward_steps(s) + backward_steps(s)
        step_ids = [f"{pre}_s{j}" for j in range(len(steps))]
        const_ids = [f"{pre}_r{j}" for j in range(len(s.operands))]
        new_ids += step_ids + const_ids
        clash = [nid for nid in new_ids if nid in existing]
        if clash:
            raise SiteError(f"instrumentation id collision: {clash[0]}")
        existing.update(new_ids)

        for j, r in enumerate(s.operands):
            nodes.append(DFNode(id=const_ids[j], op=Op.CONST, operands=(), value=float(r), dtype=ScalarType.FLOAT64))
        nodes.append(DFNode(id=entry, op=Op.EXPORT, operands=(s.site,), dtype=ScalarType.FLOAT64))
        prev = entry
        for j, (op, r) in enumerate(steps):
            if r is None:
                operands = (prev,)
            else:
                # operand j of the forward pass is reused by backward step n-1-j
                ridx = j if j < len(s.operands) else 2 * len(s.operands) - 1 - j
                operands = (prev, const_ids[ridx])
            nodes.append(DFNode(id=step_ids[j], op=op, operands=operands, dtype=ScalarType.FLOAT64))
            prev = step_ids[j]
        nodes.append(DFNode(id=exit_, op=Op.EXPORT, operands=(prev,), dtype=ScalarType.FLOAT64))
        placed.append(replace(s, entry_export=entry, exit_export=exit_))

    g = graph_of(f"{graph.name}+fbc", graph.dtype, nodes, list(graph.inputs), list(graph.outputs))
    return InstrumentedGraph(graph=g, sentinels=tuple(placed))


@dataclass(frozen=True)
class SentinelResult:
    kind: SentinelKind
    site: str
    distance: float
    positive: bool


@dataclass(frozen=True)
class FbcVerdict:
    judgement: Judgement
    results: tuple[SentinelResult, ...]

    @property
    def positive(self) -> bool:
        return self.judgement is Judgement.POSITIVE


def judge(instrumented: InstrumentedGraph, trace: Trace) -> FbcVerdict:
    """Threshold each sentinel's |tapped - roundtrip| against its delta."""
    results = []
    any_pos = False
    for s in instrumented.sentinels:
        if s.entry_export is None or s.exit_export is None:
            raise TraceError(f"sentinel at '{s.site}' was never instrumented")
        try:
            a = trace.exports[s.entry_export]
            b = trace.exports[s.exit_export]
        except KeyError as e:
            raise TraceError(f"trace lacks sentinel export {e.args[0]!r}") from None
        d = abs(float(a) - float(b))
        # non-finite exports cannot come from an accurate run; flag them
        pos = (not math.isfinite(d)) or d >= s.delta
        any_pos = any_pos or pos
        results.append(SentinelResult(kind=s.kind, site=s.site, distance=d, positive=pos))
    return FbcVerdict(
        judgement=Judgement.POSITIVE if any_pos else Judgement.NEGATIVE,
        results=tuple(results),
    )


def auto_sites(graph: DFGraph, k: int) -> list[str]:
    """Pick k float64 tap points, preferring completed values over partials.

    Float arithmetic nodes that feed an Output directly come first (in topo
    order); if those run out, remaining picks are spread evenly over all
    float arithmetic nodes.
    """
    types = graph.node_types()
    order = [graph.node(nid) for nid in graph.topo_order]
    feeding_output = set()
    for n in order:
        if n.op is Op.OUTPUT:
            feeding_output.add(n.operands[0])
    pre_out = [
        n.id
        for n in order
        if n.id in feeding_output and n.op in ARITH_OPS and types[n.id] is ScalarType.FLOAT64
    ]
    if len(pre_out) >= k:
        return pre_out[:k]
    picks = list(pre_out)
    pool = [
        n.id
        for n in order
        if n.op in ARITH_OPS and types[n.id] is ScalarType.FLOAT64 and n.id not in feeding_output
    ]
    need = k - len(picks)
    if need > len(pool):
        raise SiteError(f"graph '{graph.name}' has only {len(picks) + len(pool)} float sites, need {k}")
    step = len(pool) / need
    for i in range(need):
        picks.append(pool[int(i * step)])
    return picks


# ---------------------------------------------------------------------------
# file round trip for the CLI


def instrumented_to_dict(ins: InstrumentedGraph) -> dict:
    return {
        "graph": program_to_dict(ins.graph),
        "sentinels": [
            {
                "kind": s.kind.value,
                "site": s.site,
                "n": s.n,
                "operands": list(s.operands),
                "delta": s.delta,
                "entry_export": s.entry_export,
                "exit_export": s.exit_export,
            }
            for s in ins.sentinels
        ],
    }


def instrumented_from_dict(d: dict) -> InstrumentedGraph:
    if "graph" not in d or "sentinels" not in d:
        raise ValidationError("instrumented file needs 'graph' and 'sentinels'")
    g = parse_program_dict(d["graph"])
    sentinels = []
    for sd in d["sentinels"]:
        sentinels.append(
            Sentinel(
                kind=SentinelKind(sd["kind"]),
                site=sd["site"],
                n=int(sd["n"]),
                operands=tuple(float(x) for x in sd["operands"]),
                delta=float(sd["delta"]),
                entry_export=sd.get("entry_export"),
                exit_export=sd.get("exit_export"),
            )
        )
    return InstrumentedGraph(graph=g, sentinels=tuple(sentinels))
