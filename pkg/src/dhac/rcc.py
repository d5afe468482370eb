"""Residue recheck: re-run an integer dataflow in Z_m and compare residues.

The claimed result of an integer job is reduced mod each configured modulus
and compared with the residue obtained by evaluating the whole dataflow in
the residue ring. A mismatch in any round is a Positive verdict. Soundness
needs the exact final value to fit in int16: int16 ops commute with
reduction mod 2^16, so intermediates may wrap freely, but a program whose
unbounded result leaves [-2^15, 2^15) gets a wrapped claim whose residue no
longer matches the ring evaluation, and honest results can be flagged. The
shipped builtins keep their outputs in range over the documented bounds.

Division in the ring needs a modular inverse, so rounds whose divisor is
not a unit modulo the round's modulus are skipped; if every round is
skipped the verdict is Inconclusive.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InputError, ModulusError, NoInverseError, ValidationError
from .graph import (
    ARITH_OPS,
    INT16_MAX,
    INT16_MIN,
    DFGraph,
    DFNode,
    Op,
    ScalarType,
    graph_of,
)


def is_prime(m: int) -> bool:
    if m < 2:
        return False
    if m < 4:
        return True
    if m % 2 == 0:
        return False
    f = 3
    while f * f <= m:
        if m % f == 0:
            return False
        f += 2
    return True


@dataclass(frozen=True)
class Residue:
    value: int
    modulus: int

    def __post_init__(self):
        if self.modulus < 2:
            raise ModulusError(f"modulus must be >= 2, got {self.modulus}")
        if not 0 <= self.value < self.modulus:
            raise ModulusError(f"residue {self.value} out of range for modulus {self.modulus}")


def to_residue(x: int, m: int) -> Residue:
    if m < 2:
        raise ModulusError(f"modulus must be >= 2, got {m}")
    return Residue(int(x) % m, m)


def _same_modulus(a: Residue, b: Residue) -> int:
    if a.modulus != b.modulus:
        raise ModulusError(f"modulus mismatch: {a.modulus} vs {b.modulus}")
    return a.modulus


def ring_add(a: Residue, b: Residue) -> Residue:
    m = _same_modulus(a, b)
    return Residue((a.value + b.value) % m, m)


def ring_sub(a: Residue, b: Residue) -> Residue:
    m = _same_modulus(a, b)
    return Residue((a.value - b.value) % m, m)


def ring_mul(a: Residue, b: Residue) -> Residue:
    m = _same_modulus(a, b)
    return Residue((a.value * b.value) % m, m)


def ring_inv(a: Residue) -> Residue:
    """Multiplicative inverse by the extended Euclid algorithm.

    Exists iff gcd(value, modulus) == 1; prime moduli make every nonzero
    residue a unit, but composite moduli work too when the gcd is 1.
    """
    m = a.modulus
    r0, r1 = m, a.value
    s0, s1 = 0, 1
    while r1:
        q = r0 // r1
        r0, r1 = r1, r0 - q * r1
        s0, s1 = s1, s0 - q * s1
    if r0 != 1:
        raise NoInverseError(f"{a.value} has no inverse mod {m}")
    return Residue(s0 % m, m)


def ring_div(a: Residue, b: Residue) -> Residue:
    _same_modulus(a, b)
    return ring_mul(a, ring_inv(b))


@dataclass(frozen=True)
class ModuleSet:
    """The moduli used for the check rounds, in round order."""

    moduli: tuple[int, ...] = (3, 5, 7)

    def __post_init__(self):
        if not self.moduli:
            raise ModulusError("at least one modulus required")
        seen = set()
        for m in self.moduli:
            if not isinstance(m, int) or isinstance(m, bool) or m < 2:
                raise ModulusError(f"modulus must be an int >= 2, got {m!r}")
            if m in seen:
                raise ModulusError(f"duplicate modulus {m}")
            seen.add(m)

    def __iter__(self):
        return iter(self.moduli)

    def __len__(self):
        return len(self.moduli)


def _require_integer_graph(graph: DFGraph) -> None:
    types = graph.node_types()
    for nid, t in types.items():
        if t is not ScalarType.INT16:
            raise ValidationError(f"residue evaluation needs an all-integer graph; node '{nid}' is {t.value}")


def _check_int_inputs(graph: DFGraph, inputs) -> dict:
    if len(inputs) != len(graph.inputs):
        raise InputError(f"expected {len(graph.inputs)} inputs, got {len(inputs)}")
    vals = {}
    for nid, v in zip(graph.inputs, inputs):
        if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
            raise InputError(f"input '{nid}' must be an integer, got {type(v).__name__}")
        if not INT16_MIN <= int(v) <= INT16_MAX:
            raise InputError(f"input '{nid}'={v} outside int16")
        vals[nid] = int(v)
    return vals


def evaluate_mod(graph: DFGraph, inputs, m: int) -> Residue:
    """Evaluate the dataflow in Z_m and return the output residue.

    The graph must be all-integer with a single output. Division raises
    NoInverseError when the divisor is not a unit mod m.
    """
    if m < 2:
        raise ModulusError(f"modulus must be >= 2, got {m}")
    _require_integer_graph(graph)
    if len(graph.outputs) != 1:
        raise ValidationError(f"residue evaluation needs exactly one output, got {len(graph.outputs)}")
    in_vals = _check_int_inputs(graph, inputs)

    vals: dict[str, Residue] = {}
    for nid in graph.topo_order:
        node = graph.node(nid)
        if node.op is Op.INPUT:
            vals[node.id] = to_residue(in_vals[node.id], m)
        elif node.op is Op.CONST:
            vals[node.id] = to_residue(node.value, m)
        elif node.op in (Op.OUTPUT, Op.EXPORT):
            vals[node.id] = vals[node.operands[0]]
        elif node.op is Op.ADD:
            vals[node.id] = ring_add(vals[node.operands[0]], vals[node.operands[1]])
        elif node.op is Op.SUB:
            vals[node.id] = ring_sub(vals[node.operands[0]], vals[node.operands[1]])
        elif node.op is Op.MUL:
            vals[node.id] = ring_mul(vals[node.operands[0]], vals[node.operands[1]])
        elif node.op is Op.DIV:
            vals[node.id] = ring_div(vals[node.operands[0]], vals[node.operands[1]])
        else:
            raise ValidationError(f"op '{node.op.value}' not supported in residue evaluation")
    return vals[graph.outputs[0]]


class Judgement(Enum):
    NEGATIVE = "negative"
    POSITIVE = "positive"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class RccVerdict:
    judgement: Judgement
    failed_round: int | None  # 1-based round index of the first mismatch
    rounds_run: int
    skipped: tuple[int, ...]  # moduli skipped because no inverse existed

    @property
    def positive(self) -> bool:
        return self.judgement is Judgement.POSITIVE


def rcc_check(graph: DFGraph, inputs, claimed: int, modules: ModuleSet | None = None) -> RccVerdict:
    """Compare the claimed result's residues against ring re-evaluation.

    Stops at the first mismatching round. Rounds that hit a non-invertible
    division are skipped; if all rounds are skipped the verdict is
    Inconclusive.
    """
    modules = modules if modules is not None else ModuleSet()
    if not isinstance(claimed, (int, np.integer)) or isinstance(claimed, bool):
        raise InputError(f"claimed result must be an integer, got {type(claimed).__name__}")
    claimed = int(claimed)
    if not INT16_MIN <= claimed <= INT16_MAX:
        raise InputError(f"claimed result {claimed} outside int16")

    skipped = []
    rounds_run = 0
    for j, m in enumerate(modules):
        try:
            got = evaluate_mod(graph, inputs, m)
        except NoInverseError:
            skipped.append(m)
            continue
        rounds_run += 1
        if got.value != to_residue(claimed, m).value:
            return RccVerdict(Judgement.POSITIVE, j + 1, rounds_run, tuple(skipped))
    if rounds_run == 0:
        return RccVerdict(Judgement.INCONCLUSIVE, None, 0, tuple(skipped))
    return RccVerdict(Judgement.NEGATIVE, None, rounds_run, tuple(skipped))


# ---------------------------------------------------------------------------
# batch helper for the trial runners (scalar rcc_check is the reference)


def residues_batch(graph: DFGraph, inputs, m: int) -> np.ndarray:
    """Output residues for a batch of input columns (int64 arrays).

    Restricted to division-free graphs; rcc_check covers the general case.
    """
    if m < 2:
        raise ModulusError(f"modulus must be >= 2, got {m}")
    _require_integer_graph(graph)
    if len(graph.outputs) != 1:
        raise ValidationError("residue evaluation needs exactly one output")
    if len(inputs) != len(graph.inputs):
        raise InputError(f"expected {len(graph.inputs)} input columns, got {len(inputs)}")

    in_vals = {nid: np.asarray(col, dtype=np.int64) % m for nid, col in zip(graph.inputs, inputs)}
    last_use: dict[str, int] = {}
    order = [graph.node(nid) for nid in graph.topo_order]
    for idx, node in enumerate(order):
        for op_id in node.operands:
            last_use[op_id] = idx
    keep = set(graph.outputs)

    vals: dict[str, np.ndarray | int] = {}
    for idx, node in enumerate(order):
        if node.op is Op.INPUT:
            v = in_vals[node.id]
        elif node.op is Op.CONST:
            v = int(node.value) % m
        elif node.op in (Op.OUTPUT, Op.EXPORT):
            v = vals[node.operands[0]]
        elif node.op is Op.ADD:
            v = (vals[node.operands[0]] + vals[node.operands[1]]) % m
        elif node.op is Op.SUB:
            v = (vals[node.operands[0]] - vals[node.operands[1]]) % m
        elif node.op is Op.MUL:
            v = (vals[node.operands[0]] * vals[node.operands[1]]) % m
        elif node.op is Op.DIV:
            raise ValidationError("division not supported in batched residue evaluation")
        else:
            raise ValidationError(f"op '{node.op.value}' not supported in residue evaluation")
        vals[node.id] = v
        for op_id in set(node.operands):
            if last_use.get(op_id) == idx and op_id not in keep:
                del vals[op_id]

    out = vals[graph.outputs[0]]
    if not isinstance(out, np.ndarray):
        n = len(in_vals[graph.inputs[0]]) if graph.inputs else 1
        out = np.full(n, out, dtype=np.int64)
    return out


# ---------------------------------------------------------------------------
# segment extraction for mixed-type graphs


@dataclass(frozen=True)
class CheckSegment:
    """A standalone integer region, checkable on its own.

    entry/exit name the probe points in the parent graph: entry is the seed
    node, exit the final node of the region. subgraph re-derives exit's
    value from the region's boundary values and exposes it as the single
    output.
    """

    subgraph: DFGraph
    entry: str
    exit: str
    depth: int


def extract_segments(graph: DFGraph, max_depth: int | None = None) -> list[CheckSegment]:
    """Find integer arithmetic regions reachable within max_depth layers.

    Seeds are integer arithmetic nodes taken in topological order; each seed
    is grown downstream through integer arithmetic (bounded by max_depth
    layers), then closed over the integer arithmetic feeding the collected
    nodes so the region is self-contained. Regions wholly inside an earlier
    one are dropped.
    """
    if max_depth is not None and max_depth < 0:
        raise ValidationError("max_depth must be >= 0 or None")
    types = graph.node_types()
    order = [graph.node(nid) for nid in graph.topo_order]
    node_by_id = {n.id: n for n in order}
    consumers: dict[str, list[str]] = {n.id: [] for n in order}
    for n in order:
        for op_id in n.operands:
            consumers[op_id].append(n.id)

    def is_int_arith(nid: str) -> bool:
        n = node_by_id[nid]
        return n.op in ARITH_OPS and types[nid] is ScalarType.INT16

    covered: set[str] = set()
    segments: list[CheckSegment] = []
    seg_idx = 0
    for seed in order:
        if seed.op not in ARITH_OPS or types[seed.id] is not ScalarType.INT16:
            continue
        if seed.id in covered:
            continue

        # grow downstream, layer by layer
        region = {seed.id}
        frontier = [seed.id]
        depth = 0
        while frontier and (max_depth is None or depth < max_depth):
            nxt = []
            for nid in frontier:
                for c in consumers[nid]:
                    if c not in region and is_int_arith(c):
                        region.add(c)
                        nxt.append(c)
            if not nxt:
                break
            frontier = nxt
            depth += 1

        # close over integer arithmetic operands so the region computes
        # its own sink from boundary values only
        stack = deque(region)
        while stack:
            nid = stack.pop()
            for op_id in node_by_id[nid].operands:
                if op_id not in region and is_int_arith(op_id):
                    region.add(op_id)
                    stack.append(op_id)

        if region <= covered:
            continue

        region_order = [n for n in order if n.id in region]
        sinks = [n.id for n in region_order if not any(c in region for c in consumers[n.id])]
        exit_id = sinks[-1]

        # boundary operands become subgraph inputs (consts are copied)
        sub_nodes: list[DFNode] = []
        sub_inputs: list[str] = []
        added: set[str] = set()
        for n in region_order:
            for op_id in n.operands:
                if op_id in region or op_id in added:
                    continue
                src = node_by_id[op_id]
                if src.op is Op.CONST:
                    sub_nodes.append(DFNode(id=op_id, op=Op.CONST, operands=(), value=src.value))
                else:
                    sub_nodes.append(DFNode(id=op_id, op=Op.INPUT, operands=()))
                    sub_inputs.append(op_id)
                added.add(op_id)
            sub_nodes.append(DFNode(id=n.id, op=n.op, operands=n.operands))
        out_id = f"{exit_id}__segout"
        sub_nodes.append(DFNode(id=out_id, op=Op.OUTPUT, operands=(exit_id,)))
        sub = graph_of(f"{graph.name}#seg{seg_idx}", ScalarType.INT16, sub_nodes, sub_inputs, [out_id])

        segments.append(CheckSegment(subgraph=sub, entry=seed.id, exit=exit_id, depth=depth))
        covered |= region
        seg_idx += 1

    return segments
