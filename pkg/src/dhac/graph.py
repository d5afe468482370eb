"""Scalar dataflow-graph IR: node/graph types, validation, file format, census.

A program is a DAG of scalar operations. Every node carries one scalar type;
a graph declares a default type and individual nodes may override it, which
is how an integer region inside a float program is expressed. The only
cross-type edge permitted is the widening Int16 -> Float64 edge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import ParseError, ValidationError

INT16_MIN = -32768
INT16_MAX = 32767


class ScalarType(Enum):
    INT16 = "int16"
    FLOAT64 = "float64"


class Op(Enum):
    INPUT = "input"
    CONST = "const"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    TAN = "tan"
    ARCTAN = "arctan"
    OUTPUT = "output"
    EXPORT = "export"


ARITH_OPS = frozenset({Op.ADD, Op.SUB, Op.MUL, Op.DIV})
UNARY_FLOAT_OPS = frozenset({Op.TAN, Op.ARCTAN})
PASSTHROUGH_OPS = frozenset({Op.OUTPUT, Op.EXPORT})

_ARITY = {
    Op.INPUT: 0,
    Op.CONST: 0,
    Op.ADD: 2,
    Op.SUB: 2,
    Op.MUL: 2,
    Op.DIV: 2,
    Op.TAN: 1,
    Op.ARCTAN: 1,
    Op.OUTPUT: 1,
    Op.EXPORT: 1,
}


@dataclass(frozen=True)
class DFNode:
    """One scalar operation. `dtype` overrides the graph default when set."""

    id: str
    op: Op
    operands: tuple[str, ...] = ()
    value: int | float | None = None
    dtype: ScalarType | None = None


@dataclass
class Trace:
    """Result of one evaluation: ordered outputs plus export-tap values."""

    outputs: tuple[int | float, ...]
    exports: dict[str, int | float]


@dataclass
class DFGraph:
    name: str
    dtype: ScalarType
    nodes: list[DFNode]
    inputs: list[str]
    outputs: list[str]
    # caches filled by validate()
    _node_map: dict[str, DFNode] = field(default=None, repr=False, compare=False)  # type: ignore[assignment]
    _topo: tuple[str, ...] = field(default=None, repr=False, compare=False)  # type: ignore[assignment]
    _types: dict[str, ScalarType] = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def node(self, node_id: str) -> DFNode:
        return self._node_map[node_id]

    @property
    def node_map(self) -> dict[str, DFNode]:
        return self._node_map

    @property
    def topo_order(self) -> tuple[str, ...]:
        return self._topo

    def node_type(self, node_id: str) -> ScalarType:
        return self._types[node_id]

    def node_types(self) -> dict[str, ScalarType]:
        return self._types

    def consumers(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            for op_id in n.operands:
                out[op_id].append(n.id)
        return out

    def validate(self) -> None:
        """Check structure; fills node-map/topo/type caches. Raises ValidationError."""
        node_map: dict[str, DFNode] = {}
        for n in self.nodes:
            if not n.id or not isinstance(n.id, str):
                raise ValidationError(f"node with empty or non-string id: {n!r}")
            if n.id in node_map:
                raise ValidationError(f"duplicate node id '{n.id}'")
            node_map[n.id] = n

        for n in self.nodes:
            want = _ARITY[n.op]
            if len(n.operands) != want:
                raise ValidationError(
                    f"node '{n.id}': op {n.op.value} takes {want} operands, got {len(n.operands)}"
                )
            for op_id in n.operands:
                if op_id not in node_map:
                    raise ValidationError(f"node '{n.id}': unknown operand id '{op_id}'")
            if n.op is Op.CONST:
                if n.value is None:
                    raise ValidationError(f"const node '{n.id}' has no value")
            elif n.value is not None:
                raise ValidationError(f"node '{n.id}': only const nodes carry a value")

        input_ids = [n.id for n in self.nodes if n.op is Op.INPUT]
        output_ids = [n.id for n in self.nodes if n.op is Op.OUTPUT]
        if not input_ids:
            raise ValidationError("graph has no input nodes")
        if not output_ids:
            raise ValidationError("graph has no output nodes")
        if sorted(self.inputs) != sorted(input_ids) or len(set(self.inputs)) != len(self.inputs):
            raise ValidationError("graph 'inputs' must list every input node exactly once")
        if sorted(self.outputs) != sorted(output_ids) or len(set(self.outputs)) != len(self.outputs):
            raise ValidationError("graph 'outputs' must list every output node exactly once")

        # Kahn topological sort; leftover nodes sit on a cycle.
        indeg = {n.id: len(n.operands) for n in self.nodes}
        consumers = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            for op_id in n.operands:
                consumers[op_id].append(n.id)
        ready = [n.id for n in self.nodes if indeg[n.id] == 0]
        topo: list[str] = []
        while ready:
            nid = ready.pop(0)
            topo.append(nid)
            for c in consumers[nid]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(topo) != len(self.nodes):
            stuck = next(nid for nid, d in indeg.items() if d > 0)
            raise ValidationError(f"graph contains a cycle through node '{stuck}'")

        types: dict[str, ScalarType] = {}
        for nid in topo:
            n = node_map[nid]
            if n.op in PASSTHROUGH_OPS:
                declared = n.dtype
                t = types[n.operands[0]]
                if declared is not None and declared is not t:
                    raise ValidationError(
                        f"node '{n.id}': declared type {declared.value} but operand is {t.value}"
                    )
            else:
                t = n.dtype or self.dtype
            if n.op in UNARY_FLOAT_OPS and t is not ScalarType.FLOAT64:
                raise ValidationError(f"node '{n.id}': {n.op.value} is float64-only")
            for op_id in n.operands:
                ot = types[op_id]
                if ot is t:
                    continue
                if ot is ScalarType.INT16 and t is ScalarType.FLOAT64:
                    continue  # widening edge, the permitted type boundary
                raise ValidationError(
                    f"node '{n.id}': {t.value} node cannot consume {ot.value} operand '{op_id}'"
                )
            if n.op is Op.CONST:
                _check_const(n, t)
            types[nid] = t

        self._node_map = node_map
        self._topo = tuple(topo)
        self._types = types


def _check_const(n: DFNode, t: ScalarType) -> None:
    if t is ScalarType.INT16:
        if not isinstance(n.value, int) or isinstance(n.value, bool):
            raise ValidationError(f"const node '{n.id}': int16 const must be an integer")
        if not (INT16_MIN <= n.value <= INT16_MAX):
            raise ValidationError(f"const node '{n.id}': {n.value} outside int16 range")
    else:
        if isinstance(n.value, bool) or not isinstance(n.value, (int, float)):
            raise ValidationError(f"const node '{n.id}': float64 const must be numeric")
        if n.value != n.value or n.value in (float("inf"), float("-inf")):
            raise ValidationError(f"const node '{n.id}': non-finite float const")


def graph_of(
    name: str,
    dtype: ScalarType,
    nodes: list[DFNode],
    inputs: list[str],
    outputs: list[str],
) -> DFGraph:
    """Build and validate a graph in one step."""
    g = DFGraph(name=name, dtype=dtype, nodes=nodes, inputs=inputs, outputs=outputs)
    g.validate()
    return g


# ---------------------------------------------------------------------------
# file format


def parse_program(text: str) -> DFGraph:
    """Parse a JSON program document into a validated DFGraph.

    Malformed documents raise ParseError (with line/column for JSON syntax
    errors); structural problems raise ValidationError naming the node.
    Unknown keys are tolerated so annotated documents stay readable.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    return parse_program_dict(doc)


def parse_program_dict(doc) -> DFGraph:
    if not isinstance(doc, dict):
        raise ParseError("program document must be a JSON object")
    for key in ("name", "type", "nodes", "inputs", "outputs"):
        if key not in doc:
            raise ParseError(f"program document missing '{key}'")
    try:
        gtype = ScalarType(doc["type"])
    except ValueError:
        raise ParseError(f"unknown graph type {doc['type']!r}") from None
    if not isinstance(doc["nodes"], list):
        raise ParseError("'nodes' must be a list")
    nodes: list[DFNode] = []
    for i, nd in enumerate(doc["nodes"]):
        if not isinstance(nd, dict) or "id" not in nd or "op" not in nd:
            raise ParseError(f"nodes[{i}] must be an object with 'id' and 'op'")
        try:
            op = Op(nd["op"])
        except ValueError:
            raise ParseError(f"nodes[{i}] ('{nd['id']}'): unknown op {nd['op']!r}") from None
        operands = nd.get("operands", [])
        if not isinstance(operands, list) or not all(isinstance(x, str) for x in operands):
            raise ParseError(f"nodes[{i}] ('{nd['id']}'): 'operands' must be a list of ids")
        dtype = None
        if "type" in nd:
            try:
                dtype = ScalarType(nd["type"])
            except ValueError:
                raise ParseError(f"nodes[{i}] ('{nd['id']}'): unknown type {nd['type']!r}") from None
        nodes.append(
            DFNode(
                id=str(nd["id"]),
                op=op,
                operands=tuple(operands),
                value=nd.get("value"),
                dtype=dtype,
            )
        )
    if not isinstance(doc["inputs"], list) or not isinstance(doc["outputs"], list):
        raise ParseError("'inputs' and 'outputs' must be lists of node ids")
    return graph_of(
        name=str(doc["name"]),
        dtype=gtype,
        nodes=nodes,
        inputs=[str(x) for x in doc["inputs"]],
        outputs=[str(x) for x in doc["outputs"]],
    )


def program_to_dict(graph: DFGraph) -> dict:
    nodes = []
    for n in graph.nodes:
        nd: dict = {"id": n.id, "op": n.op.value}
        if n.operands:
            nd["operands"] = list(n.operands)
        if n.op is Op.CONST:
            nd["value"] = n.value
        if n.dtype is not None and n.dtype is not graph.dtype:
            nd["type"] = n.dtype.value
        nodes.append(nd)
    return {
        "name": graph.name,
        "type": graph.dtype.value,
        "inputs": list(graph.inputs),
        "outputs": list(graph.outputs),
        "nodes": nodes,
    }


def serialize_program(graph: DFGraph) -> str:
    """Inverse of parse_program; deterministic byte-stable output."""
    return json.dumps(program_to_dict(graph), indent=2) + "\n"


# ---------------------------------------------------------------------------
# census


def op_census(graph: DFGraph) -> dict[str, int]:
    """Count arithmetic nodes: {'add_sub', 'mul', 'div', 'total'}."""
    add_sub = sum(1 for n in graph.nodes if n.op in (Op.ADD, Op.SUB))
    mul = sum(1 for n in graph.nodes if n.op is Op.MUL)
    div = sum(1 for n in graph.nodes if n.op is Op.DIV)
    return {"add_sub": add_sub, "mul": mul, "div": div, "total": add_sub + mul + div}
