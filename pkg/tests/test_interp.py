"""Interpreter: scalar/batch parity, wrapping, errors, export taps."""

import numpy as np
import pytest

import oracles as O
from dhac import (
    ArithBackend,
    DFNode,
    EvalError,
    InputError,
    IntUnitModel,
    Op,
    ScalarType,
    builtin_spec,
    draw_inputs,
    evaluate,
    evaluate_batch,
    graph_of,
)
from dhac.approx import add16, mul16, neg16
from dhac.rng import substream
from graphs import float_graph, int_div_graph, mixed_graph

ACC = ArithBackend.accurate()


def _n(nid, op, *operands, value=None, dtype=None):
    return DFNode(id=nid, op=op, operands=tuple(operands), value=value, dtype=dtype)


def add_graph():
    nodes = [_n("x", Op.INPUT), _n("y", Op.INPUT), _n("s", Op.ADD, "x", "y"), _n("out", Op.OUTPUT, "s")]
    return graph_of("addg", ScalarType.INT16, nodes, ["x", "y"], ["out"])


def sub_graph():
    nodes = [_n("x", Op.INPUT), _n("y", Op.INPUT), _n("s", Op.SUB, "x", "y"), _n("out", Op.OUTPUT, "s")]
    return graph_of("subg", ScalarType.INT16, nodes, ["x", "y"], ["out"])


class TestScalarSemantics:
    def test_matches_unbounded_oracle_mod_2_16(self):
        # inputs well past the documented bounds force intermediate wrap;
        # the wrapped run must agree with big-int evaluation mod 2^16
        g = builtin_spec("fir").graph
        rng = substream(3, "wrap")
        for _ in range(50):
            ins = [int(v) for v in rng.integers(-32768, 32768, size=11)]
            got = evaluate(g, ins, ACC).outputs[0]
            unbounded, _ = O.eval_unbounded(g, ins)
            assert got == O.signed16(unbounded[0])

    def test_builtin_in_range_no_wrap(self):
        spec = builtin_spec("rk3")
        rng = substream(4, "inrange")
        for _ in range(20):
            ins = draw_inputs(spec, rng)
            got = evaluate(spec.graph, ins, ACC).outputs[0]
            unbounded, _ = O.eval_unbounded(spec.graph, ins)
            assert got == unbounded[0]

    def test_approx_adder_applied(self):
        g = add_graph()
        m = IntUnitModel("loa", 4)
        be = ArithBackend.approximate(adder=m)
        for x, y in [(1234, 567), (-5, 31), (32767, 1)]:
            assert evaluate(g, [x, y], be).outputs[0] == add16(m, x, y)

    def test_sub_routes_through_adder(self):
        g = sub_graph()
        m = IntUnitModel("loa", 4)
        be = ArithBackend.approximate(adder=m)
        for x, y in [(100, 3), (-100, 3), (5, -31)]:
            assert evaluate(g, [x, y], be).outputs[0] == add16(m, x, neg16(y))

    def test_approx_multiplier_applied(self):
        nodes = [_n("x", Op.INPUT), _n("y", Op.INPUT), _n("p", Op.MUL, "x", "y"), _n("out", Op.OUTPUT, "p")]
        g = graph_of("mulg", ScalarType.INT16, nodes, ["x", "y"], ["out"])
        m = IntUnitModel("log_approx")
        be = ArithBackend.approximate(multiplier=m)
        assert evaluate(g, [5, 10], be).outputs[0] == 48
        assert evaluate(g, [5, 10], ACC).outputs[0] == 50
        assert evaluate(g, [7, 13], be).outputs[0] == mul16(m, 7, 13)

    def test_integer_division_exact_both_paradigms(self):
        g = int_div_graph()
        approx = ArithBackend.approximate(IntUnitModel("loa", 4), IntUnitModel("trunc_mul", 4))
        assert evaluate(g, [123, 5], ACC).outputs[0] == 123
        # the approximate multiplier corrupts p, but division itself stays exact
        p = mul16(IntUnitModel("trunc_mul", 4), 123, 5)
        if p % 5 == 0:
            assert evaluate(g, [123, 5], approx).outputs[0] == p // 5

    def test_div_by_zero(self):
        g = int_div_graph()
        with pytest.raises(EvalError, match="div-by-zero") as ei:
            evaluate(g, [5, 0], ACC)
        assert ei.value.node_id == "q"

    def test_inexact_div(self):
        nodes = [_n("x", Op.INPUT), _n("y", Op.INPUT), _n("q", Op.DIV, "x", "y"), _n("out", Op.OUTPUT, "q")]
        g = graph_of("divg", ScalarType.INT16, nodes, ["x", "y"], ["out"])
        assert evaluate(g, [42, 7], ACC).outputs[0] == 6
        with pytest.raises(EvalError, match="inexact-div"):
            evaluate(g, [7, 2], ACC)

    def test_float_ops_and_export(self):
        import math

        g = float_graph()
        tr = evaluate(g, [0.25, 2.0], ACC)
        sd = math.atan(math.tan(0.25 + 0.75)) / 2.0 - 0.25
        assert tr.exports["ex"] == sd
        assert tr.outputs[0] == sd * 2.0

    def test_float_div_by_zero(self):
        g = float_graph()
        with pytest.raises(EvalError, match="div-by-zero"):
            evaluate(g, [0.25, 0.0], ACC)

    def test_nonfinite_result_rejected(self):
        nodes = [_n("u", Op.INPUT), _n("p", Op.MUL, "u", "u"), _n("out", Op.OUTPUT, "p")]
        g = graph_of("ovf", ScalarType.FLOAT64, nodes, ["u"], ["out"])
        with pytest.raises(EvalError, match="non-finite"):
            evaluate(g, [1e200], ACC)

    def test_mixed_widening(self):
        import math

        g = mixed_graph()
        tr = evaluate(g, [10, 5, 9, 2], ACC)
        assert tr.outputs[0] == math.atan((10 * 3 + 5) * 0.5 + (9 - 2) ** 2)

    def test_int_const_in_float_graph_coerced(self):
        nodes = [_n("u", Op.INPUT), _n("c", Op.CONST, value=2), _n("m", Op.MUL, "u", "c"), _n("out", Op.OUTPUT, "m")]
        g = graph_of("coerce", ScalarType.FLOAT64, nodes, ["u"], ["out"])
        r = evaluate(g, [1.5], ACC).outputs[0]
        assert isinstance(r, float) and r == 3.0

    def test_multiple_outputs_ordered(self):
        nodes = [
            _n("x", Op.INPUT),
            _n("y", Op.INPUT),
            _n("s", Op.ADD, "x", "y"),
            _n("d", Op.SUB, "x", "y"),
            _n("o1", Op.OUTPUT, "s"),
            _n("o2", Op.OUTPUT, "d"),
        ]
        g = graph_of("two", ScalarType.INT16, nodes, ["x", "y"], ["o1", "o2"])
        assert evaluate(g, [7, 2], ACC).outputs == (9, 5)

    def test_validates_lazily(self):
        from dhac import DFGraph

        g = DFGraph("lazy", ScalarType.INT16, add_graph().nodes, ["x", "y"], ["out"])
        assert evaluate(g, [1, 2], ACC).outputs[0] == 3


class TestInputChecks:
    def test_wrong_count(self):
        with pytest.raises(InputError, match="expected 2 inputs"):
            evaluate(add_graph(), [1], ACC)

    def test_bool_rejected(self):
        with pytest.raises(InputError, match="expected an integer"):
            evaluate(add_graph(), [True, 2], ACC)

    def test_out_of_range(self):
        with pytest.raises(InputError, match="outside int16"):
            evaluate(add_graph(), [40000, 0], ACC)

    def test_float_into_int_graph(self):
        with pytest.raises(InputError, match="expected an integer"):
            evaluate(add_graph(), [1.5, 2], ACC)

    def test_nonfinite_float_input(self):
        with pytest.raises(InputError, match="non-finite"):
            evaluate(float_graph(), [float("nan"), 1.0], ACC)

    def test_batch_wrong_length(self):
        cols = [np.arange(5), np.arange(4)]
        with pytest.raises(InputError, match="length 5"):
            evaluate_batch(add_graph(), cols, ACC)

    def test_batch_wrong_dtype(self):
        cols = [np.array([1.0, 2.0]), np.array([3.0, 4.0])]
        with pytest.raises(InputError, match="expected integers"):
            evaluate_batch(add_graph(), cols, ACC)

    def test_batch_out_of_range(self):
        cols = [np.array([1, 70000]), np.array([3, 4])]
        with pytest.raises(InputError, match="outside int16"):
            evaluate_batch(add_graph(), cols, ACC)


BACKENDS = [
    ACC,
    ArithBackend.approximate(IntUnitModel("loa", 4), IntUnitModel("trunc_mul", 4)),
    ArithBackend.approximate(IntUnitModel("seg_carry", 4), IntUnitModel("log_approx")),
    ArithBackend.approximate(IntUnitModel("trunc_add", 6), IntUnitModel("broken_array", 4)),
]


class TestBatchParity:
    """evaluate_batch row i must equal evaluate on row i, bit for bit."""

    @pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.label())
    @pytest.mark.parametrize("name", ["fir", "conv2x2", "euler2", "euler3", "rk2", "rk3"])
    def test_integer_builtins(self, name, backend):
        spec = builtin_spec(name)
        cols = draw_inputs(spec, substream(11, "parity", name), 64)
        batch = evaluate_batch(spec.graph, cols, backend)
        for i in range(0, 64, 7):
            row = [int(c[i]) for c in cols]
            assert evaluate(spec.graph, row, backend).outputs[0] == batch.outputs[0][i]

    @pytest.mark.parametrize("bits", [0, 10, 20])
    def test_float_graph(self, bits):
        g = float_graph()
        backend = ArithBackend.approximate(fp_bits=bits) if bits else ACC
        rng = substream(12, "parity", "float")
        cols = [rng.uniform(-1, 1, size=40), rng.uniform(0.5, 2.0, size=40)]
        batch = evaluate_batch(g, cols, backend)
        for i in range(40):
            tr = evaluate(g, [float(cols[0][i]), float(cols[1][i])], backend)
            assert np.float64(tr.outputs[0]).tobytes() == batch.outputs[0][i].tobytes()
            assert np.float64(tr.exports["ex"]).tobytes() == batch.exports["ex"][i].tobytes()

    def test_tan_and_arctan_bit_identical(self):
        # frompyfunc keeps the batch trig on libm, same as the scalar path
        g = float_graph()
        rng = substream(13, "parity", "trig")
        cols = [rng.uniform(-1.5, 1.5, size=200), rng.uniform(1.0, 3.0, size=200)]
        batch = evaluate_batch(g, cols, ACC)
        idx = [0, 17, 99, 199]
        for i in idx:
            tr = evaluate(g, [float(cols[0][i]), float(cols[1][i])], ACC)
            assert np.float64(tr.outputs[0]).tobytes() == batch.outputs[0][i].tobytes()

    def test_mixed_graph(self):
        g = mixed_graph()
        rng = substream(14, "parity", "mixed")
        cols = [rng.integers(-50, 50, size=32) for _ in range(4)]
        batch = evaluate_batch(g, cols, ACC)
        for i in range(32):
            row = [int(c[i]) for c in cols]
            tr = evaluate(g, row, ACC)
            assert np.float64(tr.outputs[0]).tobytes() == batch.outputs[0][i].tobytes()

    def test_int_division_batch(self):
        g = int_div_graph()
        cols = [np.array([3, -11, 120]), np.array([5, 3, 7])]
        batch = evaluate_batch(g, cols, ACC)
        assert list(batch.outputs[0]) == [3, -11, 120]

    def test_batch_div_by_zero(self):
        g = int_div_graph()
        with pytest.raises(EvalError, match="div-by-zero"):
            evaluate_batch(g, [np.array([1, 2]), np.array([1, 0])], ACC)

    def test_batch_inexact_div(self):
        nodes = [_n("x", Op.INPUT), _n("y", Op.INPUT), _n("q", Op.DIV, "x", "y"), _n("out", Op.OUTPUT, "q")]
        g = graph_of("divg2", ScalarType.INT16, nodes, ["x", "y"], ["out"])
        with pytest.raises(EvalError, match="inexact-div"):
            evaluate_batch(g, [np.array([6, 7]), np.array([3, 2])], ACC)

    def test_batch_nonfinite(self):
        nodes = [_n("u", Op.INPUT), _n("p", Op.MUL, "u", "u"), _n("out", Op.OUTPUT, "p")]
        g = graph_of("ovf2", ScalarType.FLOAT64, nodes, ["u"], ["out"])
        with pytest.raises(EvalError, match="non-finite"):
            evaluate_batch(g, [np.array([1.0, 1e200])], ACC)
