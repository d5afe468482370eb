"""Sentinel construction, grafting, round trips, judging, site picking."""

import math
import struct

import pytest

import oracles as O
from dhac import (
    ArithBackend,
    DFNode,
    FpTruncModel,
    InstrumentedGraph,
    Judgement,
    Op,
    ScalarType,
    Sentinel,
    SentinelKind,
    SiteError,
    Trace,
    TraceError,
    ValidationError,
    auto_sites,
    builtin_spec,
    draw_inputs,
    evaluate,
    graph_of,
    instrument,
    judge,
    make_sentinel,
    program_to_dict,
    sentinel_roundtrip,
)
from dhac.fbc import (
    backward_steps,
    forward_steps,
    instrumented_from_dict,
    instrumented_to_dict,
)
from dhac.rng import substream
from graphs import float_graph, mixed_graph

ACC = ArithBackend.accurate()
KINDS = [SentinelKind.ADDITION, SentinelKind.MULTIPLICATION, SentinelKind.TAN_ARCTAN]


def bits(x):
    return struct.pack("<d", x)


def _sentinel(kind, site="m", seed=7, **kw):
    return make_sentinel(kind, site, substream(seed, "t-fbc", str(kind)), **kw)


class TestSentinel:
    def test_tan_shape_enforced(self):
        with pytest.raises(ValidationError, match="tan sentinel"):
            Sentinel(kind=SentinelKind.TAN_ARCTAN, site="m", n=2, operands=())
        with pytest.raises(ValidationError, match="tan sentinel"):
            Sentinel(kind=SentinelKind.TAN_ARCTAN, site="m", n=1, operands=(0.5,))

    def test_step_count(self):
        with pytest.raises(ValidationError, match="n >= 1"):
            Sentinel(kind=SentinelKind.ADDITION, site="m", n=0, operands=())
        with pytest.raises(ValidationError, match="expected 3 operands"):
            Sentinel(kind=SentinelKind.ADDITION, site="m", n=3, operands=(0.5,))

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.5, 2.0])
    def test_mul_operands_open_unit_interval(self, bad):
        with pytest.raises(ValidationError, match="\\(0, 1\\)"):
            Sentinel(kind=SentinelKind.MULTIPLICATION, site="m", n=2, operands=(0.5, bad))
        # add sentinels have no such restriction
        Sentinel(kind=SentinelKind.ADDITION, site="m", n=2, operands=(0.5, bad))

    @pytest.mark.parametrize("delta", [0.0, -1e-13])
    def test_delta_positive(self, delta):
        with pytest.raises(ValidationError, match="delta"):
            Sentinel(kind=SentinelKind.TAN_ARCTAN, site="m", n=1, operands=(), delta=delta)


class TestMakeSentinel:
    def test_deterministic(self):
        a = make_sentinel("add", "m", substream(3, "s"), n=4, delta=1e-12)
        b = make_sentinel("add", "m", substream(3, "s"), n=4, delta=1e-12)
        assert a == b
        assert a.n == 4 and len(a.operands) == 4 and a.delta == 1e-12

    def test_tan_ignores_n(self):
        s = _sentinel("tan", n=5)
        assert s.kind is SentinelKind.TAN_ARCTAN
        assert s.n == 1 and s.operands == ()

    def test_mul_operands_in_unit_interval(self):
        s = _sentinel(SentinelKind.MULTIPLICATION, n=8)
        assert all(0.0 < r < 1.0 for r in s.operands)

    def test_kind_spelled_out(self):
        assert _sentinel("mul").kind is SentinelKind.MULTIPLICATION
        with pytest.raises(ValueError):
            _sentinel("cos")


class TestSteps:
    def test_add_structure(self):
        s = Sentinel(kind=SentinelKind.ADDITION, site="m", n=3, operands=(0.5, 0.25, 2.0))
        assert forward_steps(s) == [(Op.ADD, 0.5), (Op.ADD, 0.25), (Op.ADD, 2.0)]
        assert backward_steps(s) == [(Op.SUB, 2.0), (Op.SUB, 0.25), (Op.SUB, 0.5)]

    def test_mul_structure(self):
        s = Sentinel(kind=SentinelKind.MULTIPLICATION, site="m", n=2, operands=(0.5, 0.75))
        assert forward_steps(s) == [(Op.MUL, 0.5), (Op.MUL, 0.75)]
        assert backward_steps(s) == [(Op.DIV, 0.75), (Op.DIV, 0.5)]

    def test_tan_structure(self):
        s = Sentinel(kind=SentinelKind.TAN_ARCTAN, site="m", n=1, operands=())
        assert forward_steps(s) == [(Op.ARCTAN, None)]
        assert backward_steps(s) == [(Op.TAN, None)]


class TestRoundtrip:
    @pytest.mark.parametrize("kind", KINDS)
    def test_exact_arithmetic_stays_under_threshold(self, kind):
        s = _sentinel(kind)
        rng = substream(9, "rt", s.kind.value)
        for _ in range(200):
            x = float(rng.uniform(-4.0, 4.0))
            restored, d = sentinel_roundtrip(s, x)
            assert d == abs(x - restored)
            assert d < 1e-14

    def test_matches_plain_float_chain(self):
        s = _sentinel("add", n=3)
        x = 1.375
        v = x
        for r in s.operands:
            v = v + r
        for r in reversed(s.operands):
            v = v - r
        assert bits(sentinel_roundtrip(s, x)[0]) == bits(v)

        t = _sentinel("tan")
        assert bits(sentinel_roundtrip(t, x)[0]) == bits(math.tan(math.atan(x)))

    def test_truncated_arithmetic_drifts(self):
        s = _sentinel("mul", n=3)
        x = 1.2345678901234
        _, d_exact = sentinel_roundtrip(s, x)
        _, d_fp10 = sentinel_roundtrip(s, x, FpTruncModel(10))
        _, d_fp20 = sentinel_roundtrip(s, x, FpTruncModel(20))
        assert d_exact < 1e-14 < d_fp10 < d_fp20

    def test_truncation_matches_oracle_chain(self):
        s = _sentinel("mul", n=2)
        tr = lambda v: O.ref_trunc_mantissa(v, 20)
        x = 0.816406231
        v = x
        for r in s.operands:
            v = tr(v) * tr(r)
        for r in reversed(s.operands):
            v = tr(v) / tr(r)
        assert bits(sentinel_roundtrip(s, x, FpTruncModel(20))[0]) == bits(v)


class TestInstrument:
    def _one(self, kind="add", site="a"):
        g = float_graph()
        s = _sentinel(kind, site=site)
        return g, instrument(g, [s])

    def test_ids_and_exports(self):
        g, ins = self._one()
        s = ins.sentinels[0]
        assert ins.graph.name == f"{g.name}+fbc"
        assert s.entry_export == "a__fbc0_in"
        assert s.exit_export == "a__fbc0_out"
        ids = {n.id for n in ins.graph.nodes}
        assert {"a__fbc0_s0", "a__fbc0_s5", "a__fbc0_r2"} <= ids
        assert "a__fbc0_s6" not in ids

    def test_host_untouched(self):
        g, ins = self._one()
        host = {n.id: n for n in g.nodes}
        for n in ins.graph.nodes:
            if n.id in host:
                assert n == host[n.id]
        assert ins.graph.inputs == g.inputs
        assert ins.graph.outputs == g.outputs

    def test_multiple_sentinels_indexed(self):
        g = float_graph()
        ss = [_sentinel("add", site="a"), _sentinel("tan", site="m")]
        ins = instrument(g, ss)
        assert ins.sentinels[0].entry_export == "a__fbc0_in"
        assert ins.sentinels[1].entry_export == "m__fbc1_in"

    def test_unknown_site(self):
        g = float_graph()
        with pytest.raises(SiteError, match="not in graph"):
            instrument(g, [_sentinel("add", site="nope")])

    def test_integer_site(self):
        with pytest.raises(SiteError, match="float64"):
            instrument(mixed_graph(), [_sentinel("add", site="m")])

    def test_duplicate_site(self):
        g = float_graph()
        with pytest.raises(SiteError, match="duplicate"):
            instrument(g, [_sentinel("add", site="a"), _sentinel("mul", site="a")])

    def test_id_collision(self):
        nodes = [
            DFNode(id="u", op=Op.INPUT, operands=()),
            DFNode(id="a", op=Op.ADD, operands=("u", "u")),
            DFNode(id="a__fbc0_in", op=Op.EXPORT, operands=("a",)),
            DFNode(id="out", op=Op.OUTPUT, operands=("a",)),
        ]
        g = graph_of("clash", ScalarType.FLOAT64, nodes, ["u"], ["out"])
        with pytest.raises(SiteError, match="collision"):
            instrument(g, [_sentinel("add", site="a")])

    @pytest.mark.parametrize("backend", [ACC, ArithBackend.approximate(fp_bits=10)])
    def test_host_outputs_bit_equal(self, backend):
        g = float_graph()
        ins = instrument(g, [_sentinel(k, site=site) for k, site in [("add", "a"), ("mul", "d"), ("tan", "m")]])
        rng = substream(13, "noninterf")
        for _ in range(25):
            u, v = float(rng.uniform(-2, 2)), float(rng.uniform(0.5, 2))
            plain = evaluate(g, [u, v], backend)
            rich = evaluate(ins.graph, [u, v], backend)
            assert bits(plain.outputs[0]) == bits(rich.outputs[0])
            assert bits(plain.exports["ex"]) == bits(rich.exports["ex"])

    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("fp_bits", [0, 10])
    def test_graph_detour_matches_roundtrip_helper(self, kind, fp_bits):
        g = float_graph()
        s = _sentinel(kind, site="sd")
        ins = instrument(g, [s])
        placed = ins.sentinels[0]
        backend = ACC if fp_bits == 0 else ArithBackend.approximate(fp_bits=fp_bits)
        trace = evaluate(ins.graph, [0.5, 1.25], backend)
        tapped = trace.exports[placed.entry_export]
        restored, _ = sentinel_roundtrip(s, tapped, backend.fp)
        assert bits(trace.exports[placed.exit_export]) == bits(restored)


class TestJudge:
    def _placed(self, delta=1e-13):
        g = float_graph()
        s = _sentinel("add", site="a")
        s = Sentinel(kind=s.kind, site=s.site, n=s.n, operands=s.operands, delta=delta)
        return instrument(g, [s])

    def _trace(self, ins, a, b):
        s = ins.sentinels[0]
        return Trace(outputs=(0.0,), exports={s.entry_export: a, s.exit_export: b, "ex": 0.0})

    def test_negative_below_threshold(self):
        ins = self._placed()
        v = judge(ins, self._trace(ins, 1.0, 1.0 + 1e-14))
        assert v.judgement is Judgement.NEGATIVE
        assert not v.positive
        r = v.results[0]
        assert (r.kind, r.site, r.positive) == (SentinelKind.ADDITION, "a", False)
        assert r.distance == abs(1.0 - (1.0 + 1e-14))

    def test_boundary_distance_is_positive(self):
        ins = self._placed(delta=0.25)
        assert judge(ins, self._trace(ins, 1.0, 1.25)).positive
        assert not judge(ins, self._trace(ins, 1.0, 1.2499)).positive

    @pytest.mark.parametrize("weird", [math.inf, math.nan])
    def test_non_finite_is_positive(self, weird):
        ins = self._placed()
        v = judge(ins, self._trace(ins, 1.0, weird))
        assert v.positive and v.results[0].positive

    def test_missing_export(self):
        ins = self._placed()
        t = Trace(outputs=(0.0,), exports={ins.sentinels[0].entry_export: 1.0})
        with pytest.raises(TraceError, match="lacks sentinel export"):
            judge(ins, t)

    def test_uninstrumented_sentinel(self):
        raw = InstrumentedGraph(graph=float_graph(), sentinels=(_sentinel("add", site="a"),))
        with pytest.raises(TraceError, match="never instrumented"):
            judge(raw, Trace(outputs=(), exports={}))

    def test_one_bad_sentinel_flips_verdict(self):
        g = float_graph()
        ins = instrument(g, [_sentinel("add", site="a"), _sentinel("mul", site="d")])
        s0, s1 = ins.sentinels
        t = Trace(
            outputs=(0.0,),
            exports={
                s0.entry_export: 1.0,
                s0.exit_export: 1.0,
                s1.entry_export: 1.0,
                s1.exit_export: 1.0 + 1e-9,
            },
        )
        v = judge(ins, t)
        assert v.positive
        assert [r.positive for r in v.results] == [False, True]

    def test_end_to_end_exact_run_is_negative(self):
        g = float_graph()
        ins = instrument(g, [_sentinel(k, site=s) for k, s in [("add", "a"), ("mul", "d"), ("tan", "m")]])
        v = judge(ins, evaluate(ins.graph, [0.5, 1.25], ACC))
        assert v.judgement is Judgement.NEGATIVE

    def test_end_to_end_truncated_run_is_positive(self):
        g = float_graph()
        ins = instrument(g, [_sentinel("mul", site="m")])
        v = judge(ins, evaluate(ins.graph, [0.5, 1.25], ArithBackend.approximate(fp_bits=20)))
        assert v.positive


class TestAutoSites:
    def test_prefers_nodes_feeding_outputs(self):
        g = float_graph()
        assert auto_sites(g, 1) == ["m"]
        assert auto_sites(g, 2) == ["m", "a"]
        assert auto_sites(g, 4) == ["m", "a", "d", "sd"]

    def test_spread_over_pool(self):
        assert auto_sites(mixed_graph(), 2) == ["fm", "fa"]

    def test_too_few_sites(self):
        with pytest.raises(SiteError, match="need 5"):
            auto_sites(float_graph(), 5)
        with pytest.raises(SiteError, match="only 0 float sites"):
            auto_sites(builtin_spec("fir").graph, 1)

    def test_conv_layer_sites_are_usable(self):
        g = builtin_spec("conv_layer").graph
        sites = auto_sites(g, 3)
        assert len(set(sites)) == 3
        instrument(g, [_sentinel("add", site=s) for s in sites])


class TestFileRoundTrip:
    def test_round_trip(self):
        g = float_graph()
        ins = instrument(g, [_sentinel("mul", site="a"), _sentinel("tan", site="m")])
        back = instrumented_from_dict(instrumented_to_dict(ins))
        assert back.sentinels == ins.sentinels
        # dtype tags matching the graph default are dropped on the way out,
        # so compare the serialized form, not the raw nodes
        assert program_to_dict(back.graph) == program_to_dict(ins.graph)
        assert back.graph.name == ins.graph.name

    def test_missing_keys(self):
        with pytest.raises(ValidationError, match="'graph' and 'sentinels'"):
            instrumented_from_dict({"graph": {}})
        with pytest.raises(ValidationError, match="'graph' and 'sentinels'"):
            instrumented_from_dict({"sentinels": []})

    def test_judgeable_after_round_trip(self):
        g = float_graph()
        ins = instrument(g, [_sentinel("add", site="a")])
        back = instrumented_from_dict(instrumented_to_dict(ins))
        v = judge(back, evaluate(back.graph, [0.5, 1.25], ACC))
        assert not v.positive
