"""dhac: detect jobs silently executed on approximate hardware.

Two golden-model-free checks over scalar dataflow programs: a residue
recheck for integer jobs (rcc) and forward-backward float sentinels (fbc),
plus parametric models of approximate arithmetic units and a strategically
dishonest server to measure both checks against.
"""

from .approx import (
    ArithBackend,
    ErrorStats,
    FpTruncModel,
    IntUnitModel,
    Paradigm,
    backend_from_dict,
    backend_to_dict,
    error_stats,
    trunc_mantissa,
)
from .errors import (
    BuiltinError,
    ConfigError,
    DhacError,
    EvalError,
    InputError,
    ModulusError,
    NoInverseError,
    ParseError,
    SiteError,
    StatsError,
    TraceError,
    ValidationError,
)
from .fbc import (
    FbcVerdict,
    InstrumentedGraph,
    Sentinel,
    SentinelKind,
    SentinelResult,
    auto_sites,
    instrument,
    judge,
    make_sentinel,
    sentinel_roundtrip,
)
from .graph import (
    DFGraph,
    DFNode,
    Op,
    ScalarType,
    Trace,
    graph_of,
    op_census,
    parse_program,
    program_to_dict,
    serialize_program,
)
from .interp import evaluate, evaluate_batch
from .programs import BuiltinSpec, builtin_program, builtin_spec, draw_inputs
from .rcc import (
    CheckSegment,
    Judgement,
    ModuleSet,
    RccVerdict,
    Residue,
    evaluate_mod,
    extract_segments,
    rcc_check,
    ring_add,
    ring_div,
    ring_inv,
    ring_mul,
    ring_sub,
    to_residue,
)
from .rng import substream
from .scenario import (
    DetectionReport,
    ScenarioConfig,
    ServerState,
    ServerStrategy,
    TrialRecord,
    config_from_dict,
    default_combos,
    ground_truth_oracle,
    report_to_csv,
    run_bench,
    run_fbc_trials,
    run_rcc_trials,
    server_execute,
    server_state,
    sweep_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "ArithBackend",
    "BuiltinError",
    "BuiltinSpec",
    "CheckSegment",
    "ConfigError",
    "DFGraph",
    "DFNode",
    "DetectionReport",
    "DhacError",
    "ErrorStats",
    "EvalError",
    "FbcVerdict",
    "FpTruncModel",
    "InputError",
    "InstrumentedGraph",
    "IntUnitModel",
    "Judgement",
    "ModuleSet",
    "ModulusError",
    "NoInverseError",
    "Op",
    "Paradigm",
    "ParseError",
    "RccVerdict",
    "Residue",
    "ScalarType",
    "ScenarioConfig",
    "Sentinel",
    "SentinelKind",
    "SentinelResult",
    "ServerState",
    "ServerStrategy",
    "SiteError",
    "StatsError",
    "Trace",
    "TraceError",
    "TrialRecord",
    "ValidationError",
    "auto_sites",
    "backend_from_dict",
    "backend_to_dict",
    "builtin_program",
    "builtin_spec",
    "config_from_dict",
    "default_combos",
    "draw_inputs",
    "error_stats",
    "evaluate",
    "evaluate_batch",
    "evaluate_mod",
    "extract_segments",
    "graph_of",
    "ground_truth_oracle",
    "instrument",
    "judge",
    "make_sentinel",
    "op_census",
    "parse_program",
    "program_to_dict",
    "rcc_check",
    "report_to_csv",
    "ring_add",
    "ring_div",
    "ring_inv",
    "ring_mul",
    "ring_sub",
    "run_bench",
    "run_fbc_trials",
    "run_rcc_trials",
    "sentinel_roundtrip",
    "serialize_program",
    "server_execute",
    "server_state",
    "substream",
    "sweep_threshold",
    "to_residue",
    "trunc_mantissa",
    "__version__",
]
