"""Degradation analysis of series-parallel systems with probabilistic parallel choice."""

from relichoice.analysis import (
    DomainError,
    NoViablePath,
    QuadraticRoots,
    RteResult,
    ShapeUnsupported,
    UnresolvedLeaf,
    assign_weights,
    failure_probability,
    mtbf,
    mttf,
    mttr,
    pdf,
    quadratic_rte_roots,
    rte,
    sfr,
    success_probability,
    survival,
)
from relichoice.dsl import ParseError, SchemaError, SourceSpan, format_spec, load, load_structured, parse
from relichoice.model import (
    ComponentParams,
    InvalidSpec,
    Leaf,
    MalformedExpression,
    ProbChoice,
    RelichoiceError,
    Series,
    SystemSpec,
    UniformChoice,
    Violation,
    WeightVector,
    binary_choice,
    canonicalize,
    shape_of,
    validate,
)
from relichoice.montecarlo import (
    SimulationConfig,
    SimulationEstimate,
    estimate_mttf,
    estimate_survival,
    sample_failure_time,
)
from relichoice.report import AnalysisReport, analyze

__version__ = "0.1.0"
