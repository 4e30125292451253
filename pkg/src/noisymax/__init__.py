"""Exact Bayesian-network inference with factored noisy-max CPDs.

The package splits into four layers: :mod:`noisymax.model` (variables,
factors, networks, the JSON format), :mod:`noisymax.factorize` (expansion of
noisy-max nodes under four strategies plus the enumeration oracle),
:mod:`noisymax.infer` (variable elimination over generalized factors), and
:mod:`noisymax.bench` (synthetic generators and the benchmark runner).
"""

from .model import (
    CycleError,
    DanglingReferenceError,
    Factor,
    GuardExceededError,
    LinkTable,
    MalformedDistributionError,
    Network,
    NetworkError,
    NetworkSyntaxError,
    NoisyMaxCpd,
    SchemaError,
    TableCpd,
    Variable,
    factor_index,
    parse_network,
    serialize_network,
)
from .factorize import (
    ExpandedNetwork,
    ExpansionResult,
    SizeReport,
    Strategy,
    cumulative_density,
    encoding_entries,
    expand,
    expand_cpd,
    expand_multiplicative,
    expand_parent_divorcing,
    expand_temporal,
    expand_trivial,
    oracle_cpd,
)
from .infer import (
    EliminationStats,
    Heuristic,
    InferenceError,
    NegativeMassError,
    Query,
    ZeroPosteriorError,
    align,
    brute_force_joint,
    choose_next,
    marginalize,
    multiply,
    query_posterior,
    restrict,
)
from .bench import (
    AgreementError,
    BenchReport,
    GeneratorSpec,
    SplitMix64,
    generate,
    run_benchmark,
)

__version__ = "0.1.0"
