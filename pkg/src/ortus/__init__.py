"""Deterministic simulator for the Ortus virtual organism.

Compile an ``.ort`` description into a layered connectome, step its
activation dynamics in lockstep with a small respiratory physiology loop,
let correlation-driven plasticity reshape the mutable synapses, and script
the whole thing with protocol files.
"""

from .cli import asset_path, main
from .connectome import (
    BuildConfig,
    BuildError,
    ChemicalSynapse,
    Connectome,
    GapJunction,
    Layer,
    Neuron,
    NeuronParams,
    SciCapExceeded,
    UnsatisfiableRelationship,
    build,
    to_dot,
    write_csvs,
)
from .dsl import (
    Affect,
    Diagnostic,
    ElementKind,
    LexError,
    NetworkSpec,
    OrderError,
    ParseError,
    RelationKind,
    Severity,
    format_spec,
    parse,
    parse_source,
    tokenize,
    validate_spec,
)
from .errors import ConfigError, OrtusError
from .kernel import (
    ExternalInputs,
    GjMode,
    H_LEN,
    NetView,
    SimConfig,
    SimState,
    StepFluxes,
    compute_fluxes,
    conductance,
    cs_inflow,
    gj_flux,
    step,
)
from .physiology import PhysioConfig, RespirationClamp
from .plasticity import (
    Classification,
    InsufficientHistory,
    PlasticityConfig,
    apply_updates,
    classify,
    lagged_xcorr,
    plasticity_step,
    slope,
)
from .protocol import (
    Protocol,
    ProtocolError,
    Query,
    QueryError,
    RunConfig,
    TraceLog,
    control_variant,
    load_protocol,
    parse_protocol,
    run,
    summarize,
)

__version__ = "0.1.0"
