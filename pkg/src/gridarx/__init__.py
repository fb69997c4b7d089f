"""Streaming recursive-ARX identification and grid-edge fault detection,
with a dq-frame small-signal simulator of the reference test circuit."""

from .baseline import Violation, VoltageLimits, limit_check
from .circuit import (
    CircuitParams,
    DqImpedance,
    StateSpaceModel,
    fault_poles,
    full_circuit_model,
    load_poles,
    nominal_impedance,
    numeric_poles,
    post_impedance,
    simplified_fault_model,
    simplified_load_model,
)
from .detector import (
    DetectionEvent,
    NominalPredictor,
    Signature,
    SignatureLibrary,
    Thresholds,
    Verdict,
    build_library,
    calibrate_nominal,
    calibrate_thresholds,
    classify,
    classify_series,
    detection_times,
    frobenius_distance,
    match_signature,
)
from .pipeline import IdentRun, identify
from .rls import (
    ArxConfig,
    IdentifierState,
    batch_weighted_ls,
    init_identifier,
    rls_update,
)
from .signals import (
    AbcSample,
    DiffSample,
    DqSample,
    RbsConfig,
    RegressorBuilder,
    abc_to_dq,
    difference_stream,
    dq_to_abc,
    rbs_generate,
)
from .simulate import DisturbanceSpec, SimResult, simulate

__version__ = "0.1.0"
