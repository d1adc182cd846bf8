"""Discrete-event abstraction of continuous plants over hypersurface partitions."""

from .abstraction import (
    DesAutomaton,
    ExtractionConfig,
    ObservabilityReport,
    Trace,
    Transition,
    check_observability,
    extract,
    reconstruct,
    simulate_closed_loop,
    successor,
)
from .errors import (
    BoundaryStateError,
    CapacityError,
    DesPlantError,
    DivergenceError,
    EmptyDomainError,
    InadmissibleSequenceError,
    InputError,
    NotObservableError,
)
from .events import PlantEvent, PlantSymbol, check_simultaneity, detect_events, event_to_symbol
from .partition import (
    CellLabel,
    CellRegistry,
    Functional,
    PartitionSpec,
    adjacency,
    cell_of,
    enumerate_candidate_cells,
    evaluate,
    is_consistent,
    quality,
)
from .plant import (
    ControlAlphabet,
    ControlSchedule,
    LinearField,
    PlantSystem,
    TrajectorySegment,
    actuate,
    closed_form_double_integrator,
    double_integrator_system,
    flow,
    integrate_step,
)

__version__ = "0.1.0"
