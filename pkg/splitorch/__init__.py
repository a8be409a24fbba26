"""Adaptive split inference of foundation models across edge and cloud"""

from .utils import (
    config,
    SplitorchException,
    InvalidBoundary,
    UnknownNode,
    NoLink,
    TraceError,
    OverloadSingularity,
    NoFeasiblePlacement,
    GreedyDeadEnd,
    ConfigError,
    SplitorchWarning,
    UnknownConfigKeyWarning,
)
from .model import (
    LayerProfile,
    ModelProfile,
    Segment,
    SplitScheme,
    make_split,
    enumerate_splits,
    subdivide,
)
from .infra import Trace, Node, Link, Topology, CapacitySnapshot
from .cost import (
    CostWeights,
    CostParams,
    SystemState,
    LatencyBreakdown,
    CostBreakdown,
    latency,
    utilization_term,
    privacy_violations,
    total_cost,
)
from .solver import (
    Placement,
    FeasibilityReport,
    check_feasible,
    solve_placement,
    brute_force_oracle,
    greedy_placement,
    GreedyGap,
    greedy_gap,
    split_revision,
)
from .monitor import (
    TriggerThresholds,
    EnvironmentState,
    TriggerReport,
    Monitor,
    update_ewma,
    should_reconfigure,
)
from .orchestrator import (
    Mode,
    MigrationPolicy,
    ReconfigEvent,
    OrchestratorState,
    initial_deployment,
    orchestration_step,
)
from .simulator import (
    RequestRecord,
    KpiWindow,
    SimulationResult,
    ComparisonRow,
    run_scenario,
    compare_static_adaptive,
)
from .scenario import ScenarioConfig, load_config, bundled_config_path

__version__ = "0.1.0"
