"""Scenario documents

A scenario is a JSON document with the sections below. Only `model`,
`topology` and `baseline` are required; everything else has a default.

```json
{
  "name": "urban_5g_mec",
  "model": {"name": "...", "uniform": {"num_layers": 32, ...}},
  "topology": {
    "nodes": [{"id": "mec-0", "compute_rate": 2.5e13, ...}],
    "links": [{"between": ["mec-0", "cloud"], "bandwidth_mbps": 100}],
    "default_link": {"bandwidth_mbps": 1000, "propagation_delay_ms": 1}
  },
  "weights": {"alpha": 1, "beta": 10, "gamma": 1000},
  "thresholds": {"l_max_ms": 150, "u_max": 0.85, ...},
  "calibration": {"q_scale_ms": 20, ...},
  "arrival_rate": 5, "workload": 1, "duration_s": 120, "seed": 0,
  "mode": "adaptive", "max_segments": 3,
  "baseline": {"boundaries": [2, 30], "placement": ["mec-0", "cloud", "mec-0"]}
}
```

Time-varying quantities (`utilization`, `mem_reserved`, `bandwidth_mbps`)
take a scalar or a list of `[t, value]` breakpoints.
`max_segments` defaults to 4, or to the number of layers of a shallower
model. `calibration.monitor_interval_s` must be a whole multiple of
`calibration.tick_s`.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple, Union

from .cost import CostParams, CostWeights
from .infra import Link, Node, Topology, Trace
from .model import LayerProfile, ModelProfile, make_split
from .monitor import DEFAULT_SMOOTHING, TriggerThresholds
from .orchestrator import MigrationPolicy, Mode
from .utils import (
    ConfigError,
    InvalidBoundary,
    SplitorchException,
    UnknownConfigKeyWarning,
)

SCENARIO_DIR = Path(__file__).parent / "scenarios"
DEFAULT_MAX_SEGMENTS = 4

_MISSING = object()


@dataclass(frozen=True)
class Calibration:
    """Constants of the cost forms, the monitor and the simulator

    Attributes:
        q_scale_ms: Scale of the queueing delay
        rho_cap: Utilization at which queueing delay is capped
        overload_penalty: Weight of the overload hinge
        ewma_smoothing: Smoothing factor of the latency EWMA
        monitor_interval_s: Time between monitoring cycles
        tick_s: Simulation timestep
        migration_overhead_ms: Fixed cost of applying a reconfiguration
        monitoring_overhead_ms: Orchestration overhead per monitoring cycle
        weight_transfer_mbps: Dedicated weight staging rate, `None` to use
            the slowest involved link
        kpi_window_s: Span of KPI windows
        warmup_s: Start of the steady state
    """

    q_scale_ms: float = 20.0
    rho_cap: float = 0.99
    overload_penalty: float = 10.0
    ewma_smoothing: float = DEFAULT_SMOOTHING
    monitor_interval_s: float = 2.0
    tick_s: float = 0.1
    migration_overhead_ms: float = 10.0
    monitoring_overhead_ms: float = 10.0
    weight_transfer_mbps: Optional[float] = None
    kpi_window_s: float = 10.0
    warmup_s: float = 20.0

    @property
    def cost_params(self) -> CostParams:
        return CostParams(self.q_scale_ms, self.rho_cap, self.overload_penalty)

    @property
    def migration_policy(self) -> MigrationPolicy:
        return MigrationPolicy(self.migration_overhead_ms, self.weight_transfer_mbps)


@dataclass(frozen=True)
class Baseline:
    """The initial split and mapping"""

    boundaries: Tuple[int, ...]
    placement: Tuple[str, ...]


@dataclass(frozen=True)
class ScenarioConfig:
    """A validated scenario, see the module docstring for the document"""

    name: str
    model: ModelProfile
    topology: Topology
    baseline: Baseline
    weights: CostWeights = CostWeights()
    thresholds: TriggerThresholds = TriggerThresholds()
    calibration: Calibration = Calibration()
    arrival_rate: float = 5.0
    workload: float = 1.0
    duration_s: float = 120.0
    seed: int = 0
    mode: Mode = Mode.ADAPTIVE
    max_segments: Optional[int] = None

    def __post_init__(self) -> None:
        if self.max_segments is None:
            object.__setattr__(
                self,
                "max_segments",
                min(DEFAULT_MAX_SEGMENTS, self.model.num_layers),
            )
        validate(self)

    def override(self, **changes: Any) -> "ScenarioConfig":
        """A copy with command line overrides applied

        `None` values are ignored. Threshold fields (`l_max_ms`, `u_max`,
        `b_min_mbps`, `t_cool_s`) are routed into `thresholds`.

        Raises:
            ConfigError: When a value is invalid or a key is unknown
        """
        changes = {key: val for key, val in changes.items() if val is not None}
        threshold_keys = {f.name for f in fields(TriggerThresholds)}
        top_keys = {f.name for f in fields(self)}

        thresholds = {k: changes.pop(k) for k in list(changes) if k in threshold_keys}
        for key in changes:
            if key not in top_keys:
                raise ConfigError(key, "not a scenario field")
        if thresholds:
            try:
                changes["thresholds"] = replace(self.thresholds, **thresholds)
            except ValueError as exc:
                raise ConfigError("thresholds", str(exc)) from None
        if "mode" in changes:
            changes["mode"] = _mode(changes["mode"], "mode")
        return replace(self, **changes)


def validate(config: ScenarioConfig) -> None:
    """Check the cross-field invariants of a scenario

    Raises:
        ConfigError: Naming the offending field
    """
    node_ids = set(config.topology.node_ids)
    unreachable = config.topology.unreachable
    if unreachable:
        raise ConfigError(
            "topology.links",
            f"no path from {config.topology.node_ids[0]!r} to "
            + ", ".join(map(repr, unreachable)),
        )
    base = config.baseline
    if len(base.placement) != len(base.boundaries) + 1:
        raise ConfigError(
            "baseline.placement",
            f"{len(base.placement)} host(s) given for "
            f"{len(base.boundaries) + 1} segment(s)",
        )
    for i, nid in enumerate(base.placement):
        if nid not in node_ids:
            raise ConfigError(f"baseline.placement[{i}]", f"unknown node {nid!r}")
    try:
        make_split(config.model, base.boundaries)
    except InvalidBoundary as exc:
        raise ConfigError("baseline.boundaries", str(exc)) from None

    m = config.model.num_layers
    if not 1 <= config.max_segments <= m:
        raise ConfigError("max_segments", f"must be within [1, {m}]")
    if config.arrival_rate < 0:
        raise ConfigError("arrival_rate", "must be >= 0")
    if config.workload <= 0:
        raise ConfigError("workload", "must be > 0")

    cal = config.calibration
    if config.duration_s <= cal.warmup_s:
        raise ConfigError(
            "duration_s",
            f"must exceed the warm-up of {cal.warmup_s:g} s",
        )
    if cal.tick_s <= 0:
        raise ConfigError("calibration.tick_s", "must be > 0")
    if cal.monitor_interval_s < cal.tick_s:
        raise ConfigError("calibration.monitor_interval_s", "must be >= tick_s")
    ticks = cal.monitor_interval_s / cal.tick_s
    if abs(ticks - round(ticks)) > 1e-9 * ticks:
        raise ConfigError(
            "calibration.monitor_interval_s", "must be a whole multiple of tick_s"
        )
    if cal.kpi_window_s <= 0:
        raise ConfigError("calibration.kpi_window_s", "must be > 0")
    if not 0 < cal.ewma_smoothing <= 1:
        raise ConfigError("calibration.ewma_smoothing", "must be within (0, 1]")
    try:
        cal.cost_params
        cal.migration_policy
    except ValueError as exc:
        raise ConfigError("calibration", str(exc)) from None


class _Section:
    """An object of the document, remembering which keys were read so that
    the rest can be reported as unknown"""

    def __init__(self, doc: Any, path: str) -> None:
        if not isinstance(doc, dict):
            raise ConfigError(path or "<document>", "expected an object")
        self.doc = doc
        self.path = path
        self.seen: Set[str] = set()

    def key_path(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.doc

    def get(self, key: str, kind: str = None, default: Any = _MISSING) -> Any:
        self.seen.add(key)
        if key not in self.doc or self.doc[key] is None:
            if default is _MISSING:
                raise ConfigError(self.key_path(key), "missing required field")
            return default
        value = self.doc[key]
        return value if kind is None else _coerce(value, kind, self.key_path(key))

    def section(self, key: str, required: bool = False) -> "_Section":
        doc = self.get(key, default=_MISSING if required else {})
        return _Section(doc, self.key_path(key))

    def items(self, key: str, required: bool = False) -> List["_Section"]:
        docs = self.get(key, "list", _MISSING if required else [])
        return [
            _Section(doc, f"{self.key_path(key)}[{i}]") for i, doc in enumerate(docs)
        ]

    def finish(self) -> None:
        for key in sorted(set(self.doc) - self.seen):
            warnings.warn(
                f"Unknown key {self.key_path(key)!r} ignored.",
                UnknownConfigKeyWarning,
                stacklevel=4,
            )


def _coerce(value: Any, kind: str, path: str) -> Any:
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true or false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if kind == "list":
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return value
    if kind == "trace":
        try:
            return Trace.coerce(value)
        except (SplitorchException, TypeError, ValueError) as exc:
            raise ConfigError(
                path, f"expected a number or [t, value] pairs ({exc})"
            ) from None
    raise ValueError(f"Unknown kind {kind!r}.")  # pragma: no cover


def _mode(value: Any, path: str) -> Mode:
    try:
        return Mode(value)
    except ValueError:
        raise ConfigError(
            path, f"expected one of {[m.value for m in Mode]}, got {value!r}"
        ) from None


def _parse_model(sec: _Section) -> ModelProfile:
    name = sec.get("name", "str", "model")
    if sec.has("layers") == sec.has("uniform"):
        raise ConfigError(sec.path, "give exactly one of 'layers' or 'uniform'")

    try:
        if sec.has("uniform"):
            uni = sec.section("uniform")
            profile = ModelProfile.uniform(
                name,
                uni.get("num_layers", "int"),
                uni.get("compute_cost", "number"),
                uni.get("weight_bytes", "number"),
                uni.get("activation_out_bits", "number"),
                [
                    _coerce(idx, "int", f"{uni.key_path('privacy_critical')}[{i}]")
                    for i, idx in enumerate(uni.get("privacy_critical", "list", []))
                ],
            )
            uni.finish()
        else:
            layers = []
            for i, layer in enumerate(sec.items("layers")):
                layers.append(
                    LayerProfile(
                        i,
                        layer.get("compute_cost", "number"),
                        layer.get("weight_bytes", "number"),
                        layer.get("activation_out_bits", "number"),
                        layer.get("privacy_critical", "bool", False),
                    )
                )
                layer.finish()
            profile = ModelProfile(name, tuple(layers))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(sec.path, str(exc)) from None
    sec.finish()
    return profile


def _parse_topology(sec: _Section) -> Topology:
    nodes = []
    for item in sec.items("nodes", required=True):
        try:
            nodes.append(
                Node(
                    item.get("id", "str"),
                    item.get("compute_rate", "number"),
                    item.get("mem_capacity", "number"),
                    is_cloud=item.get("cloud", "bool", False),
                    trusted=item.get("trusted", "bool", False),
                    utilization=item.get("utilization", "trace", Trace.constant(0)),
                    mem_reserved=item.get("mem_reserved", "trace", Trace.constant(0)),
                )
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(item.path, str(exc)) from None
        item.finish()

    node_ids = {node.node_id for node in nodes}
    links = []
    for item in sec.items("links"):
        between = item.get("between", "list")
        if len(between) != 2 or not all(isinstance(nid, str) for nid in between):
            raise ConfigError(item.key_path("between"), "expected two node ids")
        for nid in between:
            if nid not in node_ids:
                raise ConfigError(item.key_path("between"), f"unknown node {nid!r}")
        try:
            links.append(
                Link(
                    frozenset(between),
                    item.get("bandwidth_mbps", "trace"),
                    item.get("propagation_delay_ms", "number", 0.0),
                    item.get("backhaul", "bool", True),
                )
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(item.path, str(exc)) from None
        item.finish()

    try:
        if sec.has("default_link"):
            default = sec.section("default_link")
            topology = Topology.fully_connected(
                nodes,
                default.get("bandwidth_mbps", "trace"),
                default.get("propagation_delay_ms", "number", 0.0),
                links,
            )
            default.finish()
        else:
            topology = Topology(tuple(nodes), tuple(links))
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(sec.path, str(exc)) from None
    sec.finish()
    return topology


def _parse_dataclass(sec: _Section, cls: type) -> Any:
    values: Dict[str, Any] = {}
    for f in fields(cls):
        value = sec.get(f.name, "number", None)
        if value is not None:
            values[f.name] = value
    sec.finish()
    try:
        return cls(**values)
    except ValueError as exc:
        raise ConfigError(sec.path, str(exc)) from None


def parse_config(doc: Any, name: str = "scenario") -> ScenarioConfig:
    """Validate a scenario document and build the config

    Args:
        doc: The decoded JSON document
        name: Name used when the document has none

    Raises:
        ConfigError: With the dotted path of the offending field
    """
    root = _Section(doc, "")
    model = _parse_model(root.section("model", required=True))
    topology = _parse_topology(root.section("topology", required=True))

    base = root.section("baseline", required=True)
    boundaries = tuple(
        _coerce(cut, "int", f"baseline.boundaries[{i}]")
        for i, cut in enumerate(base.get("boundaries", "list"))
    )
    placement = tuple(
        _coerce(nid, "str", f"baseline.placement[{i}]")
        for i, nid in enumerate(base.get("placement", "list"))
    )
    base.finish()

    config = ScenarioConfig(
        name=root.get("name", "str", name),
        model=model,
        topology=topology,
        baseline=Baseline(boundaries, placement),
        weights=_parse_dataclass(root.section("weights"), CostWeights),
        thresholds=_parse_dataclass(root.section("thresholds"), TriggerThresholds),
        calibration=_parse_dataclass(root.section("calibration"), Calibration),
        arrival_rate=root.get("arrival_rate", "number", 5.0),
        workload=root.get("workload", "number", 1.0),
        duration_s=root.get("duration_s", "number", 120.0),
        seed=root.get("seed", "int", 0),
        mode=_mode(root.get("mode", "str", Mode.ADAPTIVE.value), "mode"),
        max_segments=root.get("max_segments", "int", None),
    )
    root.finish()
    return config


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    """Load and validate a scenario document

    Raises:
        ConfigError: When the file is missing, is not JSON or fails
            validation
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON ({exc})") from None
    return parse_config(doc, name=path.stem)


def bundled_scenarios() -> Tuple[str, ...]:
    return tuple(sorted(p.stem for p in SCENARIO_DIR.glob("*.json")))


def bundled_config_path(name: str) -> Path:
    """Path of a scenario shipped with the package

    Raises:
        ConfigError: When there is no such scenario
    """
    path = SCENARIO_DIR / f"{name}.json"
    if not path.is_file():
        raise ConfigError(
            name,
            f"no bundled scenario of this name, available: "
            f"{', '.join(bundled_scenarios()) or 'none'}",
        )
    return path


def resolve_config(name_or_path: Union[str, Path]) -> ScenarioConfig:
    """Load a scenario from a path, or by the name of a bundled scenario"""
    path = Path(name_or_path)
    if path.exists() or path.suffix == ".json":
        return load_config(path)
    return load_config(bundled_config_path(str(name_or_path)))
