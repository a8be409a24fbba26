"""Environment monitoring and the reconfiguration trigger

A reconfiguration is due when any of these holds (strict inequalities, a
metric sitting exactly on its threshold does not fire):

1. the EWMA of end-to-end latency exceeds `l_max_ms`
2. the maximum node utilization exceeds `u_max`
3. the minimum link bandwidth drops below `b_min_mbps`

and at least `t_cool_s` passed since the last applied reconfiguration.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import FrozenSet, List, Mapping, Optional

import numpy as np

from .cost import DEFAULT_PARAMS, CostParams, SchemeLike, SystemState, node_utilization
from .utils import NEG_INF

logger = logging.getLogger(__name__)

LATENCY = "latency"
UTILIZATION = "utilization"
BANDWIDTH = "bandwidth"
CAUSES = (LATENCY, UTILIZATION, BANDWIDTH)

DEFAULT_SMOOTHING = 0.2


@dataclass(frozen=True)
class TriggerThresholds:
    """Trigger thresholds, defaults as the usual URLLC-oriented values

    Attributes:
        l_max_ms: EWMA latency threshold
        u_max: Node utilization threshold
        b_min_mbps: Link bandwidth threshold
        t_cool_s: Minimum time between applied reconfigurations
    """

    l_max_ms: float = 150.0
    u_max: float = 0.85
    b_min_mbps: float = 50.0
    t_cool_s: float = 30.0

    def __post_init__(self) -> None:
        for name in ("l_max_ms", "u_max", "b_min_mbps", "t_cool_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"Threshold {name} must be > 0.")


@dataclass(frozen=True)
class EnvironmentState:
    """Monitored metrics at time `t`

    Attributes:
        t: Time in seconds
        ewma_latency_ms: EWMA of end-to-end latency, `None` before the first
            sample
        utilization: Utilization per node, capped at `rho_cap`
        bandwidth: Bandwidth in Mb/s per link, keyed by link name
        window_s: Length of the monitoring window
    """

    t: float
    ewma_latency_ms: Optional[float]
    utilization: Mapping[str, float] = field(default_factory=dict)
    bandwidth: Mapping[str, float] = field(default_factory=dict)
    window_s: float = 2.0

    @property
    def max_utilization(self) -> float:
        return max(self.utilization.values(), default=0.0)

    @property
    def min_bandwidth(self) -> float:
        return min(self.bandwidth.values(), default=float("inf"))


@dataclass(frozen=True)
class TriggerReport:
    """Outcome of `should_reconfigure`

    Attributes:
        fired: Whether a reconfiguration should be attempted now
        causes: The conditions that hold, regardless of cool-down
        suppressed_by_cooldown: Some condition holds but cool-down blocks
    """

    fired: bool
    causes: FrozenSet[str] = frozenset()
    suppressed_by_cooldown: bool = False

    def describe(self) -> str:
        causes = ",".join(c for c in CAUSES if c in self.causes) or "-"
        if self.fired:
            return f"fired ({causes})"
        if self.suppressed_by_cooldown:
            return f"suppressed by cool-down ({causes})"
        return "idle"


def update_ewma(prev_ewma: Optional[float], sample: float, smoothing: float) -> float:
    """Fold a sample into an exponentially weighted moving average

    The first sample (`prev_ewma is None`) initializes the average.

    Raises:
        ValueError: When `smoothing` is not in `(0, 1]`
    """
    if not 0 < smoothing <= 1:
        raise ValueError(f"smoothing must be within (0, 1], got {smoothing}.")
    if prev_ewma is None:
        return sample
    return smoothing * sample + (1.0 - smoothing) * prev_ewma


def should_reconfigure(
    env: EnvironmentState,
    thresholds: TriggerThresholds,
    t: float,
    t_last: float = NEG_INF,
) -> TriggerReport:
    """Evaluate the trigger conditions and the cool-down

    Args:
        env: The monitored metrics
        thresholds: The trigger thresholds
        t: Now, in seconds
        t_last: Time of the last applied reconfiguration, `-inf` if none
    """
    causes = set()
    if env.ewma_latency_ms is not None and env.ewma_latency_ms > thresholds.l_max_ms:
        causes.add(LATENCY)
    if env.max_utilization > thresholds.u_max:
        causes.add(UTILIZATION)
    if env.min_bandwidth < thresholds.b_min_mbps:
        causes.add(BANDWIDTH)

    if not causes:
        return TriggerReport(False)
    if t - t_last >= thresholds.t_cool_s:
        return TriggerReport(True, frozenset(causes))
    return TriggerReport(False, frozenset(causes), suppressed_by_cooldown=True)


class Monitor:
    """Collects latency samples and builds the environment state

    Latencies of completed requests are buffered during a monitoring window.
    At each monitoring cycle the window mean is folded into the EWMA (a
    window without completions leaves it unchanged) and the buffer is reset.

    Args:
        window_s: Length of a monitoring window
        smoothing: EWMA smoothing factor
        params: Provides `rho_cap` for the reported utilizations
    """

    def __init__(
        self,
        window_s: float = 2.0,
        smoothing: float = DEFAULT_SMOOTHING,
        params: CostParams = DEFAULT_PARAMS,
    ) -> None:
        # validate early
        update_ewma(None, 0.0, smoothing)
        self.window_s = window_s
        self.smoothing = smoothing
        self.params = params
        self.ewma_latency_ms: Optional[float] = None
        self._samples: List[float] = []

    def observe(self, latency_ms: float) -> None:
        self._samples.append(latency_ms)

    def collect(
        self,
        state: SystemState,
        scheme: SchemeLike,
        placement,
    ) -> EnvironmentState:
        """Close the current window and report the environment at `state.t`

        Args:
            state: The system state now
            scheme: The deployed scheme
            placement: The deployed placement
        """
        if self._samples:
            self.ewma_latency_ms = update_ewma(
                self.ewma_latency_ms,
                float(np.mean(self._samples)),
                self.smoothing,
            )
            self._samples = []

        rho = node_utilization(scheme, placement, state)
        links = state.topology.links_by_pair()
        return EnvironmentState(
            t=state.t,
            ewma_latency_ms=self.ewma_latency_ms,
            utilization={
                nid: min(max(r, 0.0), self.params.rho_cap) for nid, r in rho.items()
            },
            bandwidth={
                links[pair].name: bw for pair, bw in state.bandwidths.items()
            },
            window_s=self.window_s,
        )
