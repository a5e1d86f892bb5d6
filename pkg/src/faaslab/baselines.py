"""Rule-based horizontal scalers driven through the same simulator stepping.

Unlike the learned agent, which reconfigures a single target function per
decision tick, these controllers evaluate every deployed function on every
tick (matching how the real autoscalers operate). None of them emit vertical
resizes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .cluster import (ClusterEngine, FunctionProfile, FunctionSnapshot, SimConfig,
                      VmSpec, ceil_guarded, desired_replicas)
from .env import EnvConfig
from .errors import ConfigError, SimulationError
from .metrics import EpisodeLedger, EpisodeMetrics
from .workload import WorkloadSpec, synthesize


@dataclass(frozen=True)
class KnativeConfig:
    target_concurrency: float = 4.0
    target_utilization: float = 0.75

    def __post_init__(self) -> None:
        if self.target_concurrency <= 0 or not 0 < self.target_utilization <= 1:
            raise ConfigError("invalid knative thresholds")


@dataclass(frozen=True)
class KubeCpuConfig:
    cpu_threshold: float = 0.50

    def __post_init__(self) -> None:
        if not 0 < self.cpu_threshold <= 1:
            raise ConfigError("invalid kube-cpu threshold")


@dataclass(frozen=True)
class OpenFaasConfig:
    capacity_threshold: float = 4.0
    rps_threshold: float = 8.0
    cpu_threshold: float = 0.50
    long_exec_cutoff: float = 2.0    # seconds; slower functions use capacity mode
    high_rate_cutoff: float = 20.0   # req/s; faster+busier functions use rps mode

    def __post_init__(self) -> None:
        if min(self.capacity_threshold, self.rps_threshold, self.cpu_threshold,
               self.long_exec_cutoff, self.high_rate_cutoff) <= 0:
            raise ConfigError("invalid openfaas thresholds")


@dataclass(frozen=True)
class BaselinePolicyConfig:
    knative: KnativeConfig = field(default_factory=KnativeConfig)
    kube_cpu: KubeCpuConfig = field(default_factory=KubeCpuConfig)
    openfaas: OpenFaasConfig = field(default_factory=OpenFaasConfig)


def _outstanding(snap: FunctionSnapshot) -> int:
    # Concurrency as the autoscaler sees it: executing plus waiting requests.
    return snap.running_requests + snap.queued_requests


def knative_decide(snap: FunctionSnapshot, cfg: KnativeConfig,
                   max_replicas: int) -> int:
    desired = ceil_guarded(_outstanding(snap)
                           / (cfg.target_concurrency * cfg.target_utilization))
    return min(max(desired, 0), max_replicas)


def kube_cpu_decide(snap: FunctionSnapshot, cfg: KubeCpuConfig,
                    max_replicas: int) -> int:
    if snap.replicas > 0:
        util = snap.avg_pod_cpu_util
    else:
        util = 1.0 if snap.queued_requests > 0 else 0.0
    return desired_replicas(snap.replicas, util, cfg.cpu_threshold, max_replicas)


def openfaas_decide(snap: FunctionSnapshot, cfg: OpenFaasConfig,
                    max_replicas: int) -> int:
    if snap.standard_response_time > cfg.long_exec_cutoff:
        desired = ceil_guarded(_outstanding(snap) / cfg.capacity_threshold)
    elif snap.arrival_rate > cfg.high_rate_cutoff:
        desired = ceil_guarded(snap.arrival_rate / cfg.rps_threshold)
    else:
        return kube_cpu_decide(snap, KubeCpuConfig(cpu_threshold=cfg.cpu_threshold),
                               max_replicas)
    return min(max(desired, 0), max_replicas)


BASELINES = ("knative", "kube_cpu", "openfaas")


def decide(policy: str, snap: FunctionSnapshot, cfg: BaselinePolicyConfig,
           max_replicas: int) -> int:
    if policy == "knative":
        return knative_decide(snap, cfg.knative, max_replicas)
    if policy == "kube_cpu":
        return kube_cpu_decide(snap, cfg.kube_cpu, max_replicas)
    if policy == "openfaas":
        return openfaas_decide(snap, cfg.openfaas, max_replicas)
    raise ConfigError(f"unknown baseline {policy!r}; choose from {BASELINES}")


@dataclass
class BaselineResult:
    policy: str
    summary: EpisodeMetrics
    channels: list[tuple[float, float, float]]
    replica_log: list[tuple[float, int, int]]  # (tick time, function, replicas)
    engine: ClusterEngine


def run_baseline(
    policy: str,
    vms: Sequence[VmSpec],
    profiles: dict[int, FunctionProfile],
    workload: WorkloadSpec,
    env_config: EnvConfig = EnvConfig(),
    sim_config: SimConfig = SimConfig(),
    policy_config: Optional[BaselinePolicyConfig] = None,
    collect_channels: bool = False,
    record_replicas: bool = False,
) -> BaselineResult:
    """One full episode under a rule-based scaler.

    Every ``decision_interval`` the policy's desired replica count is turned
    into a scaling delta per function and applied; metric windows match the
    learned agent's observation windows so calibration and evaluation share
    one definition.
    """
    cfg = policy_config or BaselinePolicyConfig()
    engine = ClusterEngine(vms, profiles, workload.applications, sim_config)
    engine.load_arrivals(synthesize(workload))
    engine.advance(0.0)
    ledger = EpisodeLedger(engine)
    channels: list[tuple[float, float, float]] = []
    replica_log: list[tuple[float, int, int]] = []

    interval = env_config.decision_interval
    steps = workload.duration / interval
    if abs(steps - round(steps)) > 1e-9:
        raise ConfigError("workload duration must be a multiple of decision_interval")
    for step in range(int(round(steps))):
        t0 = step * interval
        snap = engine.snapshot(None, window=env_config.observe_delay)
        for fn in engine.deployed_fns:
            desired = decide(policy, snap.functions[fn], cfg, sim_config.max_replicas)
            engine.apply_horizontal(fn, desired - snap.functions[fn].replicas)
            if record_replicas:
                replica_log.append((t0, fn, engine.pod_count(fn)))
        engine.advance(t0 + env_config.observe_delay)
        if collect_channels:
            channels.append(ledger.window_channels(t0, t0 + env_config.observe_delay))
        engine.advance(t0 + interval)
    while engine.pending_requests():
        nxt = engine.next_event_time()
        if nxt is None:
            raise SimulationError("pending requests but no scheduled events")
        engine.advance(nxt)
    return BaselineResult(policy=policy, summary=ledger.summary(), channels=channels,
                          replica_log=replica_log, engine=engine)
