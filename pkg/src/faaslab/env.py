"""Episodic scaling environment over the cluster simulator.

Each step decodes a 3-dimensional discrete action (horizontal target
utilization, CPU resize delta, memory resize delta), applies vertical then
horizontal scaling for one target function, lets the simulator run for an
observation window, and emits a blended negative reward.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cluster import (POD_CPU_MAX, POD_MEM_MAX, ClusterEngine, FunctionProfile,
                      SimConfig, VmSpec)
from .errors import ConfigError, SimulationError
from .metrics import EpisodeLedger, RewardBounds, step_reward
from .workload import WorkloadSpec, synthesize

ACTION_SIZES = (11, 11, 11)
TARGET_UTIL_MIN = 0.10
TARGET_UTIL_MAX = 0.90
CPU_DELTA_MAX = 0.25   # vCPU per action step at full deflection
MEM_DELTA_MAX = 256.0  # MB per action step at full deflection


@dataclass(frozen=True)
class ScalingAction:
    a1: int  # horizontal target-utilization index
    a2: int  # cpu resize index
    a3: int  # mem resize index

    def __post_init__(self) -> None:
        for value, size, name in zip((self.a1, self.a2, self.a3), ACTION_SIZES,
                                     ("a1", "a2", "a3")):
            if not 0 <= value < size:
                raise ConfigError(f"action index {name}={value} outside [0, {size})")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.a1, self.a2, self.a3)


@dataclass(frozen=True)
class DecodedAction:
    target_util: float
    cpu_delta: float
    mem_delta: float


def grid_value(j: int, k: int) -> float:
    """j-th point of the K-point symmetric grid over [-1, 1]."""
    if not 0 <= j < k:
        raise ConfigError(f"grid index {j} outside [0, {k})")
    return 2.0 * j / (k - 1) - 1.0


def decode(action: ScalingAction) -> DecodedAction:
    k1, k2, k3 = ACTION_SIZES
    frac = action.a1 / (k1 - 1)
    return DecodedAction(
        target_util=TARGET_UTIL_MIN + (TARGET_UTIL_MAX - TARGET_UTIL_MIN) * frac,
        cpu_delta=CPU_DELTA_MAX * grid_value(action.a2, k2),
        mem_delta=MEM_DELTA_MAX * grid_value(action.a3, k3),
    )


@dataclass(frozen=True)
class EnvConfig:
    decision_interval: float = 10.0
    observe_delay: float = 10.0
    episode_duration: float = 300.0
    beta: float = 1.0
    target_mode: str = "random"  # "random" (training) | "highest_rfrt" (evaluation)
    rfrt_cap: float = 20.0       # state normalizer for the response-time ratio
    rate_cap: float = 60.0       # state normalizer for arrival rate (req/s)
    cpu_cap_norm: float = 8.0    # fleet maximum vCPU
    mem_cap_norm: float = 32768.0  # fleet maximum MB

    def __post_init__(self) -> None:
        if self.decision_interval <= 0 or self.observe_delay <= 0:
            raise ConfigError("intervals must be positive")
        if self.observe_delay > self.decision_interval + 1e-9:
            raise ConfigError("observe_delay must not exceed decision_interval")
        steps = self.episode_duration / self.decision_interval
        if abs(steps - round(steps)) > 1e-9 or steps < 1:
            raise ConfigError("episode_duration must be a multiple of decision_interval")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if self.target_mode not in ("random", "highest_rfrt"):
            raise ConfigError(f"unknown target mode {self.target_mode!r}")

    @property
    def steps_per_episode(self) -> int:
        return int(round(self.episode_duration / self.decision_interval))


FEATURES_PER_VM = 7
FEATURES_PER_FN = 9


class ServerlessEnv:
    """One agent's copy of the scaling decision process.

    Environments are independent and single-threaded; training with several
    workers instantiates one environment per worker.
    """

    def __init__(
        self,
        vms: Sequence[VmSpec],
        profiles: dict[int, FunctionProfile],
        env_config: EnvConfig = EnvConfig(),
        sim_config: SimConfig = SimConfig(),
        bounds: Optional[RewardBounds] = None,
        seed: int = 0,
        record_trace: bool = False,
    ):
        self.vms = tuple(sorted(vms, key=lambda s: s.vm_id))
        self.profiles = dict(profiles)
        self.config = env_config
        self.sim_config = sim_config
        self.bounds = bounds
        self._rng = random.Random(seed)
        self.engine: Optional[ClusterEngine] = None
        self.ledger: Optional[EpisodeLedger] = None
        self.target_fn: Optional[int] = None
        self.done = True
        self._steps_taken = 0
        self.record_trace = record_trace
        self.trace: list[tuple] = []

    @property
    def state_dim(self) -> int:
        return FEATURES_PER_VM * len(self.vms) + FEATURES_PER_FN

    # ------------------------------------------------------------------ reset

    def reset(self, workload: WorkloadSpec, seed: Optional[int] = None) -> np.ndarray:
        if seed is not None:
            self._rng = random.Random(seed)
        self.engine = ClusterEngine(self.vms, self.profiles, workload.applications,
                                    self.sim_config)
        self.engine.load_arrivals(synthesize(workload))
        self.engine.advance(0.0)
        self.ledger = EpisodeLedger(self.engine)
        self._episode_duration = workload.duration
        steps = self._episode_duration / self.config.decision_interval
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("workload duration must be a multiple of decision_interval")
        self._total_steps = int(round(steps))
        self._steps_taken = 0
        self.done = False
        self.trace.clear()
        self._select_target()
        return self._state()

    def _select_target(self) -> None:
        fns = self.engine.deployed_fns
        if self.config.target_mode == "random":
            self.target_fn = fns[self._rng.randrange(len(fns))]
        else:
            now = self.engine.clock
            t0 = now - self.config.observe_delay
            scored = sorted(((-self.ledger.window_rfrt(fn, t0, now), fn) for fn in fns))
            self.target_fn = scored[0][1]

    # ------------------------------------------------------------------- step

    def step(self, action: ScalingAction) -> tuple[np.ndarray, float, bool, dict]:
        if self.done or self.engine is None:
            raise SimulationError("episode is over; call reset() before stepping")
        decoded = decode(action)
        target = self.target_fn
        t0 = self.engine.clock
        cpu_star, mem_star = self.engine.clamp_vertical(target, decoded.cpu_delta,
                                                        decoded.mem_delta)
        self.engine.apply_vertical(target, cpu_star, mem_star)
        n_delta = self.engine.horizontal_delta(target, decoded.target_util)
        self.engine.apply_horizontal(target, n_delta)

        self.engine.advance(t0 + self.config.observe_delay)
        channels = self.ledger.window_channels(t0, t0 + self.config.observe_delay)
        reward = step_reward(channels, self.bounds, self.config.beta)
        self.engine.advance(t0 + self.config.decision_interval)

        self._steps_taken += 1
        if self._steps_taken >= self._total_steps:
            self._drain()
            self.done = True
        else:
            self._select_target()
        info = {
            "target_fn": target,
            "decoded": decoded,
            "clamped": (cpu_star, mem_star),
            "n_delta": n_delta,
            "channels": channels,
            "time": self.engine.clock,
        }
        if self.record_trace:
            self.trace.append((t0, target, *action.as_tuple(),
                               decoded.target_util, decoded.cpu_delta,
                               decoded.mem_delta, cpu_star, mem_star, n_delta,
                               reward))
        return self._state(), reward, self.done, info

    def _drain(self) -> None:
        # Let in-flight and queued requests resolve or drop before closing out.
        while self.engine.pending_requests():
            t = self.engine.next_event_time()
            if t is None:
                raise SimulationError("pending requests but no scheduled events")
            self.engine.advance(t)

    def export_trace(self, path) -> None:
        """Write the per-step decision trace as delimited text (debug aid)."""
        header = ("time target a1 a2 a3 target_util cpu_delta mem_delta "
                  "cpu_applied mem_applied n_delta reward")
        lines = [header]
        for row in self.trace:
            lines.append(" ".join(f"{v:.6g}" if isinstance(v, float) else str(v)
                                  for v in row))
        Path(path).write_text("\n".join(lines) + "\n")

    # ------------------------------------------------------------------ state

    def _state(self) -> np.ndarray:
        cfg = self.config
        snap = self.engine.snapshot(self.target_fn, window=cfg.observe_delay)
        features: list[float] = []
        max_replicas = self.engine.config.max_replicas
        for vm in snap.vms:
            features.extend((
                vm.cpu_util,
                vm.mem_util,
                vm.cpu_alloc,
                vm.mem_alloc,
                vm.cpu_capacity / cfg.cpu_cap_norm,
                vm.mem_capacity / cfg.mem_cap_norm,
                vm.target_replicas / max_replicas,
            ))
        fn = snap.functions[self.target_fn]
        features.extend((
            fn.pod_cpu / POD_CPU_MAX,
            fn.pod_mem / POD_MEM_MAX,
            fn.req_cpu / POD_CPU_MAX,
            fn.req_mem / POD_MEM_MAX,
            fn.arrival_rate / cfg.rate_cap,
            fn.rfrt / cfg.rfrt_cap,
            fn.rfr,
            fn.avg_pod_cpu_util,
            fn.avg_pod_mem_util,
        ))
        state = np.clip(np.asarray(features, dtype=np.float64), 0.0, 1.0)
        if not np.all(np.isfinite(state)):
            raise SimulationError("non-finite state feature")
        return state
