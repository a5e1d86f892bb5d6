"""Episode and window metrics: response-time ratios, failure rates, VM cost,
reward shaping, and calibration bounds for reward normalization."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import yaml

from .cluster import ClusterEngine, RequestStatus
from .errors import ConfigError, MetricsError

_DEGENERATE_SPAN = 1e-12


@dataclass(frozen=True)
class ChannelBounds:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (self.lo < self.hi):
            raise ConfigError(f"channel bounds must satisfy lo < hi, got ({self.lo}, {self.hi})")

    def normalize(self, value: float) -> float:
        return min(1.0, max(0.0, (value - self.lo) / (self.hi - self.lo)))


@dataclass(frozen=True)
class RewardBounds:
    """Per-channel min/max observed during calibration runs."""

    rfrt: ChannelBounds
    rfr: ChannelBounds
    cost: ChannelBounds

    def save(self, path: str | Path) -> None:
        data = {name: {"min": getattr(self, name).lo, "max": getattr(self, name).hi}
                for name in ("rfrt", "rfr", "cost")}
        Path(path).write_text(yaml.safe_dump(data, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "RewardBounds":
        path = Path(path)
        if not path.exists():
            raise MetricsError(
                f"calibration file {path} not found; run `faaslab calibrate` first")
        data = yaml.safe_load(path.read_text())
        try:
            return cls(**{name: ChannelBounds(lo=float(data[name]["min"]),
                                              hi=float(data[name]["max"]))
                          for name in ("rfrt", "rfr", "cost")})
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: malformed calibration file ({exc})") from None


def derive_bounds(samples: Sequence[tuple[float, float, float]]) -> RewardBounds:
    """Per-channel (min, max) over calibration step samples (rfrt, rfr, cost).

    A channel that never moved falls back to a documented default span; a
    calibration where nothing moved at all is rejected as degenerate.
    """
    if not samples:
        raise ConfigError("no calibration samples collected")
    cols = list(zip(*samples))
    spans = [max(c) - min(c) for c in cols]
    if all(s < _DEGENERATE_SPAN for s in spans):
        raise ConfigError("degenerate calibration: no channel moved (zero-traffic workloads?)")
    fallbacks = (
        lambda v: ChannelBounds(min(1.0, v), max(2.0, 2.0 * v)),          # rfrt
        lambda v: ChannelBounds(0.0, 1.0),                                 # rfr
        lambda v: ChannelBounds(0.0, max(1e-6, 2.0 * v)),                  # cost
    )
    channels = []
    for col, span, fallback in zip(cols, spans, fallbacks):
        if span < _DEGENERATE_SPAN:
            channels.append(fallback(col[0]))
        else:
            channels.append(ChannelBounds(min(col), max(col)))
    return RewardBounds(rfrt=channels[0], rfr=channels[1], cost=channels[2])


class EpisodeLedger:
    """Read-only metric views over one engine's recorded request history."""

    def __init__(self, engine: ClusterEngine):
        self.engine = engine

    # ----------------------------------------------------------- window views

    def window_rfrt(self, fn: int, t0: float, t1: float) -> float:
        """Mean response-time ratio of fn requests completed in (t0, t1].

        An empty window reports the neutral ratio 1.0, so idle functions
        neither reward nor punish a scaling policy.
        """
        ratios = self.engine.window_completions(fn, t0, t1)
        return sum(ratios) / len(ratios) if ratios else 1.0

    def window_rfr(self, fn: int, t0: float, t1: float) -> float:
        """Drops during the window over arrivals during the window (0 if none)."""
        arrived = self.engine.window_arrivals(fn, t0, t1)
        if arrived == 0:
            return 0.0
        return self.engine.window_drops(fn, t0, t1) / arrived

    def window_cost(self, t0: float, t1: float) -> float:
        return sum(vm.spec.unit_price * vm.busy_overlap(t0, t1) / 3600.0
                   for vm in self.engine.vms.values())

    def window_channels(self, t0: float, t1: float) -> tuple[float, float, float]:
        """(mean RFRT, mean RFR, cost) over all deployed functions in (t0, t1]."""
        fns = self.engine.deployed_fns
        rfrt = sum(self.window_rfrt(fn, t0, t1) for fn in fns) / len(fns)
        rfr = sum(self.window_rfr(fn, t0, t1) for fn in fns) / len(fns)
        return rfrt, rfr, self.window_cost(t0, t1)

    # ---------------------------------------------------------- episode views

    def episode_rart(self) -> float:
        """Average over applications of the mean chain response-time ratio.

        Only fully completed chains contribute; dropped chains are accounted
        by the failure rate instead. Applications with no completed chain are
        skipped; if every application is empty the metric is undefined.
        """
        engine = self.engine
        if not engine.apps:
            raise MetricsError("no applications deployed")
        per_app: dict[int, list[float]] = {app_id: [] for app_id in engine.apps}
        for root_id, chain in engine.chains.items():
            records = [engine.requests[rid] for rid in chain]
            if any(r.status is not RequestStatus.COMPLETED for r in records):
                continue
            app = engine.apps[records[0].app_id]
            if len(records) != len(app.function_sequence):
                continue  # chain still mid-flight
            actual = sum(r.response_time for r in records)
            standard = sum(engine.profiles[r.function_id].standard_response_time
                           for r in records)
            per_app[app.app_id].append(actual / standard)
        means = [sum(v) / len(v) for v in per_app.values() if v]
        if not means:
            raise MetricsError("no completed application chains; RART undefined")
        return sum(means) / len(means)

    def episode_rfr(self) -> float:
        total = len(self.engine.requests)
        if total == 0:
            return 0.0
        return self.engine.dropped_total / total

    def episode_rfrt(self) -> float:
        """Mean response-time ratio over every completed function request."""
        ratios = [r for fn in self.engine.deployed_fns
                  for _, r in self.engine.completions[fn]]
        return sum(ratios) / len(ratios) if ratios else 1.0

    def episode_cost(self) -> float:
        now = self.engine.clock
        return sum(vm.spec.unit_price * vm.active_seconds_until(now) / 3600.0
                   for vm in self.engine.vms.values())

    def summary(self, beta: float | None = None) -> "EpisodeMetrics":
        try:
            rart = self.episode_rart()
        except MetricsError:
            rart = math.nan
        rfr = self.episode_rfr()
        cost = self.episode_cost()
        return EpisodeMetrics(
            rart=rart,
            rfr=rfr,
            cost=cost,
            rfrt=self.episode_rfrt(),
            completed=self.engine.completed_total,
            dropped=self.engine.dropped_total,
            total=len(self.engine.requests),
            objective=objective(rart, rfr, cost, beta) if beta is not None else math.nan,
        )


@dataclass(frozen=True)
class EpisodeMetrics:
    rart: float
    rfr: float
    cost: float
    rfrt: float
    completed: int
    dropped: int
    total: int
    objective: float


def step_reward(channels: tuple[float, float, float], bounds: RewardBounds | None,
                beta: float) -> float:
    """Blended negative reward in [-1, 0] for one observation window.

    The performance term averages the normalized RFRT and RFR channels; the
    cost term is the normalized cost accrued over the window. Values outside
    the calibrated bounds clamp to the [0, 1] edges.
    """
    if bounds is None:
        raise MetricsError("reward bounds not calibrated; run `faaslab calibrate` first")
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must lie in [0, 1], got {beta}")
    rfrt, rfr, cost = channels
    r1 = 0.5 * (bounds.rfrt.normalize(rfrt) + bounds.rfr.normalize(rfr))
    r2 = bounds.cost.normalize(cost)
    return -(beta * r1 + (1.0 - beta) * r2)


def objective(rart: float, rfr: float, cost: float, beta: float) -> float:
    """Episode-level blended objective: beta*(RART + RFR) + (1-beta)*cost."""
    return beta * (rart + rfr) + (1.0 - beta) * cost
