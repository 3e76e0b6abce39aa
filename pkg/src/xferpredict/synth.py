"""Seeded synthetic traces: periodic probe and disk streams plus sporadic transfers.

Probe bandwidth and disk transfer rate are stationary lag-1 autoregressive
series clipped at zero. Transfers arrive as a Poisson process; each one's
throughput is ``intercept + class_offset + b_n * N + b_d * D + noise`` using the
probe and disk observations nearest its start time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .errors import ConfigurationError
from .traces import (
    KB,
    MB,
    DiskRecord,
    Direction,
    ProbeRecord,
    SizeClass,
    TraceSet,
    TransferRecord,
    serialize_disk_log,
    serialize_probe_log,
    serialize_transfer_log,
)

DAY = 86400
WEEK = 7 * DAY

# nominal file size drawn for each class; realized sizes vary slightly (see _size_and_duration)
TARGET_SIZES = {
    SizeClass.C10M: 20 * MB,
    SizeClass.C100M: 150 * MB,
    SizeClass.C500M: 500 * MB,
    SizeClass.C1G: 1500 * MB,
}


@dataclass(frozen=True)
class ProcessParams:
    mean: float
    stdev: float
    rho: float

    def check(self, name):
        if self.stdev < 0:
            raise ConfigurationError(f"{name}.stdev must be >= 0")
        if not -1 < self.rho < 1:
            raise ConfigurationError(f"{name}.rho must be in (-1, 1)")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    duration: float = 2 * WEEK
    start_time: int = 998_000_000
    probe_period: float = 300.0
    disk_period: float = 300.0
    disk_offset: float = 1.0
    transfer_rate: float = 1.0  # mean transfers per hour
    size_mix: Tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    intercept: float = 1000.0  # KB/s
    b_n: float = 1500.0  # KB/s per MB/s of probe bandwidth
    b_d: float = 10.0  # KB/s per disk transfer/s
    noise_stdev: float = 300.0
    class_offsets: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    n_process: ProcessParams = field(default_factory=lambda: ProcessParams(2.0, 0.5, 0.99))
    d_process: ProcessParams = field(default_factory=lambda: ProcessParams(100.0, 20.0, 0.99))
    # unobserved path/server load added to every transfer; invisible to probes and disk
    level_process: ProcessParams = field(default_factory=lambda: ProcessParams(0.0, 0.0, 0.99))
    source_id: str = "192.0.2.10"

    def validate(self):
        if self.duration <= 0:
            raise ConfigurationError("duration must be positive")
        if self.probe_period <= 0 or self.disk_period <= 0:
            raise ConfigurationError("probe_period and disk_period must be positive")
        if self.transfer_rate < 0:
            raise ConfigurationError("transfer_rate must be >= 0")
        if self.noise_stdev < 0:
            raise ConfigurationError("noise_stdev must be >= 0")
        if len(self.size_mix) != 4 or any(w < 0 for w in self.size_mix) or sum(self.size_mix) <= 0:
            raise ConfigurationError("size_mix needs four nonnegative weights with a positive sum")
        if len(self.class_offsets) != 4:
            raise ConfigurationError("class_offsets needs four values")
        self.n_process.check("n_process")
        self.d_process.check("d_process")
        self.level_process.check("level_process")


def ar1_series(rng: np.random.Generator, count: int, p: ProcessParams) -> np.ndarray:
    """Stationary AR(1) with the given marginal mean/stdev and lag-1 autocorrelation."""
    out = np.empty(count)
    if count == 0:
        return out
    shocks = rng.standard_normal(count)
    innov = math.sqrt(1 - p.rho**2)
    x = shocks[0]
    out[0] = x
    for i in range(1, count):
        x = p.rho * x + innov * shocks[i]
        out[i] = x
    return p.mean + p.stdev * out


def _nearest(grid: np.ndarray, t: float) -> int:
    j = int(np.searchsorted(grid, t, side="left"))
    if j == 0:
        return 0
    if j == grid.size:
        return grid.size - 1
    return j - 1 if t - grid[j - 1] <= grid[j] - t else j


def _size_and_duration(target: int, size_class: SizeClass, bandwidth: int) -> Tuple[int, int]:
    """Pick an integer duration so that size = bandwidth * duration * 1000 stays in class.

    Sizing the file from the throughput keeps the logged bandwidth exactly
    equal to floor(size / duration / 1000).
    """
    per_second = bandwidth * KB
    lo = max(1, -(-size_class.lower // per_second))
    hi = None if size_class.upper is None else (size_class.upper - 1) // per_second
    duration = max(lo, round(target / per_second))
    if hi is not None:
        if hi < lo:
            raise ConfigurationError(
                f"throughput {bandwidth} KB/s cannot produce a file in class {size_class.label}"
            )
        duration = min(duration, hi)
    return per_second * duration, duration


def generate_traces(cfg: SynthConfig) -> TraceSet:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    t0 = cfg.start_time

    n_probes = int(cfg.duration // cfg.probe_period)
    probe_t = t0 + np.arange(n_probes) * cfg.probe_period
    probe_v = np.round(np.clip(ar1_series(rng, n_probes, cfg.n_process), 0, None), 4)

    n_disk = int(max(0.0, cfg.duration - cfg.disk_offset) // cfg.disk_period)
    disk_t = t0 + cfg.disk_offset + np.arange(n_disk) * cfg.disk_period
    disk_v = np.round(np.clip(ar1_series(rng, n_disk, cfg.d_process), 0, None), 2)

    level_v = ar1_series(rng, n_probes, cfg.level_process)

    probes = [ProbeRecord(_num(t), float(v)) for t, v in zip(probe_t, probe_v)]
    disks = [DiskRecord(_num(t), float(v)) for t, v in zip(disk_t, disk_v)]

    weights = np.asarray(cfg.size_mix, dtype=float)
    weights = weights / weights.sum()
    classes = list(SizeClass)
    offsets = dict(zip(classes, cfg.class_offsets))

    transfers = []
    if cfg.transfer_rate > 0:
        mean_gap = 3600.0 / cfg.transfer_rate
        t = float(t0)
        last = None
        while True:
            t += rng.exponential(mean_gap)
            start = int(round(t))
            if last is not None and start <= last:
                start = last + 1
            if start >= t0 + cfg.duration:
                break
            cls = classes[int(rng.choice(4, p=weights))]
            noise = rng.normal(0.0, cfg.noise_stdev) if cfg.noise_stdev > 0 else 0.0
            tick = _nearest(probe_t, start) if n_probes else None
            n_val = probe_v[tick] if n_probes else 0.0
            level = level_v[tick] if n_probes else cfg.level_process.mean
            d_val = disk_v[_nearest(disk_t, start)] if n_disk else 0.0
            g = cfg.intercept + offsets[cls] + level + cfg.b_n * n_val + cfg.b_d * d_val + noise
            bandwidth = max(1, int(round(g)))
            size, duration = _size_and_duration(TARGET_SIZES[cls], cls, bandwidth)
            transfers.append(
                TransferRecord(
                    source_id=cfg.source_id,
                    file_name=f"/data/synth/{cls.label}-{len(transfers):05d}",
                    file_size=size,
                    volume="/data",
                    start_time=start,
                    end_time=start + duration,
                    duration=duration,
                    bandwidth=bandwidth,
                    direction=Direction.READ,
                    streams=8,
                    tcp_buffer=1000000,
                )
            )
            last = start
    return TraceSet(transfers, probes, disks, name=f"synth-{cfg.seed}")


def _num(t):
    t = float(t)
    return int(t) if t.is_integer() else t


def trace_texts(traces: TraceSet) -> Tuple[str, str, str]:
    return (
        serialize_transfer_log(traces.transfers),
        serialize_probe_log(traces.probes),
        serialize_disk_log(traces.disks),
    )


def write_traces(traces: TraceSet, directory, prefix: str = "synth") -> Dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "transfers": directory / f"{prefix}.transfers.log",
        "probes": directory / f"{prefix}.probes.log",
        "disks": directory / f"{prefix}.disks.log",
    }
    for key, text in zip(("transfers", "probes", "disks"), trace_texts(traces)):
        paths[key].write_text(text, encoding="utf-8")
    return paths
