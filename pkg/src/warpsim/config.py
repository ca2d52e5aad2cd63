"""Core configuration (dataclass mirror of the JSON config schema)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass
class Latencies:
    alu: int = 1
    fpu: int = 1
    load: int = 4
    store: int = 1
    collective: int = 1


@dataclass
class CoreConfig:
    threads_per_warp: int = 8
    warps_per_core: int = 4
    sub_warp_granularity: int = 0  # 0 = threads_per_warp // 2, floor 2
    latencies: Latencies = field(default_factory=Latencies)
    memory_size_bytes: int = 4 * 1024 * 1024
    stack_bytes_per_thread: int = 16384
    # In-order pipeline re-issue interval: a warp may issue again this many
    # cycles after its previous issue. Loads extend the wait to latency+1.
    issue_gap_cycles: int = 3

    def __post_init__(self):
        if isinstance(self.latencies, dict):
            self.latencies = Latencies(**self.latencies)
        if self.sub_warp_granularity == 0:
            self.sub_warp_granularity = max(2, self.threads_per_warp // 2)
        t, g = self.threads_per_warp, self.sub_warp_granularity
        if t & (t - 1) or g & (g - 1):
            raise ValueError("threads_per_warp and sub_warp_granularity must be powers of two")
        if t % g:
            raise ValueError("sub_warp_granularity must divide threads_per_warp")

    @property
    def hardware_threads(self) -> int:
        return self.threads_per_warp * self.warps_per_core

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CoreConfig":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "CoreConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def default_core() -> CoreConfig:
    return CoreConfig()
