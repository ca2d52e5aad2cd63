"""Warp grouping: group masks, reshape validation, lane-to-bank mapping.

A group mask has one bit per sub-warp of the core; the most significant
bit is sub-warp 0, and a set bit marks the first sub-warp of a logical
warp of ``group_size`` threads. For 32 threads with granularity 4 exactly
the four masks 10000000/32, 10001000/16, 10101010/8, 11111111/4 are
valid.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import CoreConfig


class TileError(Exception):
    pass


@dataclass(frozen=True)
class TileConfig:
    group_mask: int
    group_size: int


def num_sub_warps(core: CoreConfig) -> int:
    return core.hardware_threads // core.sub_warp_granularity


def mask_for_size(size: int, core: CoreConfig) -> int:
    """Group mask selecting every group start for tiles of ``size``."""
    n = num_sub_warps(core)
    g = core.sub_warp_granularity
    if size < g:
        raise TileError(
            f"tile size {size} below sub-warp granularity {g}")
    if size & (size - 1) or size > core.hardware_threads:
        raise TileError(f"unsupported tile size {size}")
    mask = 0
    for start in range(0, core.hardware_threads, size):
        sub = start // g
        mask |= 1 << (n - 1 - sub)
    return mask


def tile_for_size(size: int, core: CoreConfig) -> TileConfig:
    return TileConfig(group_mask=mask_for_size(size, core), group_size=size)


def default_tile(core: CoreConfig) -> TileConfig:
    """One group spanning each hardware warp."""
    return tile_for_size(core.threads_per_warp, core)


def validate_tile(tile: TileConfig, core: CoreConfig) -> None:
    n = num_sub_warps(core)
    g = core.sub_warp_granularity
    size = tile.group_size
    if size < g or size & (size - 1) or size > core.hardware_threads:
        raise TileError(f"invalid group size {size}")
    if tile.group_mask != mask_for_size(size, core):
        raise TileError(
            f"group mask {tile.group_mask:#0{n + 2}b} inconsistent with "
            f"group size {size}")
    if bin(tile.group_mask).count("1") * size != core.hardware_threads:
        raise TileError("group mask does not tile the core's threads")


def groups(tile: TileConfig, core: CoreConfig):
    """(start_thread, size) per logical warp, in thread order."""
    validate_tile(tile, core)
    n = num_sub_warps(core)
    g = core.sub_warp_granularity
    out = []
    for bit in range(n - 1, -1, -1):  # MSB first = sub-warp 0 first
        if (tile.group_mask >> bit) & 1:
            sub = n - 1 - bit
            out.append((sub * g, tile.group_size))
    return out


def lane_to_bank(logical_lane: int, tile: TileConfig, core: CoreConfig):
    """Map a merged warp's logical lane onto its register banks: one bank
    per constituent sub-warp, ``sub_warp_granularity`` slots each."""
    if not (0 <= logical_lane < tile.group_size):
        raise TileError(f"logical lane {logical_lane} outside group")
    g = core.sub_warp_granularity
    return logical_lane // g, logical_lane % g
