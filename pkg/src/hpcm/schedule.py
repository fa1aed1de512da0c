"""Hierarchical coding schedule over three spatial scales and eight channel groups.

Every latent site ``(c, h, w)`` is assigned to exactly one coding step.  Steps
are ordered coarse to fine: the S1 lattice (spacing 4) first, then the rest of
the S2 lattice (spacing 2), then the remaining full-resolution S3 sites.  Each
channel group samples the lattices at its own spatial phase.

The position tables below are part of the bitstream contract; changing any of
them breaks decoding of existing streams.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property, lru_cache

import numpy as np

NUM_GROUPS = 8


class ScaleId(IntEnum):
    S1 = 1
    S2 = 2
    S3 = 3

    @property
    def spacing(self) -> int:
        return {ScaleId.S1: 4, ScaleId.S2: 2, ScaleId.S3: 1}[self]


class ScheduleError(ValueError):
    pass


# S1 phase per channel group, (row mod 4, col mod 4).
S1_OFFSETS = ((0, 0), (2, 2), (1, 1), (3, 3), (0, 2), (2, 0), (1, 3), (3, 1))

# S1 coding classes on the S1 grid, keyed by allocation n1.
# n1=2: checkerboard parity of (i + j); n1=4: (i % 2, j % 2) classes.
S1_CLASS_ORDER_4 = ((0, 0), (1, 1), (0, 1), (1, 0))

# Octree order of the 12 non-S2 sites inside a 4x4 patch, in coordinates
# relative to the group's S2 phase.  Pairs (0,1), (2,3), ... form the steps of
# the default 6-step allocation.
OCTREE_ORDER = (
    (1, 1), (3, 3),
    (1, 3), (3, 1),
    (0, 1), (2, 3),
    (0, 3), (2, 1),
    (1, 0), (3, 2),
    (1, 2), (3, 0),
)

SUPPORTED_ALLOCATIONS = ((2, 3, 6), (2, 3, 3), (2, 3, 12), (4, 3, 6))
ALLOCATION_CODES = {alloc: code for code, alloc in enumerate(SUPPORTED_ALLOCATIONS)}


@dataclass(frozen=True)
class GroupPhase:
    group_index: int
    s1_offset: tuple[int, int]

    @property
    def s2_offset(self) -> tuple[int, int]:
        return (self.s1_offset[0] % 2, self.s1_offset[1] % 2)

    def offset(self, scale: ScaleId) -> tuple[int, int]:
        if scale is ScaleId.S1:
            return self.s1_offset
        if scale is ScaleId.S2:
            return self.s2_offset
        return (0, 0)


GROUP_PHASES = tuple(GroupPhase(g, S1_OFFSETS[g]) for g in range(NUM_GROUPS))


def padded_size(n: int) -> int:
    return -(-n // 4) * 4


def group_of_channel(c: int, channels: int) -> int:
    return c // (channels // NUM_GROUPS)


def _group_step_map(phase: GroupPhase, hp: int, wp: int, allocation) -> np.ndarray:
    """Step index (1-based) of every site of one channel on the padded grid."""
    n1, n2, n3 = allocation
    r1, c1 = phase.s1_offset
    r2, c2 = phase.s2_offset
    hh, ww = np.meshgrid(np.arange(hp), np.arange(wp), indexing="ij")
    out = np.zeros((hp, wp), dtype=np.int32)

    s1 = (hh % 4 == r1) & (ww % 4 == c1)
    s2 = (hh % 2 == r2) & (ww % 2 == c2) & ~s1
    s3 = ~(s1 | s2)

    i1, j1 = (hh - r1) // 4, (ww - c1) // 4
    if n1 == 2:
        out[s1] = np.where((i1 + j1) % 2 == 0, 1, 2)[s1]
    else:
        for k, (pi, pj) in enumerate(S1_CLASS_ORDER_4):
            sel = s1 & (i1 % 2 == pi) & (j1 % 2 == pj)
            out[sel] = k + 1

    # quadtree on the S2 grid: the S1 site of each 2x2 cell sits at parity (dr, dc)
    dr, dc = (r1 - r2) // 2, (c1 - c2) // 2
    i2, j2 = ((hh - r2) // 2) % 2, ((ww - c2) // 2) % 2
    for k, (pi, pj) in enumerate(((1 - dr, 1 - dc), (dr, 1 - dc), (1 - dr, dc))):
        sel = s2 & (i2 == pi) & (j2 == pj)
        out[sel] = n1 + k + 1

    per_step = 12 // n3
    du, dv = (hh - r2) % 4, (ww - c2) % 4
    for rank, (u, v) in enumerate(OCTREE_ORDER):
        sel = s3 & (du == u) & (dv == v)
        out[sel] = n1 + n2 + rank // per_step + 1
    return out


@dataclass(frozen=True)
class CodingStep:
    index: int
    scale: ScaleId
    # per-group arrays of (channel, row, col), full-resolution coordinates
    sites: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def num_sites(self) -> int:
        return sum(len(s) for s in self.sites)


@dataclass(frozen=True, eq=False)
class CodingSchedule:
    dims: tuple[int, int, int]
    allocation: tuple[int, int, int]
    step_map: np.ndarray = field(repr=False)  # (C, H, W) int32, 1-based steps

    @property
    def num_steps(self) -> int:
        return sum(self.allocation)

    @property
    def padded_dims(self) -> tuple[int, int, int]:
        c, h, w = self.dims
        return (c, padded_size(h), padded_size(w))

    def scale_of(self, step: int) -> ScaleId:
        n1, n2, _ = self.allocation
        if not 1 <= step <= self.num_steps:
            raise ScheduleError(f"step {step} outside 1..{self.num_steps}")
        if step <= n1:
            return ScaleId.S1
        if step <= n1 + n2:
            return ScaleId.S2
        return ScaleId.S3

    def steps_at(self, scale: ScaleId) -> range:
        n1, n2, n3 = self.allocation
        start = {ScaleId.S1: 1, ScaleId.S2: n1 + 1, ScaleId.S3: n1 + n2 + 1}[scale]
        count = {ScaleId.S1: n1, ScaleId.S2: n2, ScaleId.S3: n3}[scale]
        return range(start, start + count)

    @cached_property
    def steps(self) -> tuple[CodingStep, ...]:
        c = self.dims[0]
        per = c // NUM_GROUPS
        out = []
        for i in range(1, self.num_steps + 1):
            coords = np.argwhere(self.step_map == i)
            groups = tuple(coords[(coords[:, 0] // per) == g] for g in range(NUM_GROUPS))
            out.append(CodingStep(i, self.scale_of(i), groups))
        return tuple(out)

    @cached_property
    def padded_step_map(self) -> np.ndarray:
        """Step map on the padded grid; padding sites carry step 0 and are never coded."""
        c, hp, wp = self.padded_dims
        out = np.zeros((c, hp, wp), dtype=np.int32)
        out[:, :self.dims[1], :self.dims[2]] = self.step_map
        out.setflags(write=False)
        return out

    @cached_property
    def _site_lists(self) -> tuple[np.ndarray, ...]:
        flat = self.step_map.reshape(-1)
        order = np.argsort(flat, kind="stable")
        bounds = np.searchsorted(flat[order], np.arange(1, self.num_steps + 2))
        coords = np.stack(np.unravel_index(order, self.step_map.shape), axis=1)
        return tuple(coords[bounds[i]:bounds[i + 1]] for i in range(self.num_steps))

    def step_sites(self, i: int) -> np.ndarray:
        """``(n, 3)`` array of ``(channel, row, col)`` coded at step ``i``, row-major order."""
        self.scale_of(i)
        return self._site_lists[i - 1]

    def step_mask(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(before, current)`` 0/1 masks for step ``i``."""
        self.scale_of(i)
        before = (self.step_map < i).astype(np.uint8)
        current = (self.step_map == i).astype(np.uint8)
        return before, current

    def dump_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "group", "channel", "row", "col"])
        for step in self.steps:
            for g, sites in enumerate(step.sites):
                for ch, r, col in sites:
                    writer.writerow([step.index, g, int(ch), int(r), int(col)])
        return buf.getvalue()


def check_allocation(allocation) -> tuple[int, int, int]:
    allocation = tuple(int(a) for a in allocation)
    if allocation not in SUPPORTED_ALLOCATIONS:
        raise ScheduleError(
            f"unsupported allocation {allocation}; expected one of {SUPPORTED_ALLOCATIONS}"
        )
    return allocation


def build_schedule(dims, allocation=(2, 3, 6)) -> CodingSchedule:
    """Schedule for ``dims = (C, H, W)``; schedules are immutable and memoised."""
    return _build_schedule(tuple(int(d) for d in dims), check_allocation(allocation))


@lru_cache(maxsize=64)
def _build_schedule(dims, allocation) -> CodingSchedule:
    c, h, w = dims
    if c <= 0 or c % NUM_GROUPS:
        raise ScheduleError(f"channel count {c} must be a positive multiple of {NUM_GROUPS}")
    if h <= 0 or w <= 0:
        raise ScheduleError(f"spatial dims must be positive, got {h}x{w}")
    hp, wp = padded_size(h), padded_size(w)
    per = c // NUM_GROUPS
    planes = [_group_step_map(GROUP_PHASES[g], hp, wp, allocation) for g in range(NUM_GROUPS)]
    step_map = np.stack([planes[ch // per] for ch in range(c)])[:, :h, :w]
    step_map = np.ascontiguousarray(step_map)
    step_map.setflags(write=False)
    return CodingSchedule((c, h, w), allocation, step_map)


# -- sub-lattice extraction and fill-back ------------------------------------


def _lattice_slices(scale: ScaleId, phase: GroupPhase, into: ScaleId):
    """Slices locating ``scale``'s lattice inside the grid of ``into``."""
    s, t = scale.spacing, into.spacing
    if s < t:
        raise ScheduleError(f"{scale.name} is finer than {into.name}")
    (ra, ca), (rb, cb) = phase.offset(scale), phase.offset(into)
    step = s // t
    return slice((ra - rb) // t, None, step), slice((ca - cb) // t, None, step)


def downsample_to_scale(latent: np.ndarray, scale: ScaleId, phase: GroupPhase,
                        source: ScaleId = ScaleId.S3) -> np.ndarray:
    """Extract the group's sub-lattice at ``scale`` from a tensor on ``source``'s grid."""
    rs, cs = _lattice_slices(scale, phase, source)
    return latent[..., rs, cs].copy()


def upsample_fill(sub: np.ndarray, into: np.ndarray, scale: ScaleId, phase: GroupPhase,
                  into_scale: ScaleId = ScaleId.S3) -> np.ndarray:
    """Return ``into`` with the lattice sites of ``scale`` overwritten by ``sub``."""
    rs, cs = _lattice_slices(scale, phase, into_scale)
    out = into.copy()
    view = out[..., rs, cs]
    if view.shape != sub.shape:
        raise ScheduleError(f"sub-lattice shape {sub.shape} does not match {view.shape}")
    out[..., rs, cs] = sub
    return out


def to_scale_grid(tensor: np.ndarray, scale: ScaleId) -> np.ndarray:
    """Gather every channel at its own group's lattice; input on the padded full grid."""
    c = tensor.shape[0]
    per = c // NUM_GROUPS
    rows = []
    for g in range(NUM_GROUPS):
        rows.append(downsample_to_scale(tensor[g * per:(g + 1) * per], scale, GROUP_PHASES[g]))
    return np.concatenate(rows, axis=0)


def from_scale_grid(grid: np.ndarray, into: np.ndarray, scale: ScaleId) -> np.ndarray:
    """Inverse of :func:`to_scale_grid`: scatter lattice values into a full-grid tensor."""
    c = into.shape[0]
    per = c // NUM_GROUPS
    out = into.copy()
    for g in range(NUM_GROUPS):
        sl = slice(g * per, (g + 1) * per)
        out[sl] = upsample_fill(grid[sl], out[sl], scale, GROUP_PHASES[g])
    return out
