"""Spatial-unrolling catalog, per-layer utilization, and SU selection.

The engine deploys 512 column-serial lanes (4096 1b x 8b multipliers) and
reconfigures its spatial unrolling per layer from a 7-entry catalog. SU1-6
unroll (C, OX, K); SU7 is specialized for depthwise convolutions and
unrolls 64 kernel groups with OX_u=2 (128 lanes). OY, FX, FY and B are
always iterated temporally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .workload import LayerShape, MappingError


@dataclass(frozen=True)
class SpatialUnrolling:
    id: str
    ox_u: int
    k_u: int
    c_u: int = 0          # channel unroll (SU1-6 and custom entries)
    g_u: int = 0          # kernel-group unroll (depthwise entry)
    w_bw: int = 0         # weight bits/cycle
    act_bw: int = 0       # activation bits/cycle
    kinds: str = "no-dw"  # "no-dw" | "dw-only" | "any"

    @property
    def lanes(self) -> int:
        return (self.g_u or self.c_u) * self.ox_u * self.k_u


CATALOG = (
    SpatialUnrolling("SU1", ox_u=16, k_u=32, c_u=8, w_bw=256, act_bw=1024),
    SpatialUnrolling("SU2", ox_u=8, k_u=32, c_u=16, w_bw=512, act_bw=1024),
    SpatialUnrolling("SU3", ox_u=4, k_u=32, c_u=32, w_bw=1024, act_bw=1024),
    SpatialUnrolling("SU4", ox_u=1, k_u=128, c_u=8, w_bw=1024, act_bw=64),
    SpatialUnrolling("SU5", ox_u=1, k_u=64, c_u=16, w_bw=1024, act_bw=128),
    SpatialUnrolling("SU6", ox_u=1, k_u=32, c_u=32, w_bw=1024, act_bw=256),
    SpatialUnrolling("SU7", ox_u=2, k_u=1, g_u=64, w_bw=64, act_bw=1024, kinds="dw-only"),
)

_BY_ID = {su.id: su for su in CATALOG}


def catalog_su(su_id: str) -> SpatialUnrolling:
    try:
        return _BY_ID[su_id]
    except KeyError:
        raise MappingError(f"unknown spatial unrolling {su_id!r}") from None


def make_custom_su(c_u: int, ox_u: int, k_u: int, bit_serial: bool = False,
                   su_id: str | None = None) -> SpatialUnrolling:
    """Non-catalog SU (baseline accelerator dataflows); compatible with any kind."""
    w_bw = c_u * k_u * (1 if bit_serial else 8)
    return SpatialUnrolling(su_id or f"custom[{c_u},{ox_u},{k_u}]", ox_u=ox_u, k_u=k_u,
                            c_u=c_u, w_bw=w_bw, act_bw=c_u * ox_u * 8, kinds="any")


def is_compatible(shape: LayerShape, su: SpatialUnrolling) -> bool:
    if su.kinds == "any":
        return True
    dw = shape.kind == "depthwise-conv"
    return dw if su.kinds == "dw-only" else not dw


def check_kind_compatible(shape: LayerShape, su: SpatialUnrolling) -> None:
    if not is_compatible(shape, su):
        raise MappingError(f"{su.id} cannot map a {shape.kind} layer")


def temporal_steps(shape: LayerShape, su: SpatialUnrolling) -> int:
    """Cycles needed at full lane occupancy to cover the layer loop nest."""
    check_kind_compatible(shape, su)
    if su.g_u:
        return (math.ceil(shape.k / su.g_u) * math.ceil(shape.ox / su.ox_u)
                * shape.c * shape.oy * shape.fx * shape.fy * shape.b)
    return (math.ceil(shape.c / su.c_u) * math.ceil(shape.ox / su.ox_u)
            * math.ceil(shape.k / su.k_u) * shape.oy * shape.fx * shape.fy * shape.b)


def spatial_utilization(shape: LayerShape, su: SpatialUnrolling) -> float:
    """Fraction of lane-cycles doing real MACs: N_mac / (steps * lanes)."""
    return shape.macs / (temporal_steps(shape, su) * su.lanes)


def utilization_table(shape: LayerShape, catalog=CATALOG) -> dict[str, float | None]:
    """Per-SU utilization; incompatible entries report None."""
    return {su.id: spatial_utilization(shape, su) if is_compatible(shape, su) else None
            for su in catalog}


def select_su(shape: LayerShape, catalog=CATALOG) -> SpatialUnrolling:
    """Best-utilization SU; ties break by lower weight bandwidth, then id."""
    best = None
    best_key = None
    for pos, su in enumerate(catalog):
        if not is_compatible(shape, su):
            continue
        key = (-spatial_utilization(shape, su), su.w_bw, pos)
        if best_key is None or key < best_key:
            best, best_key = su, key
    if best is None:
        raise MappingError(f"no catalog entry maps a {shape.kind} layer")
    return best


def bandwidth_requirements(su: SpatialUnrolling) -> tuple[int, int]:
    """(weight, activation) bits per cycle for a catalog or custom entry."""
    return su.w_bw, su.act_bw


def weight_bank_layout(cl, shape: LayerShape, su: SpatialUnrolling,
                       max_cycles: int | None = None) -> list[dict]:
    """SU1 weight-bank schedule: per cycle, 4 bank segments of 64 bits.

    Each segment carries one same-significance bit from 8 consecutive input
    channels across 8 consecutive kernels (element = channel i, kernel j at
    bit i + 8*j). Kernel groups co-scheduled in a wave advance in lockstep,
    so one group's surviving columns occupy consecutive cycle slots; dense
    mode streams 8 slots per group, significance descending (sign first).
    """
    from . import codec, engine  # local import: engine depends on this module

    if su.id != "SU1":
        raise MappingError("the weight-bank layout is defined for SU1 only")
    if cl.group_size % su.c_u != 0:
        raise MappingError(f"group size {cl.group_size} incompatible with C_u={su.c_u}")

    g = cl.group_size
    blocks = math.ceil(shape.c / g)
    positions = shape.fy * shape.fx
    slices = g // su.c_u

    if cl.mode == "bcs":
        schedules = []
        for pg in engine.packed_groups(cl):
            parsed = engine.parse_index(pg.index)
            sched = (["sign"] if parsed.sign_rqst else []) + list(parsed.schedule)
            bits = {}
            if parsed.sign_rqst:
                bits["sign"] = pg.sign_bits
            bits.update(pg.columns)
            schedules.append((sched, bits))
    else:
        groups = codec.partition_groups(cl.dense_values.reshape(shape.weight_dims), g)
        sm, _ = codec.sm_encode(groups)
        schedules = []
        for row in sm:
            sched = ["sign"] + list(range(6, -1, -1))
            bits = {"sign": (row >> 7) & 1}
            for b in range(7):
                bits[b] = (row >> b) & 1
            schedules.append((sched, bits))

    def group_at(k, pos, cb):
        return (k * positions + pos) * blocks + cb

    rows = []
    cycle = 0
    kb_count = math.ceil(shape.k / su.k_u)
    for pos in range(positions):
        for kb in range(kb_count):
            k0 = kb * su.k_u
            kernels = range(k0, min(k0 + su.k_u, shape.k))
            for cb in range(blocks):
                slots = max(len(schedules[group_at(k, pos, cb)][0]) for k in kernels)
                for sl in range(slices):
                    c_base = cb * g + sl * su.c_u
                    for t in range(slots):
                        for bank in range(4):
                            seg = 0
                            sigs = []
                            for j in range(8):
                                k = k0 + bank * 8 + j
                                if k >= shape.k:
                                    sigs.append("-")
                                    continue
                                sched, bits = schedules[group_at(k, pos, cb)]
                                if t >= len(sched):
                                    sigs.append("-")
                                    continue
                                sig = sched[t]
                                sigs.append(str(sig))
                                col = np.asarray(bits[sig])[sl * su.c_u:(sl + 1) * su.c_u]
                                for i in range(su.c_u):
                                    seg |= int(col[i]) << (i + 8 * j)
                            rows.append({
                                "cycle": cycle,
                                "bank": bank,
                                "k_base": k0 + bank * 8,
                                "c_base": c_base,
                                "significance": ",".join(sigs),
                                "segment": f"{seg:016x}",
                            })
                        cycle += 1
                        if max_cycles is not None and cycle >= max_cycles:
                            return rows
    return rows
