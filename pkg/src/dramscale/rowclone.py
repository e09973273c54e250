"""In-DRAM bulk copy and initialization built on back-to-back activations.

A copy or init larger than one row is distributed across rows and subarrays.
Every (source, destination) pair must live in the same bank and subarray;
pairs that fail the clone-and-compare verification are served by regular
load/store traffic instead. Bulk initialization keeps one pattern source row
per touched subarray and clones it into each destination row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .device import CloneOutcome, rowclone_outcome
from .engine import BatchBuilder, CommandBatch, CommandEngine
from .errors import OutOfRows
from .timing import CommandKind, DramAddress, DramCommand, DramConfig, \
    earliest_legal_issue, ns_to_ps

DEFAULT_T1_PS = ns_to_ps("3.0")     # ACT -> PRE gap, deliberately under tRAS
DEFAULT_T2_PS = ns_to_ps("3.0")     # PRE -> ACT gap, deliberately under tRP


@dataclass(frozen=True)
class CloneOp:
    bank_group: int
    bank: int
    src_row: int
    dst_row: int
    verified: bool = True


@dataclass
class RowClonePlan:
    operations: list = field(default_factory=list)          # CloneOp
    fallback_rows: list = field(default_factory=list)       # (bg, bank, row) dst rows
    init_sources: list = field(default_factory=list)        # (bg, bank, row) per subarray
    fallback_src_rows: list = field(default_factory=list)   # copy: matching src rows


class RowAllocator:
    """Hands out free rows bank by bank. Deterministic: rows are taken in
    ascending order within each bank, banks in (group, bank) order."""

    def __init__(self, cfg: DramConfig, reserved=()):
        self.cfg = cfg
        self._used = set(reserved)
        self._banks = list(cfg.bank_ids())
        self._rr = 0

    def reserve(self, bank_key=None, subarray: Optional[int] = None,
                subarray_rows: int = 512):
        """Reserve one row, optionally pinned to a bank and/or subarray."""
        cfg = self.cfg
        banks = [bank_key] if bank_key is not None else \
            self._banks[self._rr:] + self._banks[:self._rr]
        for bg, bank in banks:
            if subarray is None:
                rows = range(cfg.rows_per_bank)
            else:
                begin = subarray * subarray_rows
                rows = range(begin, min(begin + subarray_rows, cfg.rows_per_bank))
            for row in rows:
                if (bg, bank, row) not in self._used:
                    self._used.add((bg, bank, row))
                    if bank_key is None:
                        self._rr = (self._rr + 1) % len(self._banks)
                    return (bg, bank, row)
        raise OutOfRows("no free row satisfies the constraints")


def plan_bulk_copy(size_bytes: int, allocator: RowAllocator, profile,
                   cfg: DramConfig) -> RowClonePlan:
    """Reserve whole source and destination rows for an n-byte copy and mark
    each pair clonable or fallback. Sub-row sizes still reserve a full row."""
    if size_bytes <= 0:
        raise ValueError("size_bytes must be positive")
    rows_needed = -(-size_bytes // cfg.row_size_bytes)
    plan = RowClonePlan()
    sub_rows = profile.subarray_rows
    for _ in range(rows_needed):
        bg, bank, src = allocator.reserve()
        try:
            _, _, dst = allocator.reserve(bank_key=(bg, bank),
                                          subarray=profile.subarray_of(src),
                                          subarray_rows=sub_rows)
        except OutOfRows:
            _, _, dst = allocator.reserve(bank_key=(bg, bank))
        if profile.clonable(bg, bank, src, dst):
            plan.operations.append(CloneOp(bg, bank, src, dst))
        else:
            plan.fallback_rows.append((bg, bank, dst))
            plan.fallback_src_rows.append((bg, bank, src))
    return plan


def plan_bulk_init(size_bytes: int, allocator: RowAllocator, profile,
                   cfg: DramConfig) -> RowClonePlan:
    """Reserve destination rows and one pattern source row per touched
    subarray; destinations that cannot be cloned from their subarray's source
    fall back to CPU stores. Each destination row is touched exactly once."""
    if size_bytes <= 0:
        raise ValueError("size_bytes must be positive")
    rows_needed = -(-size_bytes // cfg.row_size_bytes)
    plan = RowClonePlan()
    sources = {}
    sub_rows = profile.subarray_rows
    for _ in range(rows_needed):
        bg, bank, dst = allocator.reserve()
        key = (bg, bank, profile.subarray_of(dst))
        if key not in sources:
            try:
                sources[key] = allocator.reserve(bank_key=(bg, bank),
                                                 subarray=key[2],
                                                 subarray_rows=sub_rows)
                plan.init_sources.append(sources[key])
            except OutOfRows:
                sources[key] = None
        src = sources[key]
        if src is not None and profile.clonable(bg, bank, src[2], dst):
            plan.operations.append(CloneOp(bg, bank, src[2], dst))
        else:
            plan.fallback_rows.append((bg, bank, dst))
    return plan


def rowclone_batch(bank_key, src_row: int, dst_row: int, cfg: DramConfig,
                   bank_states: dict, start_ps: int,
                   t1_ps: int = DEFAULT_T1_PS,
                   t2_ps: int = DEFAULT_T2_PS) -> CommandBatch:
    """The activate-precharge-activate idiom with deliberately short gaps.

    Prepends a legal precharge when the bank is open. Always non-strict: the
    whole point is violating tRAS and tRP.
    """
    bg, bank = bank_key
    state = bank_states[bank_key]
    builder = BatchBuilder()
    cursor = start_ps
    if state.open_row is not None:
        pre = DramCommand(CommandKind.PRE, DramAddress(bg, bank, state.open_row))
        t = earliest_legal_issue(state, pre, cfg, cursor)
        builder._entries.append((pre, t - start_ps))
        from .timing import apply_command
        state = apply_command(state, pre, t, cfg)
        cursor = t
    act_src = DramCommand(CommandKind.ACT, DramAddress(bg, bank, src_row))
    t_act = earliest_legal_issue(state, act_src, cfg, cursor)
    if builder._entries and t_act <= builder._entries[-1][1] + start_ps:
        t_act = builder._entries[-1][1] + start_ps + 1
    builder._entries.append((act_src, t_act - start_ps))
    builder._entries.append(
        (DramCommand(CommandKind.PRE, DramAddress(bg, bank, src_row)),
         t_act - start_ps + t1_ps))
    builder._entries.append(
        (DramCommand(CommandKind.ACT, DramAddress(bg, bank, dst_row)),
         t_act - start_ps + t1_ps + t2_ps))
    return builder.build(strict=False)


def issue_rowclone(src, dst, cfg: DramConfig, bank_states: dict,
                   start_ps: int = 0, t1_ps: int = DEFAULT_T1_PS,
                   t2_ps: int = DEFAULT_T2_PS) -> CommandBatch:
    """Batch for one clone between (bg, bank, row) tuples sharing a bank."""
    if (src[0], src[1]) != (dst[0], dst[1]):
        raise ValueError("clone endpoints must share a bank")
    return rowclone_batch((src[0], src[1]), src[2], dst[2], cfg, bank_states,
                          start_ps, t1_ps, t2_ps)


def verify_clonable(src, dst, engine: CommandEngine, trials: int = 1000,
                    t1_ps: int = DEFAULT_T1_PS, t2_ps: int = DEFAULT_T2_PS) -> bool:
    """Clone-and-compare `trials` times through the command engine; true only
    if every round leaves the destination byte-equal to the source."""
    bg, bank = src[0], src[1]
    if (bg, bank) != (dst[0], dst[1]):
        return False
    for _ in range(trials):
        batch = rowclone_batch((bg, bank), src[2], dst[2], engine.cfg,
                               engine.bank_states, engine.device_now_ps,
                               t1_ps, t2_ps)
        engine.flush(batch)
        src_bytes = engine.rowdata.row(bg, bank, src[2])
        dst_bytes = engine.rowdata.row(bg, bank, dst[2])
        if bytes(src_bytes) != bytes(dst_bytes):
            return False
    return True


def execute_plan(plan: RowClonePlan, engine: CommandEngine,
                 pattern: Optional[int] = None,
                 t1_ps: int = DEFAULT_T1_PS, t2_ps: int = DEFAULT_T2_PS):
    """Drive a plan at the device level: pattern rows are written first (init),
    clonable pairs go through the clone idiom, fallback rows through per-line
    reads and writes, the way the processor path would touch them."""
    cfg = engine.cfg
    line = cfg.cache_line_bytes
    if pattern is not None:
        fill = bytes([pattern & 0xFF]) * line
        for bg, bank, row in plan.init_sources:
            for col in range(cfg.columns_per_row):
                _engine_write(engine, DramAddress(bg, bank, row, col), fill)
    for op in plan.operations:
        batch = rowclone_batch((op.bank_group, op.bank), op.src_row, op.dst_row,
                               cfg, engine.bank_states, engine.device_now_ps,
                               t1_ps, t2_ps)
        engine.flush(batch)
    if pattern is not None:
        fill = bytes([pattern & 0xFF]) * line
        for bg, bank, row in plan.fallback_rows:
            for col in range(cfg.columns_per_row):
                _engine_write(engine, DramAddress(bg, bank, row, col), fill)
    else:
        for (bg, bank, dst), (_, _, src) in zip(plan.fallback_rows,
                                                plan.fallback_src_rows):
            for col in range(cfg.columns_per_row):
                data = _engine_read(engine, DramAddress(bg, bank, src, col))
                _engine_write(engine, DramAddress(bg, bank, dst, col), data)


def _column_batch(engine, addr: DramAddress, kind, payload=None) -> CommandBatch:
    state = engine.bank_states[addr.bank_key()]
    builder = BatchBuilder()
    cursor = engine.device_now_ps
    cmds = []
    if state.open_row is not None and state.open_row != addr.row:
        cmds.append(DramCommand(CommandKind.PRE,
                                DramAddress(addr.bank_group, addr.bank, state.open_row)))
    if state.open_row is None or state.open_row != addr.row:
        cmds.append(DramCommand(CommandKind.ACT,
                                DramAddress(addr.bank_group, addr.bank, addr.row)))
    cmds.append(DramCommand(kind, addr, payload=payload))
    from .timing import apply_command
    for cmd in cmds:
        t = earliest_legal_issue(state, cmd, engine.cfg, cursor)
        if builder._entries and t <= builder._entries[-1][1] + engine.device_now_ps:
            t = builder._entries[-1][1] + engine.device_now_ps + 1
        builder._entries.append((cmd, t - engine.device_now_ps))
        state = apply_command(state, cmd, t, engine.cfg)
        cursor = t
    return builder.build(strict=True)


def _engine_read(engine, addr: DramAddress) -> bytes:
    result = engine.flush(_column_batch(engine, addr, CommandKind.RD))
    return result.readback[-1]


def _engine_write(engine, addr: DramAddress, payload: bytes):
    engine.flush(_column_batch(engine, addr, CommandKind.WR, payload=payload))


def coherence_flush(core, src_base: int, dst_base: int, n_bytes: int):
    """Flush dirty source lines and invalidate resident target lines ahead of
    an in-memory copy. Returns (flush_list, invalidated) where flush_list
    holds (addr, data) pairs that must reach DRAM and invalidated counts
    clean target lines dropped at zero DRAM cost."""
    line = core.cfg.line_bytes
    flushes = []
    invalidated = 0
    for off in range(0, n_bytes, line):
        addr = src_base + off
        data = None
        dirty = False
        for cache in (core.l1, core.l2):
            hit = cache.invalidate(addr)
            if hit is not None:
                if data is None:
                    data = bytes(hit[0])
                dirty = dirty or hit[1]
        if data is not None and dirty:
            flushes.append((addr, data))
    for off in range(0, n_bytes, line):
        addr = dst_base + off
        for cache in (core.l1, core.l2):
            if cache.invalidate(addr) is not None:
                invalidated += 1
    return flushes, invalidated
