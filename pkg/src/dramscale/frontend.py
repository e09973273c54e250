"""Trace-driven processor and cache model that generates memory requests.

An in-order core consumes trace operations at one op per dispatch; loads and
stores walk an L1D/L2 write-back write-allocate hierarchy and emit tagged
memory requests on misses. The core blocks on demand misses (configurable
outstanding-miss limit approximates out-of-order pressure) while eviction
writebacks ride the request queue without stalling the pipeline.

Built-in generators produce the copy, init, and pointer-chase
microbenchmarks; external traces use a one-op-per-line text format.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import ParseError, TraceExhausted
from .util import mix, splitmix64


class OpKind(Enum):
    LOAD = "LD"
    STORE = "ST"
    COMPUTE = "CP"
    CLFLUSH = "FLUSH"
    RCCOPY = "RCCOPY"
    RCINIT = "RCINIT"


@dataclass
class TraceOp:
    kind: OpKind
    addr: int = 0
    size: int = 0
    cycles: int = 0
    pattern: int = 0
    src: int = 0
    serialize: bool = False     # dependent op: always waits for its response


@dataclass
class Workload:
    ops: list
    measure_from: int = 0       # op index where the measured window starts
    name: str = "trace"


@dataclass(frozen=True)
class CoreConfig:
    l1_size: int = 32768
    l1_ways: int = 4
    l2_size: int = 524288
    l2_ways: int = 8
    line_bytes: int = 64
    l1_hit_cycles: int = 2
    l2_hit_cycles: int = 10
    miss_limit: int = 1         # outstanding demand misses; 1 = blocking


class Cache:
    """Set-associative, LRU, data-bearing cache level."""

    def __init__(self, size_bytes: int, ways: int, line_bytes: int):
        self.line_bytes = line_bytes
        self.ways = ways
        self.num_sets = max(1, size_bytes // (ways * line_bytes))
        self._sets = [OrderedDict() for _ in range(self.num_sets)]

    def _locate(self, addr: int):
        block = addr // self.line_bytes
        return self._sets[block % self.num_sets], block

    def lookup(self, addr: int, touch: bool = True):
        """Return the [data, dirty] entry or None."""
        cset, tag = self._locate(addr)
        entry = cset.get(tag)
        if entry is not None and touch:
            cset.move_to_end(tag)
        return entry

    def insert(self, addr: int, data: bytes, dirty: bool):
        """Insert a line; returns the evicted (addr, data, dirty) or None."""
        cset, tag = self._locate(addr)
        victim = None
        if tag not in cset and len(cset) >= self.ways:
            vtag, ventry = cset.popitem(last=False)
            victim = (vtag * self.line_bytes, ventry[0], ventry[1])
        cset[tag] = [bytearray(data), dirty]
        cset.move_to_end(tag)
        return victim

    def invalidate(self, addr: int):
        """Drop the line; returns (data, dirty) if it was present."""
        cset, tag = self._locate(addr)
        entry = cset.pop(tag, None)
        return None if entry is None else (entry[0], entry[1])


def _store_bytes(op: TraceOp, last_loaded: Optional[bytes], line: int) -> bytes:
    if op.pattern:
        return bytes([op.pattern & 0xFF]) * line
    if last_loaded is not None and len(last_loaded) == line:
        return last_loaded
    return bytes([mix(0x57, op.addr) & 0xFF]) * line


class Core:
    """One in-order core with its private cache hierarchy."""

    def __init__(self, cfg: CoreConfig, workload: Workload, core_id: int = 0):
        self.cfg = cfg
        self.ops = workload.ops
        self.measure_from = workload.measure_from
        self.core_id = core_id
        self.l1 = Cache(cfg.l1_size, cfg.l1_ways, cfg.line_bytes)
        self.l2 = Cache(cfg.l2_size, cfg.l2_ways, cfg.line_bytes)
        self.pos = 0
        self.injected = deque()
        self.ready_at = 0
        self.wait_id: Optional[int] = None
        self.fence = False
        self.to_issue = deque()     # requests waiting for hardware buffer space
        self.demand_misses = 0
        self.outstanding = set()
        self.last_loaded: Optional[bytes] = None
        self.finished = False
        self.finish_cycle = 0
        # Stats
        self.loads = 0
        self.measure_started = self.measure_from == 0
        self.measure_start_cycle = 0
        self.measure_start_loads = 0
        self.measured_cycles = 0
        self.measured_loads = 0

    # -- scheduling interface ------------------------------------------------

    def runnable_at(self) -> Optional[int]:
        """Next proc cycle this core wants to act at, or None if it waits on
        an external event (response, fence drain, buffer space)."""
        if self.finished or self.wait_id is not None:
            return None
        if self.to_issue or (self.fence and self.outstanding):
            return None
        return self.ready_at

    def step(self, sim, now: int) -> bool:
        """Execute at most one trace op at proc cycle `now`. Returns True if
        any progress was made."""
        if self.finished:
            return False
        progressed = False
        while self.to_issue and sim.try_issue(self, self.to_issue[0], now):
            self.to_issue.popleft()
            progressed = True
        if self.to_issue:
            return progressed
        if self.wait_id is not None or (self.fence and self.outstanding):
            return progressed
        if now < self.ready_at:
            return progressed
        if not self.injected and self.pos >= len(self.ops):
            if not self.outstanding:
                self.finished = True
                self.finish_cycle = now
                self._close_measurement(now)
                return True
            return progressed
        op = self._next_op(now)
        self._execute(sim, op, now)
        return True

    def _next_op(self, now: int) -> TraceOp:
        if self.injected:
            return self.injected.popleft()
        if self.pos >= len(self.ops):
            raise TraceExhausted("core stepped past the end of its trace")
        if not self.measure_started and self.pos == self.measure_from:
            self.measure_started = True
            self.measure_start_cycle = now
            self.measure_start_loads = self.loads
        op = self.ops[self.pos]
        self.pos += 1
        return op

    def _close_measurement(self, now: int):
        if self.measure_started:
            self.measured_cycles = now - self.measure_start_cycle
            self.measured_loads = self.loads - self.measure_start_loads

    # -- op execution ----------------------------------------------------------

    def _execute(self, sim, op: TraceOp, now: int):
        kind = op.kind
        if kind is OpKind.COMPUTE:
            self.ready_at = now + max(1, op.cycles)
            return
        if kind is OpKind.LOAD:
            self.loads += 1
            self._access(sim, op, now, store=False)
            return
        if kind is OpKind.STORE:
            self._access(sim, op, now, store=True)
            return
        if kind is OpKind.CLFLUSH:
            self._clflush(sim, op, now)
            return
        if kind in (OpKind.RCCOPY, OpKind.RCINIT):
            if self.outstanding:
                # Fence: re-run this op once in-flight requests drain.
                self.injected.appendleft(op)
                self.fence = True
                return
            self.fence = False
            self._issue_bulk(sim, op, now)
            return
        raise ParseError(f"unhandled op kind {kind}")  # pragma: no cover

    def _line_addr(self, addr: int) -> int:
        return addr - (addr % self.cfg.line_bytes)

    def _access(self, sim, op: TraceOp, now: int, store: bool):
        cfg = self.cfg
        addr = self._line_addr(op.addr)
        entry = self.l1.lookup(addr)
        if entry is not None:
            if store:
                entry[0][:] = _store_bytes(op, self.last_loaded, cfg.line_bytes)
                entry[1] = True
            else:
                self.last_loaded = bytes(entry[0])
            self.ready_at = now + cfg.l1_hit_cycles
            return
        entry = self.l2.lookup(addr)
        if entry is not None:
            self._fill(sim, addr, bytes(entry[0]), entry[1], now, promote_only=True)
            l1e = self.l1.lookup(addr, touch=False)
            if store:
                l1e[0][:] = _store_bytes(op, self.last_loaded, cfg.line_bytes)
                l1e[1] = True
            else:
                self.last_loaded = bytes(l1e[0])
            self.ready_at = now + cfg.l1_hit_cycles + cfg.l2_hit_cycles
            return
        # Miss to main memory: write-allocate for stores too.
        req = sim.make_read_request(self, addr, op, store)
        self.demand_misses += 1
        self.to_issue.append(req)

    def _fill(self, sim, addr: int, data: bytes, dirty: bool, now: int,
              promote_only: bool = False):
        """Install a line into L1 (and L2 on a memory fill), spilling victims
        down the hierarchy; dirty L2 victims turn into posted writebacks."""
        if not promote_only:
            v2 = self.l2.insert(addr, data, dirty)
            if v2 is not None and v2[2]:
                sim.post_writeback(self, v2[0], bytes(v2[1]), now)
        v1 = self.l1.insert(addr, data, dirty)
        if v1 is not None:
            vaddr, vdata, vdirty = v1
            ventry = self.l2.lookup(vaddr, touch=False)
            if ventry is not None:
                if vdirty:
                    ventry[0][:] = vdata
                    ventry[1] = True
            else:
                v2 = self.l2.insert(vaddr, vdata, vdirty)
                if v2 is not None and v2[2]:
                    sim.post_writeback(self, v2[0], bytes(v2[1]), now)

    def _clflush(self, sim, op: TraceOp, now: int):
        addr = self._line_addr(op.addr)
        data = None
        dirty = False
        for cache in (self.l1, self.l2):
            hit = cache.invalidate(addr)
            if hit is not None and data is None:
                data, dirty = bytes(hit[0]), hit[1]
            elif hit is not None and hit[1]:
                dirty = True
                data = bytes(hit[0]) if data is None else data
        self.ready_at = now + self.cfg.l1_hit_cycles
        if data is not None and dirty:
            req = sim.make_flush_request(self, addr, data)
            self.to_issue.append(req)

    def _issue_bulk(self, sim, op: TraceOp, now: int):
        if op.kind is OpKind.RCCOPY:
            # Drop any cached target lines; the in-memory copy supersedes them.
            for off in range(0, op.size, self.cfg.line_bytes):
                self.l1.invalidate(op.addr + off)
                self.l2.invalidate(op.addr + off)
        req = sim.make_bulk_request(self, op)
        self.to_issue.append(req)

    # -- response handling -----------------------------------------------------

    def complete(self, sim, resp, info, now: int):
        """Called when a released response reaches this core."""
        self.outstanding.discard(resp.request_id)
        kind = info["kind"]
        if kind == "fill":
            op = info["op"]
            data = resp.data
            self._fill(sim, info["addr"], data, dirty=False, now=now)
            l1e = self.l1.lookup(info["addr"], touch=False)
            if info["store"]:
                l1e[0][:] = _store_bytes(op, self.last_loaded, self.cfg.line_bytes)
                l1e[1] = True
            else:
                self.last_loaded = bytes(l1e[0])
            if self.wait_id == resp.request_id:
                self.wait_id = None
                self.ready_at = now + self.cfg.l1_hit_cycles + self.cfg.l2_hit_cycles
        elif kind == "bulk":
            from .controller import ResponseStatus
            if resp.status is ResponseStatus.FALLBACK_USED:
                self._inject_fallback(info["op"], resp.fallback_ranges)
            if self.wait_id == resp.request_id:
                self.wait_id = None
                self.ready_at = now + 1
        else:   # posted writeback or flush: nothing to deliver
            pass

    def _inject_fallback(self, op: TraceOp, ranges):
        # Loads serialize so the paired store always sees the loaded bytes.
        line = self.cfg.line_bytes
        for src, dst, nbytes in ranges:
            for off in range(0, nbytes, line):
                if op.kind is OpKind.RCINIT:
                    self.injected.append(TraceOp(OpKind.STORE, addr=dst + off,
                                                 size=line, pattern=op.pattern or 0xAB))
                else:
                    self.injected.append(TraceOp(OpKind.LOAD, addr=src + off,
                                                 size=line, serialize=True))
                    self.injected.append(TraceOp(OpKind.STORE, addr=dst + off, size=line))


# -- microbenchmark generators --------------------------------------------------


def gen_copy(n_bytes: int, variant: str, setting: str, src_base: int,
             dst_base: int, line_bytes: int = 64) -> Workload:
    """Copy an n-byte source array to a destination array.

    cpu: one load+store pair per cache line. rowclone: a single bulk-copy op,
    preceded in the clflush setting by per-line flushes of the source range.
    """
    ops = []
    if variant == "cpu":
        for off in range(0, n_bytes, line_bytes):
            ops.append(TraceOp(OpKind.LOAD, addr=src_base + off, size=line_bytes))
            ops.append(TraceOp(OpKind.STORE, addr=dst_base + off, size=line_bytes))
    elif variant == "rowclone":
        if setting == "clflush":
            for off in range(0, n_bytes, line_bytes):
                ops.append(TraceOp(OpKind.CLFLUSH, addr=src_base + off))
        ops.append(TraceOp(OpKind.RCCOPY, addr=dst_base, src=src_base, size=n_bytes))
    else:
        raise ParseError(f"unknown copy variant: {variant}")
    return Workload(ops, name=f"copy-{variant}-{setting}-{n_bytes}")


def gen_init(n_bytes: int, pattern: int, variant: str, setting: str,
             dst_base: int, line_bytes: int = 64) -> Workload:
    ops = []
    if variant == "cpu":
        for off in range(0, n_bytes, line_bytes):
            ops.append(TraceOp(OpKind.STORE, addr=dst_base + off, size=line_bytes,
                               pattern=pattern))
    elif variant == "rowclone":
        if setting == "clflush":
            for off in range(0, n_bytes, line_bytes):
                ops.append(TraceOp(OpKind.CLFLUSH, addr=dst_base + off))
        ops.append(TraceOp(OpKind.RCINIT, addr=dst_base, size=n_bytes, pattern=pattern))
    else:
        raise ParseError(f"unknown init variant: {variant}")
    return Workload(ops, name=f"init-{variant}-{setting}-{n_bytes}")


def gen_latency_chase(working_set: int, stride: int, base: int, seed: int,
                      passes: int = 2, line_bytes: int = 64) -> Workload:
    """Dependent-load pointer chase over a shuffled ring of cache lines.

    One warmup pass precedes the measured passes; the measured window starts
    at the first post-warmup load.
    """
    step = max(stride, line_bytes)
    slots = max(1, working_set // step)
    order = list(range(slots))
    # Seeded Fisher-Yates builds the visit order; following it repeatedly is
    # equivalent to chasing a single-cycle pointer ring.
    h = seed
    for i in range(slots - 1, 0, -1):
        h = splitmix64(h ^ i)
        j = h % (i + 1)
        order[i], order[j] = order[j], order[i]
    ops = []
    for _ in range(passes + 1):
        for slot in order:
            ops.append(TraceOp(OpKind.LOAD, addr=base + slot * step,
                               size=line_bytes, serialize=True))
    return Workload(ops, measure_from=slots,
                    name=f"chase-{working_set}")


# -- trace text format -----------------------------------------------------------


def dump_trace(workload: Workload) -> str:
    lines = []
    for op in workload.ops:
        if op.kind is OpKind.LOAD:
            lines.append(f"LD {op.addr:#x} {op.size}")
        elif op.kind is OpKind.STORE:
            lines.append(f"ST {op.addr:#x} {op.size}")
        elif op.kind is OpKind.COMPUTE:
            lines.append(f"CP {op.cycles}")
        elif op.kind is OpKind.CLFLUSH:
            lines.append(f"FLUSH {op.addr:#x}")
        elif op.kind is OpKind.RCCOPY:
            lines.append(f"RCCOPY {op.src:#x} {op.addr:#x} {op.size}")
        elif op.kind is OpKind.RCINIT:
            lines.append(f"RCINIT {op.addr:#x} {op.size} {op.pattern}")
    return "\n".join(lines) + ("\n" if lines else "")


def load_trace(fp, name: str = "trace") -> Workload:
    """Parse the text trace format; raises ParseError with the line number."""
    ops = []
    for lineno, raw in enumerate(fp, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        try:
            opcode = parts[0].upper()
            if opcode == "LD":
                ops.append(TraceOp(OpKind.LOAD, addr=int(parts[1], 16),
                                   size=int(parts[2])))
            elif opcode == "ST":
                ops.append(TraceOp(OpKind.STORE, addr=int(parts[1], 16),
                                   size=int(parts[2])))
            elif opcode == "CP":
                ops.append(TraceOp(OpKind.COMPUTE, cycles=int(parts[1])))
            elif opcode == "FLUSH":
                ops.append(TraceOp(OpKind.CLFLUSH, addr=int(parts[1], 16)))
            elif opcode == "RCCOPY":
                ops.append(TraceOp(OpKind.RCCOPY, src=int(parts[1], 16),
                                   addr=int(parts[2], 16), size=int(parts[3])))
            elif opcode == "RCINIT":
                ops.append(TraceOp(OpKind.RCINIT, addr=int(parts[1], 16),
                                   size=int(parts[2]), pattern=int(parts[3])))
            else:
                raise ValueError(f"unknown opcode {parts[0]!r}")
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), lineno) from exc
    return Workload(ops, name=name)
