"""The software memory controller: hardware-analog buffers, the request
table, schedulers, address mapping, and the serve loop.

The controller is a state machine stepped by the simulation's global clock.
Each action (transferring a request out of the hardware buffer, making a
scheduling decision, staging commands, writing a response back) costs a
configurable number of substrate cycles; the scheduling-latency model decides
how much of that substrate work is charged to emulated time.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .engine import BatchBuilder, CommandBatch
from .errors import DuplicateId, OutOfRange, ProtocolError
from .timescale import enter_critical, exit_critical
from .timing import CommandKind, DramAddress, DramCommand, DramConfig, \
    earliest_legal_issue, apply_command


class RequestKind(Enum):
    READ = "read"
    WRITE = "write"
    FLUSH = "flush"
    PROFILING = "profiling"
    ROWCLONE_COPY = "rowclone_copy"
    ROWCLONE_INIT = "rowclone_init"


class ResponseStatus(Enum):
    OK = "ok"
    PROFILING_PASS = "profiling_pass"
    PROFILING_FAIL = "profiling_fail"
    FALLBACK_USED = "fallback_used"


@dataclass
class MemRequest:
    id: int
    kind: RequestKind
    phys_addr: int
    size_bytes: int
    payload: Optional[bytes] = None
    tag_cycle: Optional[int] = None
    profiling_trcd_ps: Optional[int] = None
    src_addr: Optional[int] = None      # RowClone copy source range base
    pattern: Optional[int] = None       # RowClone init fill byte
    arrival_index: Optional[int] = None
    core_id: int = 0


@dataclass
class MemResponse:
    request_id: int
    status: ResponseStatus
    data: Optional[bytes] = None
    release_at: Optional[int] = None
    fallback_ranges: tuple = ()         # ((src_phys, dst_phys, nbytes), ...)


class FifoBuffer:
    """Bounded FIFO standing in for a hardware request or response buffer."""

    def __init__(self, depth: int):
        self.depth = depth
        self._items = deque()

    def __len__(self):
        return len(self._items)

    def full(self) -> bool:
        return len(self._items) >= self.depth

    def push(self, item) -> bool:
        if self.full():
            return False
        self._items.append(item)
        return True

    def pop(self):
        return self._items.popleft() if self._items else None

    def peek(self):
        return self._items[0] if self._items else None

    def __iter__(self):
        return iter(self._items)


def get_request(hw_buffer: FifoBuffer) -> Optional[MemRequest]:
    """Pop the oldest request from the hardware buffer, if any."""
    return hw_buffer.pop()


class RequestTable:
    """FIFO-stable software request table."""

    def __init__(self):
        self._entries = []
        self._ids = set()
        self._next_arrival = 0

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def add_request(self, req: MemRequest) -> "RequestTable":
        if req.id in self._ids:
            raise DuplicateId(f"request id {req.id} already in table")
        req.arrival_index = self._next_arrival
        self._next_arrival += 1
        self._ids.add(req.id)
        self._entries.append(req)
        return self

    def remove(self, req: MemRequest):
        self._entries.remove(req)
        self._ids.discard(req.id)


@dataclass(frozen=True)
class AddressMap:
    """Physical-to-DRAM bit slicing.

    row_bank_col: consecutive row-sized chunks walk the banks, bank groups
    fastest, so streaming spreads across groups while an aligned chunk always
    lands in exactly one (bank, row). bank_row_col: chunks walk the rows of
    one bank first.
    """

    cfg: DramConfig
    scheme: str = "row_bank_col"

    def __post_init__(self):
        if self.scheme not in ("row_bank_col", "bank_row_col"):
            raise ValueError(f"unknown address map scheme: {self.scheme}")

    def map_addr(self, phys: int) -> DramAddress:
        cfg = self.cfg
        if not (0 <= phys < cfg.capacity_bytes):
            raise OutOfRange(f"physical address {phys:#x} outside capacity")
        line = phys // cfg.cache_line_bytes
        col = line % cfg.columns_per_row
        chunk = line // cfg.columns_per_row
        if self.scheme == "row_bank_col":
            linear_bank = chunk % cfg.banks_total
            row = chunk // cfg.banks_total
        else:
            row = chunk % cfg.rows_per_bank
            linear_bank = chunk // cfg.rows_per_bank
        bg = linear_bank % cfg.bank_groups
        bank = linear_bank // cfg.bank_groups
        return DramAddress(bg, bank, row, col)

    def unmap_addr(self, addr: DramAddress) -> int:
        cfg = self.cfg
        linear_bank = addr.bank * cfg.bank_groups + addr.bank_group
        if self.scheme == "row_bank_col":
            chunk = addr.row * cfg.banks_total + linear_bank
        else:
            chunk = linear_bank * cfg.rows_per_bank + addr.row
        line = chunk * cfg.columns_per_row + addr.column
        return line * cfg.cache_line_bytes


@dataclass(frozen=True)
class CostTable:
    """Substrate cycles per controller action."""

    request_transfer: int = 200
    scheduling: int = 300
    stage_per_command: int = 10
    response_writeback: int = 100

    def zeroed(self) -> "CostTable":
        return CostTable(0, 0, 0, 0)


def _request_rows(req: MemRequest, amap: AddressMap):
    cfg = amap.cfg
    first = amap.map_addr(req.phys_addr)
    return first


def is_row_hit(req: MemRequest, bank_states: dict, amap: AddressMap) -> bool:
    addr = amap.map_addr(req.phys_addr)
    state = bank_states.get(addr.bank_key())
    return state is not None and state.open_row == addr.row


def schedule_fcfs(table: RequestTable, bank_states: dict, amap: AddressMap):
    """Oldest request first."""
    oldest = None
    for req in table:
        if oldest is None or req.arrival_index < oldest.arrival_index:
            oldest = req
    return oldest


def schedule_frfcfs(table: RequestTable, bank_states: dict, amap: AddressMap):
    """Row hits first, oldest within each class."""
    best = None
    best_key = None
    for req in table:
        hit = is_row_hit(req, bank_states, amap)
        key = (not hit, req.arrival_index)
        if best_key is None or key < best_key:
            best, best_key = req, key
    return best


SCHEDULERS = {"fcfs": schedule_fcfs, "frfcfs": schedule_frfcfs}


def build_request_batch(req: MemRequest, bank_states: dict, cfg: DramConfig,
                        amap: AddressMap, start_ps: int,
                        trcd_override_ps=None) -> CommandBatch:
    """Minimal legal command sequence serving one read/write/flush request:
    precharge on a row conflict, activate if closed, then one column command
    per cache line. Offsets follow the earliest legal issue chain from
    start_ps. A tRCD override shifts the first column access earlier and
    keeps the batch legal by declaration."""
    lines = max(1, req.size_bytes // cfg.cache_line_bytes)
    first = amap.map_addr(req.phys_addr)
    state = bank_states[first.bank_key()]
    builder = BatchBuilder()
    cursor = start_ps

    def put(cmd):
        nonlocal cursor, state
        t = earliest_legal_issue(state, cmd, cfg, cursor)
        if builder._entries and t <= builder._entries[-1][1] + start_ps:
            t = builder._entries[-1][1] + start_ps + 1
        builder._entries.append((cmd, t - start_ps))
        state = apply_command(state, cmd, t, cfg)
        cursor = t

    if state.open_row is not None and state.open_row != first.row:
        put(DramCommand(CommandKind.PRE, DramAddress(first.bank_group, first.bank,
                                                     state.open_row)))
    opened_now = False
    if state.open_row is None:
        put(DramCommand(CommandKind.ACT, DramAddress(first.bank_group, first.bank,
                                                     first.row)))
        opened_now = True

    col_kind = CommandKind.RD if req.kind in (RequestKind.READ, RequestKind.PROFILING) \
        else CommandKind.WR
    for i in range(lines):
        addr = amap.map_addr(req.phys_addr + i * cfg.cache_line_bytes)
        if addr.bank_key() != first.bank_key() or addr.row != first.row:
            raise OutOfRange("request crosses a row boundary")
        payload = None
        override = None
        if col_kind is CommandKind.WR:
            off = i * cfg.cache_line_bytes
            payload = req.payload[off:off + cfg.cache_line_bytes]
        elif opened_now and i == 0 and trcd_override_ps is not None \
                and trcd_override_ps < cfg.timing["tRCD"]:
            override = trcd_override_ps
        put(DramCommand(col_kind, addr, override_trcd_ps=override, payload=payload))
    return builder.build(strict=True)


class Phase(Enum):
    IDLE = "idle"
    TRANSFER = "transfer"
    SCHEDULE = "schedule"
    STAGE = "stage"
    EXECUTE = "execute"
    RESPOND = "respond"


@dataclass
class ServiceJob:
    """Bookkeeping for the request currently being served."""

    request: MemRequest
    substrate_spent: int = 0
    device_charge_ps: int = 0
    batches: list = field(default_factory=list)     # staged, not yet executed
    readback: list = field(default_factory=list)
    status: ResponseStatus = ResponseStatus.OK
    data: Optional[bytes] = None
    fallback_ranges: tuple = ()


class SoftwareController:
    """Phase machine implementing the canonical serve loop: detect requests,
    enter critical mode, transfer to the table, schedule, stage, execute,
    account, respond, and exit critical mode once drained."""

    def __init__(self, sim):
        self.sim = sim
        self.table = RequestTable()
        self.phase = Phase.IDLE
        self.busy_until_g = 0
        self.job: Optional[ServiceJob] = None
        self._transfer_pending = []

    # -- helpers -----------------------------------------------------------

    def busy(self, substrate_cycles: int):
        self.busy_until_g = self.sim.ts.global_counter + substrate_cycles

    def charge(self, substrate_cycles: int):
        if self.job is not None:
            self.job.substrate_spent += substrate_cycles
        self.busy(substrate_cycles)

    def set_scheduling_state(self, flag: bool):
        """Critical mode register."""
        if flag:
            enter_critical(self.sim.ts)
        else:
            exit_critical(self.sim.ts, unresolved=self.unresolved_count())

    def unresolved_count(self) -> int:
        return (len(self.sim.hw_req_fifo) + len(self.table)
                + len(self.sim.hw_resp_buffer)
                + (1 if self.job is not None else 0))

    # -- phase machine ------------------------------------------------------

    def poll(self) -> bool:
        """Run the next controller action if one is due. Returns True when
        any state changed (the caller then re-polls before advancing time)."""
        sim = self.sim
        ts = sim.ts
        if ts.global_counter < self.busy_until_g:
            return False

        if self.phase is Phase.IDLE:
            return self._poll_idle()
        if self.phase is Phase.TRANSFER:
            for req in self._transfer_pending:
                self.table.add_request(req)
            self._transfer_pending = []
            self.phase = Phase.IDLE
            return True
        if self.phase is Phase.SCHEDULE:
            return self._do_schedule()
        if self.phase is Phase.STAGE:
            self.phase = Phase.EXECUTE
            self._do_execute()
            return True
        if self.phase is Phase.EXECUTE:
            self.phase = Phase.RESPOND
            self.charge(sim.costs.response_writeback)
            return True
        if self.phase is Phase.RESPOND:
            return self._finish_job()
        raise ProtocolError(f"unknown phase {self.phase}")  # pragma: no cover

    def _poll_idle(self) -> bool:
        sim = self.sim
        ts = sim.ts
        fifo = sim.hw_req_fifo
        if not ts.critical_mode:
            if len(fifo) == 0:
                return False
            self.set_scheduling_state(True)
            return True
        # Critical housekeeping. New requests move to the table only once the
        # processor has caught up, so every request the processors created is
        # visible before the next scheduling decision.
        if len(fifo) and ts.proc_counter == ts.mc_counter:
            reqs = []
            while len(fifo):
                reqs.append(fifo.pop())
            self._transfer_pending = reqs
            self.phase = Phase.TRANSFER
            self.busy(sim.costs.request_transfer * len(reqs))
            return True
        if len(self.table):
            sim.run_due_refresh()
            self.job = None
            self.phase = Phase.SCHEDULE
            self.busy(sim.costs.scheduling)
            return True
        if len(sim.hw_resp_buffer) or len(fifo):
            return False        # waiting for releases or processor catch-up
        self.set_scheduling_state(False)
        return True

    def _do_schedule(self) -> bool:
        sim = self.sim
        req = sim.scheduler(self.table, sim.engine.bank_states, sim.addr_map)
        if req is None:
            self.phase = Phase.IDLE
            return True
        self.table.remove(req)
        self.job = ServiceJob(request=req)
        self.job.substrate_spent += sim.costs.scheduling
        sim.technique_service(self.job)
        self.phase = Phase.STAGE
        staged = sum(len(b.entries) for b in self.job.batches)
        self.charge(sim.costs.stage_per_command * staged)
        return True

    def _do_execute(self):
        """Flush the staged batches in order, anchored at the later of the
        device-time cursor and the current emulated instant."""
        sim = self.sim
        job = self.job
        anchor = sim.emulated_now_ps()
        start = max(sim.engine.device_now_ps, anchor)
        wait_ps = 0
        for batch in job.batches:
            start = max(sim.engine.device_now_ps, start)
            result = sim.engine.flush(batch, start_ps=start)
            job.readback.extend(result.readback)
            wait_ps += result.elapsed_ps
        if job.batches:
            # Processor-visible DRAM duration: from the scheduling instant to
            # completion, including any wait behind in-flight device work.
            job.device_charge_ps = max(0, sim.engine.device_now_ps - anchor)
        self.busy(sim.substrate_wait_cycles(wait_ps))

    def _finish_job(self) -> bool:
        sim = self.sim
        if not sim.post_response(self.job):
            return False        # response buffer full; retry after releases
        self.job = None
        self.phase = Phase.IDLE
        return True
