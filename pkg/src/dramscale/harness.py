"""Experiment orchestration: builds a full simulation from a configuration,
runs it to trace completion, and emits deterministic reports.

Three run modes share one engine. `timescaled` emulates a fast target on a
slow substrate using the counter protocol. `reference` models the idealized
target system directly: substrate costs are bypassed and the controller
latency is the fixed hardware value, which by construction produces the same
emulated timeline as a time-scaled run with the same fixed latency.
`notimescale` models the raw platform: the processor runs at the substrate
clock and the software controller's measured cycles show up in full.
"""

from __future__ import annotations

import json
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .config import ExperimentConfig, WorkloadSpec
from .controller import AddressMap, FifoBuffer, MemRequest, MemResponse, \
    RequestKind, ResponseStatus, SCHEDULERS, SoftwareController, build_request_batch
from .device import RowData, generate_profile, garbage_bytes
from .engine import BatchBuilder, CommandEngine
from .errors import ConfigError, ProtocolError
from .frontend import Core, OpKind, Workload, gen_copy, gen_init, \
    gen_latency_chase, load_trace
from .rowclone import rowclone_batch
from .timescale import TimeScaleState, account_mc_work, advance, \
    proc_can_advance, tag_request
from .timing import CommandKind, DramAddress, DramCommand, apply_command, \
    earliest_legal_issue
from .trcd import RowTrcdTable, TrcdTechnique, build_weak_filter
from .util import ceil_div, cycles_for_ps, ps_for_cycles

SCHEMA_VERSION = 1


def build_workload(exp: ExperimentConfig) -> Workload:
    spec = exp.workload
    cfg = exp.dram
    stripe = cfg.row_size_bytes * cfg.banks_total
    src_base = spec.src_base if spec.src_base is not None else \
        (cfg.capacity_bytes // 8 // stripe) * stripe
    dst_base = spec.dst_base if spec.dst_base is not None else \
        src_base + 4 * stripe
    chase_base = spec.chase_base if spec.chase_base is not None else \
        (cfg.capacity_bytes // 2 // stripe) * stripe
    if spec.kind == "none":
        return Workload([], name="empty")
    if spec.kind == "copy":
        return gen_copy(spec.n_bytes, spec.variant, spec.setting,
                        src_base, dst_base, cfg.cache_line_bytes)
    if spec.kind == "init":
        return gen_init(spec.n_bytes, spec.pattern, spec.variant, spec.setting,
                        dst_base, cfg.cache_line_bytes)
    if spec.kind == "chase":
        return gen_latency_chase(spec.working_set, spec.stride, chase_base,
                                 seed=exp.seed, passes=spec.passes,
                                 line_bytes=cfg.cache_line_bytes)
    if spec.kind == "trace":
        if not spec.trace_path:
            raise ConfigError("workload kind 'trace' needs a trace path")
        with open(spec.trace_path) as fp:
            return load_trace(fp, name=spec.trace_path)
    raise ConfigError(f"unknown workload kind {spec.kind!r}")


@dataclass
class SimStats:
    requests: int = 0
    responses: int = 0
    latency_sum: int = 0
    latency_max: int = 0
    latency_hist: Counter = field(default_factory=Counter)
    request_log: list = field(default_factory=list)
    rowclone_ops: int = 0
    rowclone_fallback_rows: int = 0
    profiling_pass: int = 0
    profiling_fail: int = 0


class _BatchChain:
    """Forward-simulated bank states used to stage several batches whose
    offsets must match the state the engine will see when each one flushes."""

    def __init__(self, sim):
        self.cfg = sim.cfg
        self.states = dict(sim.engine.bank_states)
        self.now = max(sim.engine.device_now_ps, sim.emulated_now_ps())

    def push(self, batch):
        from .engine import completion_latency_ps
        for cmd, offset in batch.entries:
            t = self.now + offset
            keys = list(self.states) if cmd.kind is CommandKind.REF \
                else [cmd.addr.bank_key()]
            for key in keys:
                self.states[key] = apply_command(self.states[key], cmd, t, self.cfg)
        last_cmd, last_offset = batch.entries[-1]
        self.now += last_offset + completion_latency_ps(last_cmd.kind, self.cfg)


class Simulation:
    """One deterministic run: cores, controller, engine, and the time-scaling
    counters advanced by an event-driven loop equivalent to per-tick stepping."""

    def __init__(self, exp: ExperimentConfig, workload: Optional[Workload] = None):
        self.exp = exp
        self.cfg = exp.dram
        self.domains, self.costs, self.model = exp.resolved()
        self.bypass_substrate = exp.mode == "reference"
        profile_seed = exp.profile_seed if exp.profile_seed is not None else exp.seed
        self.profile = generate_profile(self.cfg, exp.strong_fraction,
                                        exp.clonable_success_rate, profile_seed,
                                        exp.subarray_rows)
        self.rowdata = RowData(self.cfg, seed=exp.seed)
        self.engine = CommandEngine(self.cfg, self.rowdata, self.profile)
        self.addr_map = AddressMap(self.cfg, exp.address_map)
        self.scheduler = SCHEDULERS[exp.scheduler]
        self.ts = TimeScaleState()
        self.hw_req_fifo = FifoBuffer(exp.req_fifo_depth)
        self.hw_resp_buffer = FifoBuffer(exp.resp_fifo_depth)
        self.controller = SoftwareController(self)
        self.stats = SimStats()
        self.pending = {}
        self._next_rid = 0
        self.next_ref_deadline_ps = self.cfg.timing["tREFI"]
        self.refresh_enabled = exp.refresh_enabled
        self.counter_trace = []     # (global, proc, mc, critical) per advance
        self.trcd_tech = None
        if exp.trcd_enabled:
            table = RowTrcdTable(self.profile, self.cfg.lines_per_row)
            filt = build_weak_filter(table, m_bits=exp.filter_bits,
                                     k=exp.filter_hashes, seed=profile_seed)
            self.trcd_tech = TrcdTechnique(
                filter=filt, table=table, reduced_ps=exp.trcd_reduced_ps,
                nominal_ps=self.cfg.timing["tRCD"])
        work = workload if workload is not None else build_workload(exp)
        self.workload = work
        self.cores = [Core(exp.core, work, core_id=i) for i in range(exp.cores)]

    # -- time bookkeeping ----------------------------------------------------

    def emulated_now_ps(self) -> int:
        return ps_for_cycles(self.ts.mc_counter, self.domains.target_freq_hz)

    def substrate_wait_cycles(self, device_ps: int) -> int:
        if self.bypass_substrate:
            return 0
        return cycles_for_ps(device_ps, self.domains.substrate_freq_hz)

    def _unresolved(self) -> int:
        return self.controller.unresolved_count()

    # -- request creation (core side) ------------------------------------------

    def _new_rid(self) -> int:
        rid = self._next_rid
        self._next_rid += 1
        return rid

    def make_read_request(self, core: Core, addr: int, op, store: bool) -> MemRequest:
        rid = self._new_rid()
        req = MemRequest(rid, RequestKind.READ, addr, self.cfg.cache_line_bytes,
                         core_id=core.core_id)
        wait = op.serialize or core.cfg.miss_limit <= 1 \
            or len(core.outstanding) + 1 >= core.cfg.miss_limit
        self.pending[rid] = {"core": core, "kind": "fill", "addr": addr,
                             "op": op, "store": store, "wait": wait}
        return req

    def make_flush_request(self, core: Core, addr: int, data: bytes) -> MemRequest:
        rid = self._new_rid()
        req = MemRequest(rid, RequestKind.FLUSH, addr, len(data), payload=data,
                         core_id=core.core_id)
        self.pending[rid] = {"core": core, "kind": "posted", "wait": False}
        return req

    def make_bulk_request(self, core: Core, op) -> MemRequest:
        rid = self._new_rid()
        if op.kind is OpKind.RCCOPY:
            req = MemRequest(rid, RequestKind.ROWCLONE_COPY, op.addr, op.size,
                             src_addr=op.src, core_id=core.core_id)
        else:
            req = MemRequest(rid, RequestKind.ROWCLONE_INIT, op.addr, op.size,
                             pattern=op.pattern, core_id=core.core_id)
        self.pending[rid] = {"core": core, "kind": "bulk", "op": op, "wait": True}
        return req

    def make_profiling_request(self, core: Core, addr: int, trcd_ps: int) -> MemRequest:
        rid = self._new_rid()
        req = MemRequest(rid, RequestKind.PROFILING, addr,
                         self.cfg.cache_line_bytes, profiling_trcd_ps=trcd_ps,
                         core_id=core.core_id)
        self.pending[rid] = {"core": core, "kind": "bulk", "op": None, "wait": True}
        return req

    def try_issue(self, core: Core, req: MemRequest, now: int) -> bool:
        if self.hw_req_fifo.full():
            return False
        tag_request(self.ts, req)
        self.hw_req_fifo.push(req)
        info = self.pending[req.id]
        core.outstanding.add(req.id)
        if info["wait"]:
            core.wait_id = req.id
        self.stats.requests += 1
        return True

    def post_writeback(self, core: Core, addr: int, data: bytes, now: int):
        rid = self._new_rid()
        req = MemRequest(rid, RequestKind.WRITE, addr, len(data), payload=data,
                         core_id=core.core_id)
        self.pending[rid] = {"core": core, "kind": "posted", "wait": False}
        core.to_issue.append(req)

    # -- controller callbacks ----------------------------------------------------

    def technique_service(self, job):
        """Turn the scheduled request into staged command batches."""
        req = job.request
        chain = _BatchChain(self)
        if req.kind in (RequestKind.READ, RequestKind.WRITE, RequestKind.FLUSH):
            override = None
            if req.kind is RequestKind.READ and self.trcd_tech is not None:
                first = self.addr_map.map_addr(req.phys_addr)
                state = chain.states[first.bank_key()]
                if state.open_row != first.row:
                    override = self.trcd_tech.override_for(
                        first.bank_group, first.bank, first.row)
            batch = build_request_batch(req, chain.states, self.cfg,
                                        self.addr_map, chain.now, override)
            chain.push(batch)
            job.batches.append(batch)
            return
        if req.kind is RequestKind.PROFILING:
            self._stage_profiling(job, chain)
            return
        if req.kind in (RequestKind.ROWCLONE_COPY, RequestKind.ROWCLONE_INIT):
            self._stage_rowclone(job, chain)
            return
        raise ProtocolError(f"unhandled request kind {req.kind}")

    def _stage_profiling(self, job, chain):
        from types import SimpleNamespace
        from .trcd import _profiling_batches
        req = job.request
        addr = self.addr_map.map_addr(req.phys_addr)
        pattern = bytes([(0xA5 + addr.column) & 0xFF]) * self.cfg.cache_line_bytes
        job.expected_pattern = pattern
        view = SimpleNamespace(cfg=self.cfg, bank_states=chain.states,
                               device_now_ps=chain.now)
        for batch in _profiling_batches(view, addr, pattern,
                                        req.profiling_trcd_ps):
            chain.push(batch)
            job.batches.append(batch)

    def _stage_rowclone(self, job, chain):
        req = job.request
        cfg = self.cfg
        row_bytes = cfg.row_size_bytes
        rows = ceil_div(req.size_bytes, row_bytes)
        pairs = []
        fallbacks = []
        init_sources = {}
        for i in range(rows):
            nbytes = min(row_bytes, req.size_bytes - i * row_bytes)
            dst_phys = req.phys_addr + i * row_bytes
            if not self.exp.rowclone_enabled:
                src_phys = req.src_addr + i * row_bytes \
                    if req.kind is RequestKind.ROWCLONE_COPY else 0
                fallbacks.append((src_phys, dst_phys, nbytes))
                continue
            dst = self.addr_map.map_addr(dst_phys)
            if req.kind is RequestKind.ROWCLONE_COPY:
                src_phys = req.src_addr + i * row_bytes
                src = self.addr_map.map_addr(src_phys)
                ok = (src.column == 0 and dst.column == 0
                      and src.bank_key() == dst.bank_key()
                      and self.profile.subarray_of(src.row)
                      == self.profile.subarray_of(dst.row)
                      and self.profile.clonable(src.bank_group, src.bank,
                                                src.row, dst.row))
                if ok:
                    pairs.append((src.bank_key(), src.row, dst.row))
                else:
                    fallbacks.append((src_phys, dst_phys, nbytes))
            else:
                key = (dst.bank_key(), self.profile.subarray_of(dst.row))
                if key not in init_sources:
                    source_row = self._init_source_row(dst, req.pattern)
                    init_sources[key] = source_row
                    if source_row is not None:
                        self._stage_pattern_row(job, chain, dst.bank_key(),
                                                source_row, req.pattern)
                source_row = init_sources[key]
                ok = (dst.column == 0 and source_row is not None
                      and self.profile.clonable(dst.bank_group, dst.bank,
                                                source_row, dst.row))
                if ok:
                    pairs.append((dst.bank_key(), source_row, dst.row))
                else:
                    fallbacks.append((0, dst_phys, nbytes))
        for bank_key, src_row, dst_row in pairs:
            batch = rowclone_batch(bank_key, src_row, dst_row, cfg, chain.states,
                                   chain.now, self.exp.rowclone_t1_ps,
                                   self.exp.rowclone_t2_ps)
            chain.push(batch)
            job.batches.append(batch)
        self.stats.rowclone_ops += len(pairs)
        self.stats.rowclone_fallback_rows += len(fallbacks)
        job.fallback_ranges = tuple(fallbacks)

    def _init_source_row(self, dst: DramAddress, pattern: int) -> Optional[int]:
        """A free row in the destination's subarray to hold the init pattern:
        the first row of the subarray not overlapping the request."""
        sub = self.profile.subarray_of(dst.row)
        begin = sub * self.profile.subarray_rows
        end = min(begin + self.profile.subarray_rows, self.cfg.rows_per_bank)
        for row in range(begin, end):
            if row != dst.row and self.profile.clonable(dst.bank_group, dst.bank,
                                                        row, dst.row):
                return row
        for row in range(begin, end):
            if row != dst.row:
                return row
        return None

    def _stage_pattern_row(self, job, chain, bank_key, row, pattern):
        cfg = self.cfg
        fill = bytes([pattern & 0xFF]) * cfg.cache_line_bytes
        bg, bank = bank_key
        state = chain.states[bank_key]
        builder = BatchBuilder()
        start = chain.now
        cursor = start
        cmds = []
        if state.open_row is not None and state.open_row != row:
            cmds.append(DramCommand(CommandKind.PRE,
                                    DramAddress(bg, bank, state.open_row)))
        if state.open_row is None or state.open_row != row:
            cmds.append(DramCommand(CommandKind.ACT, DramAddress(bg, bank, row)))
        for col in range(cfg.columns_per_row):
            cmds.append(DramCommand(CommandKind.WR,
                                    DramAddress(bg, bank, row, col), payload=fill))
        for cmd in cmds:
            t = earliest_legal_issue(state, cmd, cfg, cursor)
            if builder._entries and t <= builder._entries[-1][1] + start:
                t = builder._entries[-1][1] + start + 1
            builder._entries.append((cmd, t - start))
            state = apply_command(state, cmd, t, cfg)
            cursor = t
        batch = builder.build(strict=True)
        chain.push(batch)
        job.batches.append(batch)

    def post_response(self, job) -> bool:
        """Account the served request into emulated time, tag the response
        with its release cycle, and write it to the hardware buffer."""
        req = job.request
        if not getattr(job, "accounted", False):
            account_mc_work(self.ts, job.device_charge_ps, job.substrate_spent,
                            self.domains, self.model)
            job.release_at = self.ts.mc_counter
            job.accounted = True
        if self.hw_resp_buffer.full():
            return False
        status = ResponseStatus.OK
        data = None
        if req.kind is RequestKind.READ:
            data = b"".join(job.readback)
        elif req.kind is RequestKind.PROFILING:
            ok = job.readback and job.readback[-1] == job.expected_pattern
            status = ResponseStatus.PROFILING_PASS if ok \
                else ResponseStatus.PROFILING_FAIL
            if ok:
                self.stats.profiling_pass += 1
            else:
                self.stats.profiling_fail += 1
        elif req.kind in (RequestKind.ROWCLONE_COPY, RequestKind.ROWCLONE_INIT):
            if job.fallback_ranges:
                status = ResponseStatus.FALLBACK_USED
        resp = MemResponse(req.id, status, data=data, release_at=job.release_at,
                           fallback_ranges=job.fallback_ranges)
        self.hw_resp_buffer.push(resp)
        latency = job.release_at - req.tag_cycle
        self.stats.responses += 1
        self.stats.latency_sum += latency
        self.stats.latency_max = max(self.stats.latency_max, latency)
        self.stats.latency_hist[latency] += 1
        if self.exp.log_requests:
            self.stats.request_log.append((req.id, req.tag_cycle, job.release_at))
        return True

    # -- refresh ---------------------------------------------------------------

    def run_due_refresh(self) -> bool:
        """Issue every overdue all-bank refresh. The refresh occupies the
        device timeline (delaying later batches) but charges nothing to the
        controller counter directly."""
        if not self.refresh_enabled:
            return False
        progressed = False
        while self.emulated_now_ps() >= self.next_ref_deadline_ps:
            start = max(self.engine.device_now_ps, self.next_ref_deadline_ps)
            builder = BatchBuilder()
            states = dict(self.engine.bank_states)
            cursor = start
            for key in sorted(states):
                state = states[key]
                if state.open_row is not None:
                    cmd = DramCommand(CommandKind.PRE,
                                      DramAddress(key[0], key[1], state.open_row))
                    t = earliest_legal_issue(state, cmd, self.cfg, cursor)
                    if builder._entries and t <= builder._entries[-1][1] + start:
                        t = builder._entries[-1][1] + start + 1
                    builder._entries.append((cmd, t - start))
                    states[key] = apply_command(state, cmd, t, self.cfg)
                    cursor = t
            ref = DramCommand(CommandKind.REF)
            t_ref = cursor
            for key, state in states.items():
                t_ref = max(t_ref, earliest_legal_issue(state, ref, self.cfg, cursor))
            if builder._entries and t_ref <= builder._entries[-1][1] + start:
                t_ref = builder._entries[-1][1] + start + 1
            builder._entries.append((ref, t_ref - start))
            self.engine.flush(builder.build(strict=True), start_ps=start)
            self.next_ref_deadline_ps += self.cfg.timing["tREFI"]
            progressed = True
        return progressed

    def _refresh_distance_cycles(self) -> Optional[int]:
        if not self.refresh_enabled:
            return None
        f = self.domains.target_freq_hz
        needed = ceil_div(self.next_ref_deadline_ps * f, 10**12)
        d = needed - self.ts.mc_counter
        return max(1, d) if d > 0 else 1

    # -- main loop ----------------------------------------------------------------

    def _deliver_releases(self) -> bool:
        progressed = False
        while len(self.hw_resp_buffer):
            resp = self.hw_resp_buffer.peek()
            if self.ts.proc_counter < resp.release_at:
                break
            self.hw_resp_buffer.pop()
            info = self.pending.pop(resp.request_id)
            info["core"].complete(self, resp, info, self.ts.proc_counter)
            progressed = True
        return progressed

    def _run_cores(self) -> bool:
        progressed = False
        for core in self.cores:
            while core.step(self, self.ts.proc_counter):
                progressed = True
        return progressed

    def _done(self) -> bool:
        return (all(core.finished for core in self.cores)
                and self._unresolved() == 0
                and not self.ts.critical_mode)

    def _next_delta(self) -> Optional[int]:
        ts = self.ts
        candidates = []
        if self.controller.busy_until_g > ts.global_counter:
            candidates.append(self.controller.busy_until_g - ts.global_counter)
        unresolved = self._unresolved() > 0
        if proc_can_advance(ts, unresolved):
            horizon = []
            for core in self.cores:
                r = core.runnable_at()
                if r is not None and r > ts.proc_counter:
                    horizon.append(r - ts.proc_counter)
            for resp in self.hw_resp_buffer:
                if resp.release_at > ts.proc_counter:
                    horizon.append(resp.release_at - ts.proc_counter)
            if ts.proc_counter < ts.mc_counter:
                horizon.append(ts.mc_counter - ts.proc_counter)
            elif not unresolved and not ts.critical_mode:
                d = self._refresh_distance_cycles()
                if d is not None:
                    horizon.append(d)
            if horizon:
                candidates.append(min(horizon))
        if not candidates:
            return None
        return max(1, min(candidates))

    def _step(self):
        progressed = True
        while progressed:
            progressed = False
            if (self.refresh_enabled and self.controller.job is None
                    and self.controller.phase.value == "idle"
                    and self.ts.global_counter >= self.controller.busy_until_g):
                progressed |= self.run_due_refresh()
            progressed |= self.controller.poll()
            progressed |= self._deliver_releases()
            progressed |= self._run_cores()
        if self._done():
            return False
        delta = self._next_delta()
        if delta is None:
            if self._done():
                return False
            raise ProtocolError("simulation stalled with pending work")
        unresolved = self._unresolved() > 0
        advance(self.ts, delta, unresolved)
        self.ts.proc_gated = unresolved
        if self.exp.log_counters:
            self.counter_trace.append((self.ts.global_counter,
                                       self.ts.proc_counter,
                                       self.ts.mc_counter,
                                       int(self.ts.critical_mode)))
        return True

    def run(self) -> "RunReport":
        started = time.monotonic()
        while not self._done():
            if not self._step():
                break
        wall = time.monotonic() - started
        return self._report(wall)

    def serve_loop_iteration(self):
        """Drive the simulation until the controller posts one response (or
        nothing remains to do): one full pass of the canonical serve loop."""
        before = self.stats.responses
        while not self._done() and self.stats.responses == before:
            if not self._step():
                break
        return self

    # -- reporting -------------------------------------------------------------

    def _report(self, wall_seconds: float) -> "RunReport":
        stats = self.stats
        core = self.cores[0]
        measured_loads = core.measured_loads
        avg_load = (core.measured_cycles / measured_loads) if measured_loads else 0.0
        technique = {
            "rowclone_ops": stats.rowclone_ops,
            "rowclone_fallback_rows": stats.rowclone_fallback_rows,
            "rowclone_success": self.engine.stats.rowclone_success,
            "rowclone_fail": self.engine.stats.rowclone_fail,
            "reduced_trcd_reads": len(self.engine.stats.reduced_reads),
            "profiling_pass": stats.profiling_pass,
            "profiling_fail": stats.profiling_fail,
        }
        if self.trcd_tech is not None:
            technique.update({
                "trcd_reduced_grants": self.trcd_tech.reduced_grants,
                "trcd_nominal_holds": self.trcd_tech.nominal_holds,
                "trcd_filter_false_positives": self.trcd_tech.false_positives,
            })
        mean_latency = (stats.latency_sum / stats.responses) if stats.responses else 0.0
        return RunReport(
            mode=self.exp.mode,
            seed=self.exp.seed,
            config_digest=self.exp.digest(),
            workload=self.workload.name,
            emulated_cycles=self.ts.proc_counter,
            global_cycles=self.ts.global_counter,
            requests=stats.responses,
            mean_latency_cycles=mean_latency,
            max_latency_cycles=stats.latency_max,
            latency_histogram={str(k): v for k, v in
                               sorted(stats.latency_hist.items())},
            commands=dict(sorted(self.engine.stats.command_counts.items())),
            loads_total=core.loads,
            measured_loads=measured_loads,
            measured_cycles=core.measured_cycles,
            avg_cycles_per_load=avg_load,
            technique=technique,
            request_log=list(stats.request_log),
            wall_seconds=wall_seconds,
        )


@dataclass
class RunReport:
    mode: str
    seed: int
    config_digest: str
    workload: str
    emulated_cycles: int
    global_cycles: int
    requests: int
    mean_latency_cycles: float
    max_latency_cycles: int
    latency_histogram: dict
    commands: dict
    loads_total: int
    measured_loads: int
    measured_cycles: int
    avg_cycles_per_load: float
    technique: dict
    request_log: list
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        """Deterministic payload: wall-clock time is excluded so identical
        (config, seed) runs serialize byte-identically."""
        d = {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "workload": self.workload,
            "emulated_cycles": self.emulated_cycles,
            "global_cycles": self.global_cycles,
            "requests": self.requests,
            "mean_latency_cycles": self.mean_latency_cycles,
            "max_latency_cycles": self.max_latency_cycles,
            "latency_histogram": self.latency_histogram,
            "commands": self.commands,
            "loads_total": self.loads_total,
            "measured_loads": self.measured_loads,
            "measured_cycles": self.measured_cycles,
            "avg_cycles_per_load": self.avg_cycles_per_load,
            "technique": self.technique,
        }
        if self.request_log:
            d["request_log"] = [list(entry) for entry in self.request_log]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def text_summary(self) -> str:
        lines = [
            f"mode            : {self.mode}",
            f"workload        : {self.workload}",
            f"seed            : {self.seed}",
            f"emulated cycles : {self.emulated_cycles}",
            f"requests        : {self.requests}",
            f"mean latency    : {self.mean_latency_cycles:.2f} cycles",
            f"max latency     : {self.max_latency_cycles} cycles",
            f"avg cycles/load : {self.avg_cycles_per_load:.2f} "
            f"({self.measured_loads} measured loads)",
            f"commands        : {self.commands}",
            f"technique       : {self.technique}",
            f"wall time       : {self.wall_seconds:.3f} s",
        ]
        return "\n".join(lines) + "\n"


def run(exp: ExperimentConfig, workload: Optional[Workload] = None) -> RunReport:
    return Simulation(exp, workload).run()


def compare(report_a, report_b) -> dict:
    """Percentage deltas of emulated execution time and mean memory latency,
    b relative to a."""
    a = report_a.to_dict() if isinstance(report_a, RunReport) else report_a
    b = report_b.to_dict() if isinstance(report_b, RunReport) else report_b

    def delta(key):
        base = a[key]
        if not base:
            return 0.0 if not b[key] else float("inf")
        return (b[key] - base) / base * 100.0

    return {
        "exec_time_delta_pct": delta("emulated_cycles"),
        "mean_latency_delta_pct": delta("mean_latency_cycles"),
        "a": {"workload": a["workload"], "emulated_cycles": a["emulated_cycles"]},
        "b": {"workload": b["workload"], "emulated_cycles": b["emulated_cycles"]},
    }


def sweep(base: ExperimentConfig, workload_specs: list) -> list:
    """Run a list of (name, WorkloadSpec or ExperimentConfig) entries and
    compute speedups against entries named by each spec's baseline field."""
    from dataclasses import replace as dc_replace
    reports = {}
    rows = []
    for name, item in workload_specs:
        if isinstance(item, ExperimentConfig):
            exp = item
        elif isinstance(item, WorkloadSpec):
            exp = dc_replace(base, workload=item)
        else:
            raise ConfigError(f"unsupported sweep entry for {name!r}")
        reports[name] = run(exp)
    for name, item in workload_specs:
        report = reports[name]
        row = {
            "name": name,
            "emulated_cycles": report.emulated_cycles,
            "mean_latency_cycles": report.mean_latency_cycles,
            "avg_cycles_per_load": report.avg_cycles_per_load,
        }
        baseline = getattr(item, "workload", item).baseline \
            if not isinstance(item, WorkloadSpec) else item.baseline
        if baseline:
            if baseline not in reports:
                raise ConfigError(f"baseline {baseline!r} for {name!r} not in sweep")
            row["speedup"] = reports[baseline].emulated_cycles / \
                max(1, report.emulated_cycles)
        rows.append(row)
    return rows


def counter_trace_csv(trace: list) -> str:
    """Debug log of the three counters: `global proc mc critical` rows."""
    lines = ["global,proc,mc,critical"]
    lines.extend(f"{g},{p},{m},{c}" for g, p, m, c in trace)
    return "\n".join(lines) + "\n"


def sweep_csv(rows: list) -> str:
    header = ["name", "emulated_cycles", "mean_latency_cycles",
              "avg_cycles_per_load", "speedup"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(row.get(k, "")) for k in header))
    return "\n".join(lines) + "\n"
