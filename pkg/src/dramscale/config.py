"""Experiment configuration: dataclass plus a flat INI-style file format.

Every knob has a default matching the evaluated platform: DDR4-1333 with
4 bank groups x 4 banks x 32K rows, a 100 MHz substrate emulating a 1 GHz
target, FR-FCFS scheduling, and Cortex-A57-like cache sizes with a 512 KiB
last-level cache.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, asdict
from typing import Optional

from .controller import CostTable
from .errors import ConfigError
from .frontend import CoreConfig
from .timescale import DomainConfig, SchedLatencyModel
from .timing import DramConfig, TIMING_PARAMS, default_timing_ps, ns_to_ps

MODES = ("timescaled", "notimescale", "reference")


@dataclass
class WorkloadSpec:
    kind: str = "none"             # copy | init | chase | trace | none
    n_bytes: int = 65536
    variant: str = "cpu"           # cpu | rowclone
    setting: str = "noflush"       # noflush | clflush
    pattern: int = 0xAB
    working_set: int = 65536
    stride: int = 64
    passes: int = 2
    trace_path: Optional[str] = None
    src_base: Optional[int] = None
    dst_base: Optional[int] = None
    chase_base: Optional[int] = None
    name: str = ""
    baseline: Optional[str] = None


@dataclass
class ExperimentConfig:
    mode: str = "timescaled"
    seed: int = 1
    log_requests: bool = False
    log_counters: bool = False
    refresh_enabled: bool = True

    dram: DramConfig = field(default_factory=DramConfig)
    core: CoreConfig = field(default_factory=CoreConfig)
    costs: CostTable = field(default_factory=CostTable)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)

    strong_fraction: float = 0.845
    clonable_success_rate: float = 0.8
    subarray_rows: int = 512
    profile_seed: Optional[int] = None

    substrate_freq_hz: int = 100_000_000
    target_freq_hz: int = 1_000_000_000

    scheduler: str = "frfcfs"
    sched_model: str = "target-fixed"
    sched_cycles: int = 20
    req_fifo_depth: int = 16
    resp_fifo_depth: int = 16
    address_map: str = "row_bank_col"
    cores: int = 1

    rowclone_enabled: bool = False
    rowclone_t1_ps: int = ns_to_ps("3.0")
    rowclone_t2_ps: int = ns_to_ps("3.0")
    trcd_enabled: bool = False
    trcd_reduced_ps: int = ns_to_ps("9.0")
    filter_bits: Optional[int] = None
    filter_hashes: int = 4

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.scheduler not in ("fcfs", "frfcfs"):
            raise ConfigError(f"unknown scheduler {self.scheduler!r}")
        if self.cores < 1:
            raise ConfigError("need at least one core")

    def resolved(self):
        """(DomainConfig, CostTable, SchedLatencyModel) after applying mode
        semantics: reference runs at target frequency with substrate costs
        bypassed and a fixed hardware-controller latency; no-time-scaling
        runs the processor at the substrate clock and reports the software
        controller's own measured cycles."""
        if self.mode == "reference":
            domains = DomainConfig("system", self.target_freq_hz, self.target_freq_hz)
            return domains, self.costs.zeroed(), \
                SchedLatencyModel("target-fixed", self.sched_cycles)
        if self.mode == "notimescale":
            domains = DomainConfig("system", self.substrate_freq_hz,
                                   self.substrate_freq_hz)
            return domains, self.costs, SchedLatencyModel("substrate-measured")
        domains = DomainConfig("system", self.substrate_freq_hz, self.target_freq_hz)
        return domains, self.costs, SchedLatencyModel(self.sched_model,
                                                      self.sched_cycles)

    def canonical(self) -> dict:
        d = asdict(self)
        d["dram"]["timing"] = {k: v for k, v in sorted(self.dram.timing.items())}
        return d

    def digest(self) -> str:
        payload = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def _get(parser, section, key, conv, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        if conv is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def _int(raw: str) -> int:
    return int(raw, 0)


def load_config(path, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Read a flat key-value config file with sections over `base` defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file: {path}")
    return apply_parser(parser, base)


def apply_parser(parser, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    exp = base if base is not None else ExperimentConfig()

    timing = dict(exp.dram.timing)
    for param in TIMING_PARAMS:
        if parser.has_option("dram", param):
            timing[param] = ns_to_ps(parser.get("dram", param))
    dram_kwargs = dict(
        bank_groups=_get(parser, "dram", "bank_groups", _int, exp.dram.bank_groups),
        banks_per_group=_get(parser, "dram", "banks_per_group", _int,
                             exp.dram.banks_per_group),
        rows_per_bank=_get(parser, "dram", "rows_per_bank", _int,
                           exp.dram.rows_per_bank),
        columns_per_row=_get(parser, "dram", "columns_per_row", _int,
                             exp.dram.columns_per_row),
        row_size_bytes=_get(parser, "dram", "row_size_bytes", _int,
                            exp.dram.row_size_bytes),
        cache_line_bytes=_get(parser, "dram", "cache_line_bytes", _int,
                              exp.dram.cache_line_bytes),
        data_rate=_get(parser, "dram", "data_rate", _int, exp.dram.data_rate),
        timing=timing,
    )
    try:
        dram = DramConfig(**dram_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[dram] {exc}") from exc

    core = CoreConfig(
        l1_size=_get(parser, "core", "l1_size", _int, exp.core.l1_size),
        l1_ways=_get(parser, "core", "l1_ways", _int, exp.core.l1_ways),
        l2_size=_get(parser, "core", "l2_size", _int, exp.core.l2_size),
        l2_ways=_get(parser, "core", "l2_ways", _int, exp.core.l2_ways),
        line_bytes=dram.cache_line_bytes,
        l1_hit_cycles=_get(parser, "core", "l1_hit_cycles", _int,
                           exp.core.l1_hit_cycles),
        l2_hit_cycles=_get(parser, "core", "l2_hit_cycles", _int,
                           exp.core.l2_hit_cycles),
        miss_limit=_get(parser, "core", "miss_limit", _int, exp.core.miss_limit),
    )

    costs = CostTable(
        request_transfer=_get(parser, "smc", "cost_request_transfer", _int,
                              exp.costs.request_transfer),
        scheduling=_get(parser, "smc", "cost_scheduling", _int,
                        exp.costs.scheduling),
        stage_per_command=_get(parser, "smc", "cost_stage_per_command", _int,
                               exp.costs.stage_per_command),
        response_writeback=_get(parser, "smc", "cost_response_writeback", _int,
                                exp.costs.response_writeback),
    )

    workload = WorkloadSpec(
        kind=_get(parser, "workload", "kind", str, exp.workload.kind),
        n_bytes=_get(parser, "workload", "bytes", _int, exp.workload.n_bytes),
        variant=_get(parser, "workload", "variant", str, exp.workload.variant),
        setting=_get(parser, "workload", "setting", str, exp.workload.setting),
        pattern=_get(parser, "workload", "pattern", _int, exp.workload.pattern),
        working_set=_get(parser, "workload", "working_set", _int,
                         exp.workload.working_set),
        stride=_get(parser, "workload", "stride", _int, exp.workload.stride),
        passes=_get(parser, "workload", "passes", _int, exp.workload.passes),
        trace_path=_get(parser, "workload", "trace", str, exp.workload.trace_path),
        src_base=_get(parser, "workload", "src_base", _int, exp.workload.src_base),
        dst_base=_get(parser, "workload", "dst_base", _int, exp.workload.dst_base),
        chase_base=_get(parser, "workload", "base", _int, exp.workload.chase_base),
        name=_get(parser, "workload", "name", str, exp.workload.name),
        baseline=_get(parser, "workload", "baseline", str, exp.workload.baseline),
    )

    try:
        return ExperimentConfig(
            mode=_get(parser, "run", "mode", str, exp.mode),
            seed=_get(parser, "run", "seed", _int, exp.seed),
            log_requests=_get(parser, "run", "log_requests", bool, exp.log_requests),
            log_counters=_get(parser, "run", "log_counters", bool, exp.log_counters),
            refresh_enabled=_get(parser, "run", "refresh", bool, exp.refresh_enabled),
            dram=dram,
            core=core,
            costs=costs,
            workload=workload,
            strong_fraction=_get(parser, "device", "strong_fraction", float,
                                 exp.strong_fraction),
            clonable_success_rate=_get(parser, "device", "clonable_success_rate",
                                       float, exp.clonable_success_rate),
            subarray_rows=_get(parser, "device", "subarray_rows", _int,
                               exp.subarray_rows),
            profile_seed=_get(parser, "device", "profile_seed", _int,
                              exp.profile_seed),
            substrate_freq_hz=_get(parser, "domains", "substrate_freq_hz", _int,
                                   exp.substrate_freq_hz),
            target_freq_hz=_get(parser, "domains", "target_freq_hz", _int,
                                exp.target_freq_hz),
            scheduler=_get(parser, "smc", "scheduler", str, exp.scheduler),
            sched_model=_get(parser, "smc", "sched_latency_model", str,
                             exp.sched_model),
            sched_cycles=_get(parser, "smc", "sched_latency_cycles", _int,
                              exp.sched_cycles),
            req_fifo_depth=_get(parser, "smc", "req_fifo_depth", _int,
                                exp.req_fifo_depth),
            resp_fifo_depth=_get(parser, "smc", "resp_fifo_depth", _int,
                                 exp.resp_fifo_depth),
            address_map=_get(parser, "smc", "address_map", str, exp.address_map),
            cores=_get(parser, "core", "cores", _int, exp.cores),
            rowclone_enabled=_get(parser, "techniques", "rowclone", bool,
                                  exp.rowclone_enabled),
            rowclone_t1_ps=ns_to_ps(parser.get("techniques", "rowclone_t1_ns"))
            if parser.has_option("techniques", "rowclone_t1_ns") else exp.rowclone_t1_ps,
            rowclone_t2_ps=ns_to_ps(parser.get("techniques", "rowclone_t2_ns"))
            if parser.has_option("techniques", "rowclone_t2_ns") else exp.rowclone_t2_ps,
            trcd_enabled=_get(parser, "techniques", "trcd_reduction", bool,
                              exp.trcd_enabled),
            trcd_reduced_ps=ns_to_ps(parser.get("techniques", "trcd_reduced_ns"))
            if parser.has_option("techniques", "trcd_reduced_ns") else exp.trcd_reduced_ps,
            filter_bits=_get(parser, "techniques", "filter_bits", _int,
                             exp.filter_bits),
            filter_hashes=_get(parser, "techniques", "filter_hashes", _int,
                               exp.filter_hashes),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
