"""Deterministic simulator of a software-memory-controller DRAM evaluation
platform with time-scaled multi-domain emulation."""

from .config import ExperimentConfig, WorkloadSpec, load_config
from .controller import AddressMap, CostTable, FifoBuffer, MemRequest, \
    MemResponse, RequestKind, RequestTable, ResponseStatus, \
    schedule_fcfs, schedule_frfcfs
from .device import AccessOutcome, ChipProfile, CloneOutcome, RowData, \
    access_outcome, generate_profile, rowclone_outcome
from .engine import BatchBuilder, CommandBatch, CommandEngine, ExecutionResult
from .errors import DramScaleError
from .frontend import Core, CoreConfig, TraceOp, Workload, gen_copy, gen_init, \
    gen_latency_chase, load_trace
from .harness import RunReport, Simulation, compare, run, sweep
from .rowclone import RowAllocator, RowClonePlan, execute_plan, plan_bulk_copy, \
    plan_bulk_init, verify_clonable
from .timescale import DomainConfig, SchedLatencyModel, TimeScaleState
from .timing import BankState, CommandKind, DramAddress, DramCommand, \
    DramConfig, Violation, apply_command, check_batch_legality, \
    earliest_legal_issue
from .trcd import RowTrcdTable, TrcdTechnique, WeakRowFilter, build_weak_filter, \
    profile_chip, trcd_for_row

__version__ = "0.1.0"
