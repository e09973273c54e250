"""DDR4 geometry, timing parameters, and the per-bank command legality model.

All device-side time is kept as integer picoseconds (0.001 ns resolution).
Nanosecond quantities from config files are converted once at the boundary;
sub-tick values such as a 9.0 ns activate-to-read delay stay exact. Commands
snap to tCK boundaries only in the sense that tCK itself is quantized to the
same resolution.

The module is a pure functional core: bank states are immutable and every
operation returns a new value, so it is safe to call from anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum
from typing import Optional

from .errors import IllegalSequence

PS_PER_NS = 1000


def ns_to_ps(value) -> int:
    """Convert a nanosecond quantity (int, float, or decimal string) to picoseconds."""
    d = Decimal(str(value)) * PS_PER_NS
    ps = int(d)
    if ps != d:
        raise ValueError(f"timing value below 0.001 ns resolution: {value} ns")
    return ps


def ps_to_ns_str(ps: int) -> str:
    """Exact decimal rendering of a picosecond count in nanoseconds."""
    whole, frac = divmod(ps, PS_PER_NS)
    if frac == 0:
        return f"{whole}.0"
    return f"{whole}.{frac:03d}".rstrip("0")


TIMING_PARAMS = (
    "tRCD", "tRP", "tRAS", "tRC", "tCL", "tWR",
    "tCCD", "tRRD", "tRTP", "tREFI", "tREFW", "tRFC",
)

# DDR4-1333 defaults. tRCD/tREFI/tREFW match the characterized module; the
# remaining values follow speed-bin conventions since no datasheet values
# are available for them (see the default config file).
DEFAULT_TIMING_NS = {
    "tRCD": "13.5",
    "tRP": "13.5",
    "tRAS": "32.5",
    "tRC": "46.0",
    "tCL": "13.5",
    "tWR": "15.0",
    "tCCD": "7.5",
    "tRRD": "6.0",
    "tRTP": "7.5",
    "tREFI": "7800",
    "tREFW": "64000000",
    "tRFC": "350",
}


def default_timing_ps() -> dict:
    return {k: ns_to_ps(v) for k, v in DEFAULT_TIMING_NS.items()}


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class DramConfig:
    """Geometry and timing of the modeled DDR4 device.

    Single channel and single rank are modeled; the fields stay general but
    cross-rank constraints (tFAW, rank-to-rank turnaround) are not enforced.
    """

    channels: int = 1
    ranks: int = 1
    bank_groups: int = 4
    banks_per_group: int = 4
    rows_per_bank: int = 32768
    columns_per_row: int = 128          # cache-line granular
    row_size_bytes: int = 8192
    cache_line_bytes: int = 64
    data_rate: int = 1333               # MT/s
    timing: dict = field(default_factory=default_timing_ps)

    def __post_init__(self):
        for name in ("channels", "ranks", "bank_groups", "banks_per_group",
                     "rows_per_bank", "columns_per_row"):
            if not _is_pow2(getattr(self, name)):
                raise ValueError(f"{name} must be a power of two, got {getattr(self, name)}")
        if self.row_size_bytes != self.columns_per_row * self.device_burst_bytes:
            raise ValueError("row_size_bytes must equal columns_per_row * burst bytes")
        if self.row_size_bytes % self.cache_line_bytes:
            raise ValueError("row_size_bytes must be divisible by cache_line_bytes")
        missing = [p for p in TIMING_PARAMS if p not in self.timing]
        if missing:
            raise ValueError(f"missing timing parameters: {missing}")
        t = self.timing
        if t["tRC"] < t["tRAS"] + t["tRP"]:
            raise ValueError("tRC must be >= tRAS + tRP")
        refs_per_window = t["tREFW"] // t["tREFI"]
        if refs_per_window < 1:
            raise ValueError("tREFW must cover at least one tREFI interval")
        # All-bank refresh: each REF covers a slice of the row space.
        rows_per_ref = -(-self.rows_per_bank // refs_per_window)
        if refs_per_window * rows_per_ref < self.rows_per_bank:
            raise ValueError("refresh window cannot cover all rows")

    @property
    def device_burst_bytes(self) -> int:
        # One burst delivers a cache line on a 64-bit bus (BL8).
        return self.cache_line_bytes

    @property
    def tCK_ps(self) -> int:
        return round(2_000_000 / self.data_rate)

    @property
    def burst_ps(self) -> int:
        # BL8 on a double data rate bus: four full clocks per line.
        return 4 * self.tCK_ps

    @property
    def banks_total(self) -> int:
        return self.bank_groups * self.banks_per_group

    @property
    def lines_per_row(self) -> int:
        return self.row_size_bytes // self.cache_line_bytes

    @property
    def capacity_bytes(self) -> int:
        return self.banks_total * self.rows_per_bank * self.row_size_bytes

    def bank_ids(self):
        for bg in range(self.bank_groups):
            for bank in range(self.banks_per_group):
                yield (bg, bank)


@dataclass(frozen=True)
class DramAddress:
    bank_group: int
    bank: int
    row: int
    column: int = 0

    def bank_key(self):
        return (self.bank_group, self.bank)

    def check(self, cfg: DramConfig):
        if not (0 <= self.bank_group < cfg.bank_groups
                and 0 <= self.bank < cfg.banks_per_group
                and 0 <= self.row < cfg.rows_per_bank
                and 0 <= self.column < cfg.columns_per_row):
            raise IllegalSequence(f"address out of bounds: {self}")


class CommandKind(Enum):
    ACT = "ACT"
    PRE = "PRE"
    RD = "RD"
    WR = "WR"
    REF = "REF"


@dataclass(frozen=True)
class DramCommand:
    """A single DRAM command.

    override_trcd_ps is set only when a technique deliberately issues the
    column access early; it then replaces the nominal tRCD gate. WR commands
    carry their cache-line payload.
    """

    kind: CommandKind
    addr: Optional[DramAddress] = None
    override_trcd_ps: Optional[int] = None
    payload: Optional[bytes] = None

    def __post_init__(self):
        if self.kind is CommandKind.REF:
            if self.addr is not None:
                raise ValueError("REF takes no address")
        elif self.addr is None:
            raise ValueError(f"{self.kind.value} requires an address")
        if self.override_trcd_ps is not None:
            if self.kind is not CommandKind.RD:
                raise ValueError("override_trcd_ps only applies to RD")
            if self.override_trcd_ps <= 0:
                raise ValueError("override_trcd_ps must be positive")


@dataclass(frozen=True)
class BankState:
    """Open-row state plus last-issue timestamps, in device picoseconds."""

    open_row: Optional[int] = None
    last_act_ps: Optional[int] = None
    last_pre_ps: Optional[int] = None
    last_rd_ps: Optional[int] = None
    last_wr_ps: Optional[int] = None
    last_ref_ps: Optional[int] = None
    refresh_deadline_ps: int = 0


def fresh_bank_states(cfg: DramConfig) -> dict:
    deadline = cfg.timing["tREFI"]
    return {key: BankState(refresh_deadline_ps=deadline) for key in cfg.bank_ids()}


@dataclass(frozen=True)
class Violation:
    index: int
    parameter: str
    deficit_ps: int

    @property
    def deficit_ns(self) -> float:
        return self.deficit_ps / PS_PER_NS


def _write_recovery_ps(cfg: DramConfig) -> int:
    t = cfg.timing
    return t["tCL"] + cfg.burst_ps + t["tWR"]


def _ready_gates(state: BankState, cmd: DramCommand, cfg: DramConfig):
    """(parameter, earliest issue ps) pairs constraining cmd on this bank.

    Raises IllegalSequence when the command makes no sense for the current
    open-row state, independent of time.
    """
    t = cfg.timing
    gates = []
    kind = cmd.kind

    if kind is CommandKind.ACT:
        if state.open_row is not None:
            raise IllegalSequence("ACT to a bank with an open row")
        if state.last_pre_ps is not None:
            gates.append(("tRP", state.last_pre_ps + t["tRP"]))
        if state.last_act_ps is not None:
            gates.append(("tRC", state.last_act_ps + t["tRC"]))
        if state.last_ref_ps is not None:
            gates.append(("tRFC", state.last_ref_ps + t["tRFC"]))
    elif kind is CommandKind.PRE:
        if state.open_row is None:
            raise IllegalSequence("PRE to a bank with no open row")
        if state.last_act_ps is not None:
            gates.append(("tRAS", state.last_act_ps + t["tRAS"]))
        if state.last_rd_ps is not None:
            gates.append(("tRTP", state.last_rd_ps + t["tRTP"]))
        if state.last_wr_ps is not None:
            gates.append(("tWR", state.last_wr_ps + _write_recovery_ps(cfg)))
    elif kind in (CommandKind.RD, CommandKind.WR):
        if state.open_row is None:
            raise IllegalSequence(f"{kind.value} to a closed bank")
        if cmd.addr is not None and state.open_row != cmd.addr.row:
            raise IllegalSequence(
                f"{kind.value} row {cmd.addr.row} while row {state.open_row} is open")
        trcd = cmd.override_trcd_ps if cmd.override_trcd_ps is not None else t["tRCD"]
        if state.last_act_ps is not None:
            gates.append(("tRCD", state.last_act_ps + trcd))
        if state.last_rd_ps is not None:
            gates.append(("tCCD", state.last_rd_ps + t["tCCD"]))
        if state.last_wr_ps is not None:
            gates.append(("tCCD", state.last_wr_ps + t["tCCD"]))
    elif kind is CommandKind.REF:
        if state.open_row is not None:
            raise IllegalSequence("REF requires all banks precharged")
        if state.last_pre_ps is not None:
            gates.append(("tRP", state.last_pre_ps + t["tRP"]))
        if state.last_act_ps is not None:
            gates.append(("tRC", state.last_act_ps + t["tRC"]))
        if state.last_ref_ps is not None:
            gates.append(("tRFC", state.last_ref_ps + t["tRFC"]))
    else:  # pragma: no cover
        raise IllegalSequence(f"unknown command kind {kind}")
    return gates


def earliest_legal_issue(state: BankState, cmd: DramCommand, cfg: DramConfig,
                         now_ps: int) -> int:
    """Smallest t >= now_ps at which cmd violates no timing parameter."""
    if cmd.addr is not None:
        cmd.addr.check(cfg)
    t = now_ps
    for _, ready in _ready_gates(state, cmd, cfg):
        if ready > t:
            t = ready
    return t


def apply_command(state: BankState, cmd: DramCommand, issue_ps: int,
                  cfg: DramConfig) -> BankState:
    """State after issuing cmd at issue_ps. Legality of the time is not checked;
    deliberately violating sequences are the point of some techniques."""
    kind = cmd.kind
    if kind is CommandKind.ACT:
        if state.open_row is not None:
            raise IllegalSequence("ACT to a bank with an open row")
        return replace(state, open_row=cmd.addr.row, last_act_ps=issue_ps)
    if kind is CommandKind.PRE:
        if state.open_row is None:
            raise IllegalSequence("PRE to a bank with no open row")
        return replace(state, open_row=None, last_pre_ps=issue_ps)
    if kind is CommandKind.RD:
        if state.open_row is None or (cmd.addr and state.open_row != cmd.addr.row):
            raise IllegalSequence("RD to a closed bank or mismatched row")
        return replace(state, last_rd_ps=issue_ps)
    if kind is CommandKind.WR:
        if state.open_row is None or (cmd.addr and state.open_row != cmd.addr.row):
            raise IllegalSequence("WR to a closed bank or mismatched row")
        return replace(state, last_wr_ps=issue_ps)
    if kind is CommandKind.REF:
        if state.open_row is not None:
            raise IllegalSequence("REF requires all banks precharged")
        return replace(state, last_ref_ps=issue_ps,
                       refresh_deadline_ps=state.refresh_deadline_ps + cfg.timing["tREFI"])
    raise IllegalSequence(f"unknown command kind {kind}")  # pragma: no cover


def check_batch_legality(batch, states: dict, cfg: DramConfig,
                         start_ps: int = 0) -> list:
    """Dry-run a command batch and report every timing shortfall.

    Violations are data, not errors; structural impossibilities still raise
    IllegalSequence. Constraints are per-bank, matching earliest_legal_issue.
    """
    work = dict(states)
    violations = []
    for index, (cmd, offset_ps) in enumerate(batch.entries):
        t = start_ps + offset_ps
        keys = list(work) if cmd.kind is CommandKind.REF else [cmd.addr.bank_key()]
        for key in keys:
            state = work[key]
            for parameter, ready in _ready_gates(state, cmd, cfg):
                if ready > t:
                    violations.append(Violation(index, parameter, ready - t))
            work[key] = apply_command(state, cmd, t, cfg)
    return violations
