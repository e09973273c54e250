"""Timing-preserving execution of DRAM command batches.

The engine accepts an ordered batch of commands with exact inter-command
offsets and plays it against the bank-state model and the modeled chip. In
strict mode any timing shortfall aborts before side effects; in non-strict
mode the shortfalls take effect through the chip model instead: an early
column access consults the per-line reliability threshold, and the
activate-precharge-activate idiom consults the clonable-pair relation and
moves row data accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .device import AccessOutcome, CloneOutcome, RowData, access_outcome, \
    garbage_bytes, rowclone_outcome
from .errors import BatchOrderError, StrictViolation
from .timing import BankState, CommandKind, DramCommand, DramConfig, \
    apply_command, check_batch_legality, fresh_bank_states, ps_to_ns_str, ns_to_ps
from .errors import ParseError
from .timing import DramAddress


@dataclass(frozen=True)
class CommandBatch:
    entries: tuple          # ((DramCommand, offset_ps), ...)
    strict: bool = True

    def __post_init__(self):
        last = None
        for _, offset in self.entries:
            if last is not None and offset <= last:
                raise BatchOrderError("offsets must be strictly increasing")
            last = offset

    @property
    def last_offset_ps(self) -> int:
        return self.entries[-1][1] if self.entries else 0


class BatchBuilder:
    """Accumulates commands with delays relative to the previous command."""

    def __init__(self):
        self._entries = []

    def stage(self, cmd: DramCommand, delay_ps: int = 0) -> "BatchBuilder":
        if delay_ps < 0:
            raise BatchOrderError("delay must be non-negative")
        offset = delay_ps if not self._entries else self._entries[-1][1] + delay_ps
        if self._entries and offset <= self._entries[-1][1]:
            raise BatchOrderError("offsets must be strictly increasing")
        self._entries.append((cmd, offset))
        return self

    def __len__(self):
        return len(self._entries)

    def build(self, strict: bool = True) -> CommandBatch:
        if not self._entries:
            raise BatchOrderError("cannot flush an empty batch")
        return CommandBatch(entries=tuple(self._entries), strict=strict)


@dataclass
class ExecutionResult:
    readback: list
    elapsed_ps: int
    violations: list = field(default_factory=list)


@dataclass(frozen=True)
class CloneCandidate:
    act_index: int
    bank_key: tuple
    src_row: int
    dst_row: int


def rowclone_detect(batch: CommandBatch, cfg: DramConfig) -> list:
    """ACT-PRE-ACT triples within one bank whose gaps undercut tRAS and tRP.

    Overlapping idioms each count: ACT a, PRE, ACT b, PRE, ACT c yields
    (a, b) and (b, c).
    """
    t = cfg.timing
    history = {}
    found = []
    for index, (cmd, offset) in enumerate(batch.entries):
        if cmd.kind not in (CommandKind.ACT, CommandKind.PRE):
            continue
        key = cmd.addr.bank_key()
        prev = history.setdefault(key, [])
        prev.append((index, cmd, offset))
        if len(prev) > 3:
            del prev[0]
        if len(prev) == 3:
            (_, c0, t0), (_, c1, t1), (i2, c2, t2) = prev
            if (c0.kind is CommandKind.ACT and c1.kind is CommandKind.PRE
                    and c2.kind is CommandKind.ACT
                    and t1 - t0 < t["tRAS"] and t2 - t1 < t["tRP"]):
                found.append(CloneCandidate(i2, key, c0.addr.row, c2.addr.row))
    return found


# Time from a command's issue until the device completes it, used to extend
# the batch wall time past the last offset.
def completion_latency_ps(kind: CommandKind, cfg: DramConfig) -> int:
    t = cfg.timing
    if kind is CommandKind.RD:
        return t["tCL"] + cfg.burst_ps
    if kind is CommandKind.WR:
        return t["tCL"] + cfg.burst_ps + t["tWR"]
    if kind is CommandKind.PRE:
        return t["tRP"]
    if kind is CommandKind.ACT:
        return t["tRCD"]
    return t["tRFC"]


@dataclass
class EngineStats:
    command_counts: dict = field(default_factory=dict)
    rowclone_success: int = 0
    rowclone_fail: int = 0
    reduced_reads: list = field(default_factory=list)   # (addr, applied_ps, correct)

    def count(self, kind: CommandKind, n: int = 1):
        self.command_counts[kind.value] = self.command_counts.get(kind.value, 0) + n


class CommandEngine:
    """Executes batches against one device instance.

    Owns the per-bank states and a device-time cursor. One engine per
    simulation; separate instances are fully independent.
    """

    def __init__(self, cfg: DramConfig, rowdata: RowData, profile):
        self.cfg = cfg
        self.rowdata = rowdata
        self.profile = profile
        self.bank_states = fresh_bank_states(cfg)
        self.device_now_ps = 0
        self.stats = EngineStats()
        self.on_reduced_read = None     # optional hook: (addr, applied_ps) -> None

    def flush(self, batch: CommandBatch, start_ps: Optional[int] = None) -> ExecutionResult:
        """Execute the batch with its declared offsets starting at start_ps
        (the device-time cursor when omitted)."""
        if not batch.entries:
            raise BatchOrderError("cannot flush an empty batch")
        cfg = self.cfg
        if start_ps is None:
            start_ps = self.device_now_ps
        violations = check_batch_legality(batch, self.bank_states, cfg, start_ps)
        if batch.strict and violations:
            raise StrictViolation(violations)

        # Structural dry run so a mid-batch IllegalSequence cannot leave
        # partial side effects behind.
        shadow = dict(self.bank_states)
        for cmd, offset in batch.entries:
            keys = list(shadow) if cmd.kind is CommandKind.REF else [cmd.addr.bank_key()]
            for key in keys:
                shadow[key] = apply_command(shadow[key], cmd, start_ps + offset, cfg)

        clones = {c.act_index: c for c in rowclone_detect(batch, cfg)}
        nominal_trcd = cfg.timing["tRCD"]
        readback = []
        for index, (cmd, offset) in enumerate(batch.entries):
            t = start_ps + offset
            kind = cmd.kind
            if kind is CommandKind.REF:
                for key, state in self.bank_states.items():
                    self.bank_states[key] = apply_command(state, cmd, t, cfg)
                self.stats.count(kind)
                continue
            key = cmd.addr.bank_key()
            state = self.bank_states[key]
            if index in clones:
                cand = clones[index]
                outcome = rowclone_outcome(self.profile, *cand.bank_key,
                                           cand.src_row, cand.dst_row)
                if outcome is CloneOutcome.SUCCESS:
                    self.rowdata.copy_row(*cand.bank_key, cand.src_row, cand.dst_row)
                    self.stats.rowclone_success += 1
                else:
                    self.rowdata.corrupt_row(*cand.bank_key, cand.src_row, cand.dst_row)
                    self.stats.rowclone_fail += 1
            if kind is CommandKind.RD:
                applied = t - state.last_act_ps
                if applied < nominal_trcd:
                    outcome = access_outcome(self.profile, cmd.addr, applied)
                    correct = outcome is AccessOutcome.CORRECT
                    self.stats.reduced_reads.append((cmd.addr, applied, correct))
                    if self.on_reduced_read is not None:
                        self.on_reduced_read(cmd.addr, applied)
                    if correct:
                        readback.append(self.rowdata.read_line(cmd.addr))
                    else:
                        readback.append(bytes(garbage_bytes(
                            self.profile.seed,
                            (0xACCE, cmd.addr.bank_group, cmd.addr.bank,
                             cmd.addr.row, cmd.addr.column, applied),
                            cfg.cache_line_bytes)))
                else:
                    readback.append(self.rowdata.read_line(cmd.addr))
            elif kind is CommandKind.WR:
                self.rowdata.write_line(cmd.addr, cmd.payload)
            self.bank_states[key] = apply_command(state, cmd, t, cfg)
            self.stats.count(kind)

        last_cmd, last_offset = batch.entries[-1]
        elapsed = last_offset + completion_latency_ps(last_cmd.kind, cfg)
        self.device_now_ps = start_ps + elapsed
        return ExecutionResult(readback=readback, elapsed_ps=elapsed,
                               violations=violations)


def dump_batch(batch: CommandBatch) -> str:
    """Text trace, one command per line:
    `offset_ns KIND bg bank row col [trcd_override_ns]` with `-` for fields a
    command does not carry.
    """
    lines = []
    for cmd, offset in batch.entries:
        if cmd.addr is None:
            fields = ["-", "-", "-", "-"]
        else:
            col = str(cmd.addr.column) if cmd.kind in (CommandKind.RD, CommandKind.WR) else "-"
            fields = [str(cmd.addr.bank_group), str(cmd.addr.bank),
                      str(cmd.addr.row), col]
        parts = [ps_to_ns_str(offset), cmd.kind.value, *fields]
        if cmd.override_trcd_ps is not None:
            parts.append(ps_to_ns_str(cmd.override_trcd_ps))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def parse_batch(text: str, strict: bool = True) -> CommandBatch:
    builder_entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 6:
            raise ParseError("expected offset kind bg bank row col", lineno)
        try:
            offset = ns_to_ps(parts[0])
            kind = CommandKind(parts[1])
            if parts[2] == "-":
                addr = None
            else:
                col = 0 if parts[5] == "-" else int(parts[5])
                addr = DramAddress(int(parts[2]), int(parts[3]), int(parts[4]), col)
            override = ns_to_ps(parts[6]) if len(parts) > 6 else None
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
        builder_entries.append((DramCommand(kind, addr, override_trcd_ps=override), offset))
    return CommandBatch(entries=tuple(builder_entries), strict=strict)
