"""Reduced activate-to-read latency with Bloom-filter weak-row tracking.

Profiling discovers, per cache line, the smallest tested activate-to-read
delay that still returns correct data. Rows are then classified by their
weakest line. A Bloom filter over the weak rows lets the controller decide,
at every row activation, whether the reduced delay is safe: a false positive
merely keeps the nominal timing, and false negatives cannot occur.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .device import STRONG_THRESHOLD_PS
from .engine import BatchBuilder, CommandBatch, CommandEngine
from .errors import ParseError
from .timing import CommandKind, DramAddress, DramCommand, DramConfig, \
    apply_command, earliest_legal_issue, ns_to_ps, ps_to_ns_str
from .util import mix

# Delays tried during profiling when the caller does not specify a ladder.
DEFAULT_PROFILING_LADDER_PS = tuple(ns_to_ps(v) for v in
                                    ("6.0", "7.5", "9.0", "10.5", "12.0", "13.5"))


class RowTrcdTable:
    """Per-row minimum reliable activate-to-read delay.

    The safe per-row value is its weakest line's requirement, i.e. the max
    over the row's cache lines. Values are computed lazily and memoized.
    """

    def __init__(self, profile, lines_per_row: int):
        self.profile = profile
        self.lines_per_row = lines_per_row
        self._memo = {}

    def value_ps(self, bg: int, bank: int, row: int) -> int:
        key = (bg, bank, row)
        v = self._memo.get(key)
        if v is None:
            v = max(self.profile.min_trcd_ps(bg, bank, row, line)
                    for line in range(self.lines_per_row))
            self._memo[key] = v
        return v

    def weak_rows(self, threshold_ps: int = STRONG_THRESHOLD_PS):
        for bg, bank, row in self.profile.weak_rows():
            if self.value_ps(bg, bank, row) > threshold_ps:
                yield (bg, bank, row)


class WeakRowFilter:
    """Bloom filter keyed by (bank_group, bank, row). Membership means
    "possibly weak"; inserted rows always query true."""

    def __init__(self, m_bits: int, k: int, seeds):
        if m_bits <= 0 or k <= 0 or len(seeds) != k:
            raise ValueError("need positive m, k and exactly k seeds")
        self.m_bits = m_bits
        self.k = k
        self.seeds = tuple(seeds)
        self.bits = bytearray((m_bits + 7) // 8)
        self.count = 0

    def _positions(self, bg: int, bank: int, row: int):
        for seed in self.seeds:
            yield mix(seed, bg, bank, row) % self.m_bits

    def insert(self, bg: int, bank: int, row: int):
        for pos in self._positions(bg, bank, row):
            self.bits[pos >> 3] |= 1 << (pos & 7)
        self.count += 1

    def query(self, bg: int, bank: int, row: int) -> bool:
        return all(self.bits[pos >> 3] & (1 << (pos & 7))
                   for pos in self._positions(bg, bank, row))

    def dump(self, fp):
        fp.write(f"m {self.m_bits}\n")
        fp.write("seeds " + " ".join(str(s) for s in self.seeds) + "\n")
        fp.write("bits " + self.bits.hex() + "\n")

    @classmethod
    def load(cls, fp) -> "WeakRowFilter":
        fields = {}
        for lineno, raw in enumerate(fp, start=1):
            parts = raw.strip().split()
            if not parts:
                continue
            fields[parts[0]] = parts[1:]
        try:
            m = int(fields["m"][0])
            seeds = [int(s) for s in fields["seeds"]]
            bits = bytes.fromhex(fields["bits"][0])
        except (KeyError, ValueError, IndexError) as exc:
            raise ParseError(f"bad filter dump: {exc}") from exc
        filt = cls(m, len(seeds), seeds)
        filt.bits = bytearray(bits)
        return filt


def build_weak_filter(table: RowTrcdTable,
                      threshold_ps: int = STRONG_THRESHOLD_PS,
                      m_bits: Optional[int] = None, k: int = 4,
                      seed: int = 1) -> WeakRowFilter:
    """Insert every row whose table value exceeds the threshold. The default
    sizing, sixteen bits per expected weak row with four hashes, keeps the
    false positive rate around a percent."""
    weak = list(table.weak_rows(threshold_ps))
    if m_bits is None:
        m_bits = max(64, 16 * len(weak))
    seeds = [mix(seed, 0xB100F, i) for i in range(k)]
    filt = WeakRowFilter(m_bits, k, seeds)
    for bg, bank, row in weak:
        filt.insert(bg, bank, row)
    return filt


def trcd_for_row(filt: WeakRowFilter, bg: int, bank: int, row: int,
                 reduced_ps: int = STRONG_THRESHOLD_PS,
                 nominal_ps: int = ns_to_ps("13.5")) -> int:
    """Nominal delay when the row is possibly weak, reduced otherwise."""
    return nominal_ps if filt.query(bg, bank, row) else reduced_ps


@dataclass
class TrcdTechnique:
    """Scheduler plug-in: chooses the activation-to-read delay per row and
    keeps safety statistics."""

    filter: WeakRowFilter
    table: RowTrcdTable
    reduced_ps: int = STRONG_THRESHOLD_PS
    nominal_ps: int = ns_to_ps("13.5")
    threshold_ps: int = STRONG_THRESHOLD_PS
    reduced_grants: int = 0
    nominal_holds: int = 0
    false_positives: int = 0

    def override_for(self, bg: int, bank: int, row: int) -> Optional[int]:
        chosen = trcd_for_row(self.filter, bg, bank, row,
                              self.reduced_ps, self.nominal_ps)
        if chosen >= self.nominal_ps:
            self.nominal_holds += 1
            if self.table.value_ps(bg, bank, row) <= self.threshold_ps:
                self.false_positives += 1
            return None
        self.reduced_grants += 1
        return chosen


def _profiling_batches(engine: CommandEngine, addr: DramAddress,
                       pattern: bytes, trcd_ps: int):
    """Write the known pattern, then read it back with the requested delay
    from a fresh activation."""
    cfg = engine.cfg
    states = dict(engine.bank_states)
    start = engine.device_now_ps
    batches = []
    cursor = start
    builder = BatchBuilder()

    def put(cmd):
        nonlocal cursor
        key = cmd.addr.bank_key()
        t = earliest_legal_issue(states[key], cmd, cfg, cursor)
        if builder._entries and t <= builder._entries[-1][1] + start:
            t = builder._entries[-1][1] + start + 1
        builder._entries.append((cmd, t - start))
        states[key] = apply_command(states[key], cmd, t, cfg)
        cursor = t

    state = states[addr.bank_key()]
    if state.open_row is not None and state.open_row != addr.row:
        put(DramCommand(CommandKind.PRE,
                        DramAddress(addr.bank_group, addr.bank, state.open_row)))
    if states[addr.bank_key()].open_row is None:
        put(DramCommand(CommandKind.ACT,
                        DramAddress(addr.bank_group, addr.bank, addr.row)))
    put(DramCommand(CommandKind.WR, addr, payload=pattern))
    # Close and reopen so the reduced delay gates a genuine activation.
    put(DramCommand(CommandKind.PRE,
                    DramAddress(addr.bank_group, addr.bank, addr.row)))
    act = DramCommand(CommandKind.ACT,
                      DramAddress(addr.bank_group, addr.bank, addr.row))
    key = addr.bank_key()
    t_act = earliest_legal_issue(states[key], act, cfg, cursor)
    builder._entries.append((act, t_act - start))
    states[key] = apply_command(states[key], act, t_act, cfg)
    override = trcd_ps if trcd_ps < cfg.timing["tRCD"] else None
    rd = DramCommand(CommandKind.RD, addr, override_trcd_ps=override)
    builder._entries.append((rd, t_act - start + trcd_ps))
    batches.append(builder.build(strict=override is None))
    return batches


def profile_line(engine: CommandEngine, addr: DramAddress, trcd_ps: int) -> bool:
    """One profiling probe: init with a known pattern, access with the
    requested delay, report whether the data came back correct."""
    pattern = bytes([(0xA5 + addr.column) & 0xFF]) * engine.cfg.cache_line_bytes
    for batch in _profiling_batches(engine, addr, pattern, trcd_ps):
        result = engine.flush(batch)
    return result.readback[-1] == pattern


def profile_chip(engine: CommandEngine, trcd_values=DEFAULT_PROFILING_LADDER_PS,
                 rows: Optional[int] = None):
    """Sweep banks, rows, and cache lines; for each line report the smallest
    tested delay that reads the pattern back correctly. Returns a dict keyed
    by (bg, bank, row, line)."""
    cfg = engine.cfg
    ladder = sorted(trcd_values)
    row_count = cfg.rows_per_bank if rows is None else min(rows, cfg.rows_per_bank)
    out = {}
    for bg, bank in cfg.bank_ids():
        for row in range(row_count):
            for line in range(cfg.columns_per_row):
                addr = DramAddress(bg, bank, row, line)
                found = None
                for value in ladder:
                    if profile_line(engine, addr, value):
                        found = value
                        break
                out[(bg, bank, row, line)] = found
    return out


def row_table_from_profiling(per_line: dict) -> dict:
    """Collapse per-line profiling results to the per-row weakest-line value."""
    rows = {}
    for (bg, bank, row, line), value in per_line.items():
        key = (bg, bank, row)
        if value is None:
            rows[key] = None
        elif key not in rows or (rows[key] is not None and value > rows[key]):
            rows[key] = value
    return rows


def heatmap_csv(row_values: dict, banks_per_group: int) -> str:
    """`bank,row,min_trcd_ns` per row, banks as linear ids."""
    lines = ["bank,row,min_trcd_ns"]
    for (bg, bank, row) in sorted(row_values):
        value = row_values[(bg, bank, row)]
        linear = bg * banks_per_group + bank
        rendered = "untestable" if value is None else ps_to_ns_str(value)
        lines.append(f"{linear},{row},{rendered}")
    return "\n".join(lines) + "\n"
