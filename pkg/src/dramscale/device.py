"""The modeled DRAM chip: row contents plus a per-row reliability profile.

The profile determines which cache lines survive an early column access and
which row pairs can be copied with back-to-back activations. Generation is a
pure function of (seed, fractions, geometry): the same inputs always yield
the identical chip, and weak cache lines come out spatially clustered in
contiguous row ranges, mirroring how marginal cells appear in practice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import ParseError
from .timing import DramAddress, DramConfig, ns_to_ps, ps_to_ns_str
from .util import mix, splitmix64, unit_interval

# Activation-to-column thresholds a cache line may require, in ps. The steps
# mimic controller-tick-quantized test ladders, derated 2% so every value sits
# strictly below the 13.5 ns nominal.
MIN_TRCD_LADDER_PS = tuple(v * 98 // 100 for v in (6000, 7500, 8250, 9000, 10500, 12000, 13500))
STRONG_THRESHOLD_PS = ns_to_ps("9.0")
_STRONG_VALUES = tuple(v for v in MIN_TRCD_LADDER_PS if v <= STRONG_THRESHOLD_PS)
_WEAK_VALUES = tuple(v for v in MIN_TRCD_LADDER_PS if v > STRONG_THRESHOLD_PS)

DEFAULT_SUBARRAY_ROWS = 512


class AccessOutcome(Enum):
    CORRECT = "correct"
    CORRUPT = "corrupt"


class CloneOutcome(Enum):
    SUCCESS = "success"
    FAIL = "fail"


@dataclass(frozen=True)
class WeakRegion:
    """Weak cache lines of one bank: full rows [row_begin, row_end) plus the
    first partial_lines lines of partial_row (if any)."""

    row_begin: int
    row_end: int
    partial_row: Optional[int] = None
    partial_lines: int = 0

    def covers(self, row: int, line: int) -> bool:
        if self.row_begin <= row < self.row_end:
            return True
        return row == self.partial_row and line < self.partial_lines

    def weak_rows(self):
        yield from range(self.row_begin, self.row_end)
        if self.partial_row is not None and self.partial_lines > 0:
            yield self.partial_row


def _split_weak_lines(total_weak: int, banks: int) -> list:
    base, rem = divmod(total_weak, banks)
    return [base + (1 if i < rem else 0) for i in range(banks)]


def _bank_regions(seed: int, bank_index: int, rows: int, lines_per_row: int,
                  weak_lines: int) -> list:
    """Place a bank's weak lines into 1-3 contiguous, disjoint row ranges.

    The line count is exact: full rows carry lines_per_row weak lines each and
    one boundary row carries the remainder.
    """
    if weak_lines == 0:
        return []
    full_rows, partial = divmod(weak_lines, lines_per_row)
    need_partial_row = 1 if partial else 0
    if full_rows + need_partial_row >= rows:
        full = min(full_rows, rows - need_partial_row)
        if partial:
            return [WeakRegion(0, full, partial_row=full, partial_lines=partial)]
        return [WeakRegion(0, full)]
    h = mix(seed, 0xC1, bank_index)
    nranges = min(1 + (h % 3), full_rows) or 1
    sizes = [full_rows // nranges] * nranges
    for i in range(full_rows % nranges):
        sizes[i] += 1
    # Ranges are packed sequentially with seeded gaps drawn from the slack, so
    # they stay disjoint and in bounds by construction.
    slack = rows - full_rows - need_partial_row
    regions = []
    cursor = 0
    for i, size in enumerate(sizes):
        gap = mix(seed, 0xC2, bank_index, i) % (slack // nranges + 1)
        slack -= gap
        begin = cursor + gap
        end = begin + size
        if i == 0 and partial:
            regions.append(WeakRegion(begin, end, partial_row=end,
                                      partial_lines=partial))
            cursor = end + 1
        else:
            regions.append(WeakRegion(begin, end))
            cursor = end
    return regions


@dataclass(frozen=True)
class ChipProfile:
    """Generated reliability profile; lookups are computed on demand from the
    seed so full-size devices never materialize per-line tables."""

    bank_groups: int
    banks_per_group: int
    rows_per_bank: int
    lines_per_row: int
    subarray_rows: int
    seed: int
    strong_fraction: float
    clonable_success_rate: float
    regions: dict = field(default_factory=dict)   # (bg, bank) -> tuple of WeakRegion

    @property
    def ladder_ps(self):
        return MIN_TRCD_LADDER_PS

    def is_weak_line(self, bg: int, bank: int, row: int, line: int) -> bool:
        for region in self.regions.get((bg, bank), ()):
            if region.covers(row, line):
                return True
        return False

    def min_trcd_ps(self, bg: int, bank: int, row: int, line: int) -> int:
        if self.is_weak_line(bg, bank, row, line):
            values = _WEAK_VALUES
            salt = 0xD2
        else:
            values = _STRONG_VALUES
            salt = 0xD1
        return values[mix(self.seed, salt, bg, bank, row, line) % len(values)]

    def subarray_of(self, row: int) -> int:
        return row // self.subarray_rows

    def clonable(self, bg: int, bank: int, row_a: int, row_b: int) -> bool:
        if row_a == row_b:
            return False
        if self.subarray_of(row_a) != self.subarray_of(row_b):
            return False
        lo, hi = sorted((row_a, row_b))
        h = mix(self.seed, 0xD3, bg, bank, self.subarray_of(lo), lo, hi)
        return unit_interval(h) < self.clonable_success_rate

    def weak_rows(self):
        """Every (bg, bank, row) containing at least one weak cache line."""
        for (bg, bank), regions in sorted(self.regions.items()):
            seen = set()
            for region in regions:
                for row in region.weak_rows():
                    if row not in seen:
                        seen.add(row)
                        yield (bg, bank, row)

    def addresses(self):
        for bg in range(self.bank_groups):
            for bank in range(self.banks_per_group):
                for row in range(self.rows_per_bank):
                    for line in range(self.lines_per_row):
                        yield (bg, bank, row, line)


def generate_profile(cfg: DramConfig, strong_fraction: float,
                     clonable_success_rate: float, seed: int,
                     subarray_rows: int = DEFAULT_SUBARRAY_ROWS) -> ChipProfile:
    if not (0.0 <= strong_fraction <= 1.0 and 0.0 <= clonable_success_rate <= 1.0):
        raise ValueError("fractions must lie in [0, 1]")
    banks = cfg.banks_total
    lines_per_row = cfg.lines_per_row
    total_lines = banks * cfg.rows_per_bank * lines_per_row
    target_weak = total_lines - round(strong_fraction * total_lines)
    per_bank = _split_weak_lines(target_weak, banks)
    regions = {}
    for index, (bg, bank) in enumerate(cfg.bank_ids()):
        regions[(bg, bank)] = tuple(_bank_regions(
            seed, index, cfg.rows_per_bank, lines_per_row, per_bank[index]))
    return ChipProfile(
        bank_groups=cfg.bank_groups,
        banks_per_group=cfg.banks_per_group,
        rows_per_bank=cfg.rows_per_bank,
        lines_per_row=lines_per_row,
        subarray_rows=subarray_rows,
        seed=seed,
        strong_fraction=strong_fraction,
        clonable_success_rate=clonable_success_rate,
        regions=regions,
    )


def access_outcome(profile, addr: DramAddress, applied_trcd_ps: int) -> AccessOutcome:
    """Deterministic verdict for a column access issued applied_trcd after ACT."""
    need = profile.min_trcd_ps(addr.bank_group, addr.bank, addr.row, addr.column)
    return AccessOutcome.CORRECT if applied_trcd_ps >= need else AccessOutcome.CORRUPT


def rowclone_outcome(profile, bg: int, bank: int, src_row: int,
                     dst_row: int) -> CloneOutcome:
    ok = profile.clonable(bg, bank, src_row, dst_row)
    return CloneOutcome.SUCCESS if ok else CloneOutcome.FAIL


class TableProfile:
    """Explicit-table profile, as produced by load_profile. Duck-compatible
    with ChipProfile for lookups."""

    def __init__(self, min_trcd: dict, clonable_pairs: set, banks_per_group: int,
                 subarray_rows: int = DEFAULT_SUBARRAY_ROWS, seed: int = 0):
        self._min_trcd = dict(min_trcd)
        self._clonable = set(clonable_pairs)
        self.banks_per_group = banks_per_group
        self.subarray_rows = subarray_rows
        self.seed = seed

    @property
    def ladder_ps(self):
        return tuple(sorted(set(self._min_trcd.values())))

    def min_trcd_ps(self, bg, bank, row, line):
        return self._min_trcd[(bg, bank, row, line)]

    def subarray_of(self, row):
        return row // self.subarray_rows

    def clonable(self, bg, bank, row_a, row_b):
        if row_a == row_b:
            return False
        lo, hi = sorted((row_a, row_b))
        linear = bg * self.banks_per_group + bank
        return (linear, lo, hi) in self._clonable

    def weak_rows(self):
        rows = sorted({(bg, bank, row) for (bg, bank, row, line), v
                       in self._min_trcd.items() if v > STRONG_THRESHOLD_PS})
        yield from rows

    def items(self):
        return self._min_trcd.items()


def dump_profile(profile, cfg: DramConfig, fp):
    """Flat text form: one `bg bank row line min_trcd_ns` record per cache
    line, then a CLONABLE section using linear bank ids. LF line endings."""
    for bg, bank, row, line in profile.addresses():
        ps = profile.min_trcd_ps(bg, bank, row, line)
        fp.write(f"{bg} {bank} {row} {line} {ps_to_ns_str(ps)}\n")
    for bg in range(cfg.bank_groups):
        for bank in range(cfg.banks_per_group):
            linear = bg * cfg.banks_per_group + bank
            for src in range(cfg.rows_per_bank):
                for dst in range(src + 1, cfg.rows_per_bank):
                    if profile.clonable(bg, bank, src, dst):
                        fp.write(f"CLONABLE {linear} {src} {dst}\n")


def load_profile(fp, banks_per_group: int,
                 subarray_rows: int = DEFAULT_SUBARRAY_ROWS) -> TableProfile:
    min_trcd = {}
    clonable = set()
    for lineno, raw in enumerate(fp, start=1):
        text = raw.strip()
        if not text:
            continue
        parts = text.split()
        try:
            if parts[0] == "CLONABLE":
                if len(parts) != 4:
                    raise ValueError("expected CLONABLE bank src dst")
                clonable.add((int(parts[1]), int(parts[2]), int(parts[3])))
            else:
                if len(parts) != 5:
                    raise ValueError("expected bg bank row line min_trcd_ns")
                key = tuple(int(p) for p in parts[:4])
                min_trcd[key] = ns_to_ps(parts[4])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from exc
    return TableProfile(min_trcd, clonable, banks_per_group, subarray_rows)


class RowData:
    """Byte contents of every DRAM row, materialized lazily with a
    deterministic default fill so untouched rows are reproducible."""

    def __init__(self, cfg: DramConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = seed
        self._rows = {}

    def _default_fill(self, bg, bank, row) -> bytearray:
        out = bytearray(self.cfg.row_size_bytes)
        h = mix(self.seed, 0xF111, bg, bank, row)
        for i in range(0, len(out), 8):
            h = splitmix64(h)
            out[i:i + 8] = h.to_bytes(8, "little")
        return out

    def row(self, bg: int, bank: int, row: int) -> bytearray:
        key = (bg, bank, row)
        data = self._rows.get(key)
        if data is None:
            data = self._default_fill(bg, bank, row)
            self._rows[key] = data
        return data

    def read_line(self, addr: DramAddress) -> bytes:
        line = self.cfg.cache_line_bytes
        data = self.row(addr.bank_group, addr.bank, addr.row)
        off = addr.column * line
        return bytes(data[off:off + line])

    def write_line(self, addr: DramAddress, payload: bytes):
        line = self.cfg.cache_line_bytes
        if len(payload) != line:
            raise ValueError(f"payload must be {line} bytes")
        data = self.row(addr.bank_group, addr.bank, addr.row)
        off = addr.column * line
        data[off:off + line] = payload

    def copy_row(self, bg: int, bank: int, src_row: int, dst_row: int):
        self._rows[(bg, bank, dst_row)] = bytearray(self.row(bg, bank, src_row))

    def corrupt_row(self, bg: int, bank: int, src_row: int, dst_row: int):
        """Replace dst with seeded pseudo-random garbage. Pure function of
        (seed, coordinates): replaying a run reproduces identical bytes."""
        self._rows[(bg, bank, dst_row)] = garbage_bytes(
            self.seed, (0xBAD0, bg, bank, src_row, dst_row), self.cfg.row_size_bytes)


def garbage_bytes(seed: int, key: tuple, n: int) -> bytearray:
    out = bytearray(n)
    h = mix(seed, *key)
    for i in range(0, n, 8):
        h = splitmix64(h)
        out[i:i + 8] = h.to_bytes(8, "little")[: min(8, n - i)]
    return out
