import io
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from dramscale.device import RowData, generate_profile, STRONG_THRESHOLD_PS
from dramscale.engine import CommandEngine
from dramscale.errors import OutOfRows, StrictViolation
from dramscale.rowclone import (
    RowAllocator, coherence_flush, execute_plan, issue_rowclone,
    plan_bulk_copy, plan_bulk_init, verify_clonable,
)
from dramscale.timing import CommandKind, DramConfig, fresh_bank_states, ns_to_ps
from dramscale.trcd import (
    RowTrcdTable, WeakRowFilter, build_weak_filter, heatmap_csv, profile_chip,
    row_table_from_profiling, trcd_for_row,
)


def small_cfg(rows=256, lines=8, banks=2):
    return DramConfig(bank_groups=1, banks_per_group=banks, rows_per_bank=rows,
                      columns_per_row=lines, row_size_bytes=lines * 64)


def make_engine(cfg=None, strong=1.0, clone=1.0, seed=7, subarray_rows=64):
    cfg = cfg or small_cfg()
    profile = generate_profile(cfg, strong, clone, seed,
                               subarray_rows=subarray_rows)
    return CommandEngine(cfg, RowData(cfg, seed=seed), profile)


class RelationProfile:
    """Profile stub with an explicit clonable relation, for planner tests."""

    def __init__(self, pairs, broken=(), subarray_rows=64, seed=0):
        self.pairs = {tuple(sorted(p)) for p in pairs}
        self.broken = {(bg, bank) + tuple(sorted((a, b)))
                       for bg, bank, a, b in broken}
        self.subarray_rows = subarray_rows
        self.seed = seed

    def subarray_of(self, row):
        return row // self.subarray_rows

    def clonable(self, bg, bank, a, b):
        if a == b or self.subarray_of(a) != self.subarray_of(b):
            return False
        if (bg, bank) + tuple(sorted((a, b))) in self.broken:
            return False
        return tuple(sorted((a, b))) in self.pairs


# -- planning ---------------------------------------------------------------------


def test_plan_single_row_all_clonable():
    cfg = small_cfg()
    engine = make_engine(cfg)
    plan = plan_bulk_copy(cfg.row_size_bytes, RowAllocator(cfg),
                          engine.profile, cfg)
    assert len(plan.operations) == 1
    assert plan.fallback_rows == []


def test_plan_four_rows_one_unclonable():
    cfg = small_cfg()
    # Rows pair up round-robin over the two banks: (0,1) and (2,3) in each.
    # Break exactly the bank-0 (2,3) pair.
    everything = {(a, b) for a in range(256) for b in range(a + 1, min(a + 4, 256))}
    profile = RelationProfile(everything, broken={(0, 0, 2, 3)})
    plan = plan_bulk_copy(4 * cfg.row_size_bytes, RowAllocator(cfg), profile, cfg)
    assert len(plan.operations) == 3
    assert len(plan.fallback_rows) == 1


def test_plan_sub_row_size_reserves_whole_row():
    cfg = small_cfg()
    engine = make_engine(cfg)
    plan = plan_bulk_copy(cfg.row_size_bytes // 2, RowAllocator(cfg),
                          engine.profile, cfg)
    assert len(plan.operations) + len(plan.fallback_rows) == 1


def test_plan_same_bank_same_subarray_invariant():
    cfg = small_cfg(rows=512)
    engine = make_engine(cfg, clone=0.7, subarray_rows=64)
    plan = plan_bulk_copy(20 * cfg.row_size_bytes, RowAllocator(cfg),
                          engine.profile, cfg)
    for op in plan.operations:
        assert engine.profile.subarray_of(op.src_row) == \
            engine.profile.subarray_of(op.dst_row)


def test_plan_out_of_rows():
    cfg = small_cfg(rows=4, banks=2)
    engine = make_engine(cfg, subarray_rows=4)
    with pytest.raises(OutOfRows):
        plan_bulk_copy(64 * cfg.row_size_bytes, RowAllocator(cfg),
                       engine.profile, cfg)


def test_init_one_source_per_subarray():
    cfg = small_cfg(rows=256)
    profile = generate_profile(cfg, 1.0, 1.0, 5, subarray_rows=64)
    # Destinations land in banks round-robin; force one bank by reserving
    # everything else.
    reserved = {(0, b, r) for b in range(1, 2) for r in range(256)}
    alloc = RowAllocator(cfg, reserved=reserved)
    plan = plan_bulk_init(100 * cfg.row_size_bytes, alloc, profile, cfg)
    subarrays = {profile.subarray_of(op.dst_row) for op in plan.operations}
    assert len(plan.init_sources) == len(subarrays)
    # Each destination row touched exactly once.
    dsts = [op.dst_row for op in plan.operations] + \
        [r for _, _, r in plan.fallback_rows]
    assert len(dsts) == len(set(dsts)) == 100


def test_init_within_one_subarray_single_source():
    cfg = small_cfg()
    profile = generate_profile(cfg, 1.0, 1.0, 5, subarray_rows=128)
    reserved = {(0, 1, r) for r in range(256)}
    plan = plan_bulk_init(2 * cfg.row_size_bytes,
                          RowAllocator(cfg, reserved=reserved), profile, cfg)
    assert len(plan.init_sources) == 1


def test_init_all_unclonable_all_fallback():
    cfg = small_cfg()
    profile = RelationProfile(set())
    plan = plan_bulk_init(3 * cfg.row_size_bytes, RowAllocator(cfg), profile, cfg)
    assert plan.operations == []
    assert len(plan.fallback_rows) == 3


# -- clone idiom and verification ------------------------------------------------


def test_issue_rowclone_offsets_default_3ns():
    cfg = small_cfg()
    states = fresh_bank_states(cfg)
    batch = issue_rowclone((0, 0, 1), (0, 0, 2), cfg, states, start_ps=0)
    offsets = [off for _, off in batch.entries]
    kinds = [cmd.kind for cmd, _ in batch.entries]
    assert kinds == [CommandKind.ACT, CommandKind.PRE, CommandKind.ACT]
    assert offsets == [0, 3000, 6000]
    assert not batch.strict


def test_issue_rowclone_strict_flush_raises():
    engine = make_engine()
    batch = issue_rowclone((0, 0, 1), (0, 0, 2), engine.cfg,
                           engine.bank_states, 0)
    strict = type(batch)(entries=batch.entries, strict=True)
    with pytest.raises(StrictViolation):
        engine.flush(strict, start_ps=0)


def test_issue_rowclone_requires_same_bank():
    cfg = small_cfg()
    with pytest.raises(ValueError):
        issue_rowclone((0, 0, 1), (0, 1, 2), cfg, fresh_bank_states(cfg), 0)


def test_verify_clonable_true_pair_survives_all_trials():
    engine = make_engine(clone=1.0)
    assert verify_clonable((0, 0, 1), (0, 0, 2), engine, trials=1000)


def test_verify_clonable_false_pair_fails_fast():
    engine = make_engine(clone=0.0)
    assert not verify_clonable((0, 0, 1), (0, 0, 2), engine, trials=1000)
    assert engine.stats.rowclone_fail == 1      # stopped at the first trial


def test_verify_clonable_cross_subarray_false():
    engine = make_engine(clone=1.0, subarray_rows=64)
    assert not verify_clonable((0, 0, 1), (0, 0, 100), engine, trials=3)


def test_verify_agrees_with_profile_relation():
    engine = make_engine(clone=0.5, subarray_rows=64, seed=23)
    for src, dst in [(0, 1), (2, 9), (10, 40), (65, 100)]:
        expected = engine.profile.clonable(0, 0, src, dst)
        assert verify_clonable((0, 0, src), (0, 0, dst), engine, trials=4) == expected


# -- end-to-end plan execution ------------------------------------------------------


def test_execute_copy_plan_dst_equals_src_including_fallback():
    cfg = small_cfg(rows=128)
    rng = random.Random(7)
    for trial in range(40):
        engine = make_engine(cfg, clone=rng.choice([0.0, 0.3, 0.7, 1.0]),
                             seed=trial, subarray_rows=32)
        rows = rng.randint(1, 4)
        plan = plan_bulk_copy(rows * cfg.row_size_bytes, RowAllocator(cfg),
                              engine.profile, cfg)
        execute_plan(plan, engine)
        for op in plan.operations:
            assert bytes(engine.rowdata.row(op.bank_group, op.bank, op.dst_row)) \
                == bytes(engine.rowdata.row(op.bank_group, op.bank, op.src_row))
        for (bg, bank, dst), (_, _, src) in zip(plan.fallback_rows,
                                                plan.fallback_src_rows):
            assert bytes(engine.rowdata.row(bg, bank, dst)) == \
                bytes(engine.rowdata.row(bg, bank, src))


def test_execute_init_plan_fills_pattern():
    cfg = small_cfg(rows=128)
    engine = make_engine(cfg, clone=0.5, seed=11, subarray_rows=32)
    plan = plan_bulk_init(5 * cfg.row_size_bytes, RowAllocator(cfg),
                          engine.profile, cfg)
    execute_plan(plan, engine, pattern=0xC3)
    fill = bytes([0xC3]) * cfg.row_size_bytes
    for op in plan.operations:
        assert bytes(engine.rowdata.row(op.bank_group, op.bank, op.dst_row)) == fill
    for bg, bank, row in plan.fallback_rows:
        assert bytes(engine.rowdata.row(bg, bank, row)) == fill


# -- coherence --------------------------------------------------------------------


def test_coherence_flush_nothing_cached():
    from dramscale.frontend import Core, CoreConfig, Workload
    core = Core(CoreConfig(), Workload([]))
    flushes, invalidated = coherence_flush(core, 0, 8192, 512)
    assert flushes == [] and invalidated == 0


def test_coherence_flush_dirty_sources_and_clean_targets():
    from dramscale.frontend import Core, CoreConfig, Workload
    core = Core(CoreConfig(), Workload([]))
    line = core.cfg.line_bytes
    for off in range(0, 4 * line, line):
        core.l1.insert(off, bytes([1]) * line, dirty=True)        # dirty src
        core.l2.insert(8192 + off, bytes([2]) * line, dirty=False)  # clean dst
    flushes, invalidated = coherence_flush(core, 0, 8192, 4 * line)
    assert len(flushes) == 4
    assert invalidated == 4
    assert core.l1.lookup(0) is None and core.l2.lookup(8192) is None


# -- reduced-delay technique -----------------------------------------------------


def test_row_table_is_max_over_lines():
    cfg = small_cfg(rows=64, lines=8)
    profile = generate_profile(cfg, 0.7, 1.0, 3)
    table = RowTrcdTable(profile, cfg.lines_per_row)
    for row in range(0, 64, 5):
        expected = max(profile.min_trcd_ps(0, 0, row, line)
                       for line in range(8))
        assert table.value_ps(0, 0, row) == expected


def test_weak_rows_enumeration_matches_threshold():
    cfg = small_cfg(rows=128, lines=8)
    profile = generate_profile(cfg, 0.8, 1.0, 3)
    table = RowTrcdTable(profile, cfg.lines_per_row)
    weak = set(table.weak_rows())
    for bg in range(cfg.bank_groups):
        for bank in range(cfg.banks_per_group):
            for row in range(cfg.rows_per_bank):
                expected = table.value_ps(bg, bank, row) > STRONG_THRESHOLD_PS
                assert ((bg, bank, row) in weak) == expected


@settings(max_examples=50)
@given(rows=st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3),
                               st.integers(0, 4095)),
                     min_size=0, max_size=200),
       m=st.integers(min_value=64, max_value=4096),
       k=st.integers(min_value=1, max_value=6),
       seed=st.integers(min_value=0, max_value=2**32))
def test_filter_has_no_false_negatives(rows, m, k, seed):
    from dramscale.util import mix
    filt = WeakRowFilter(m, k, [mix(seed, i) for i in range(k)])
    for bg, bank, row in rows:
        filt.insert(bg, bank, row)
    for bg, bank, row in rows:
        assert filt.query(bg, bank, row)


def test_filter_false_positive_rate_near_formula():
    # Brute-force count over a disjoint strong population.
    m, k, n = 4096, 4, 256
    from dramscale.util import mix
    filt = WeakRowFilter(m, k, [mix(9, i) for i in range(k)])
    for i in range(n):
        filt.insert(0, 0, i)
    probes = 20_000
    fp = sum(filt.query(1, 1, row) for row in range(probes))
    expected = (1 - math.exp(-k * n / m)) ** k
    assert abs(fp / probes - expected) / expected < 0.2


def test_trcd_for_row_safety_direction():
    cfg = small_cfg(rows=128, lines=8)
    profile = generate_profile(cfg, 0.7, 1.0, 3)
    table = RowTrcdTable(profile, cfg.lines_per_row)
    filt = build_weak_filter(table)
    weak = set(table.weak_rows())
    reduced = ns_to_ps("9.0")
    nominal = ns_to_ps("13.5")
    for bg in range(cfg.bank_groups):
        for bank in range(cfg.banks_per_group):
            for row in range(cfg.rows_per_bank):
                chosen = trcd_for_row(filt, bg, bank, row, reduced, nominal)
                if (bg, bank, row) in weak:
                    assert chosen == nominal        # never reduced on weak rows
                else:
                    assert chosen in (reduced, nominal)  # FP keeps nominal


def test_filter_dump_load_roundtrip():
    from dramscale.util import mix
    filt = WeakRowFilter(512, 3, [mix(4, i) for i in range(3)])
    for row in (1, 5, 99):
        filt.insert(0, 0, row)
    buf = io.StringIO()
    filt.dump(buf)
    buf.seek(0)
    loaded = WeakRowFilter.load(buf)
    assert loaded.m_bits == filt.m_bits
    assert loaded.bits == filt.bits
    for row in (1, 5, 99):
        assert loaded.query(0, 0, row)


# -- profiling ---------------------------------------------------------------------


def test_profile_chip_roundtrips_device_ladder():
    cfg = small_cfg(rows=16, lines=4)
    engine = make_engine(cfg, strong=0.7, seed=31, subarray_rows=8)
    ladder = sorted(set(engine.profile.ladder_ps))
    per_line = profile_chip(engine, trcd_values=ladder)
    for key, found in per_line.items():
        assert found == engine.profile.min_trcd_ps(*key)


def test_profile_chip_quantizes_up_with_coarser_ladder():
    cfg = small_cfg(rows=8, lines=4)
    engine = make_engine(cfg, strong=0.6, seed=13, subarray_rows=8)
    ladder = [ns_to_ps(v) for v in ("6.0", "7.5", "9.0", "10.5", "12.0", "13.5")]
    per_line = profile_chip(engine, trcd_values=ladder)
    for key, found in per_line.items():
        need = engine.profile.min_trcd_ps(*key)
        assert found == min(v for v in ladder if v >= need)


def test_heatmap_has_one_row_per_bank_row():
    cfg = small_cfg(rows=8, lines=4)
    engine = make_engine(cfg, strong=0.6, seed=13, subarray_rows=8)
    per_line = profile_chip(engine, trcd_values=sorted(engine.profile.ladder_ps))
    rows = row_table_from_profiling(per_line)
    csv = heatmap_csv(rows, cfg.banks_per_group)
    lines = csv.strip().splitlines()
    assert lines[0] == "bank,row,min_trcd_ns"
    assert len(lines) - 1 == cfg.banks_total * cfg.rows_per_bank
