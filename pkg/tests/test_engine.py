import pytest
from hypothesis import given, settings, strategies as st

from dramscale.device import RowData, generate_profile
from dramscale.engine import (
    BatchBuilder, CommandBatch, CommandEngine, dump_batch, parse_batch,
    rowclone_detect,
)
from dramscale.errors import BatchOrderError, StrictViolation
from dramscale.timing import (
    CommandKind, DramAddress, DramCommand, DramConfig, fresh_bank_states,
)


def small_cfg(rows=512, lines=8):
    return DramConfig(bank_groups=1, banks_per_group=2, rows_per_bank=rows,
                      columns_per_row=lines, row_size_bytes=lines * 64)


def make_engine(strong=1.0, clone=1.0, seed=7, cfg=None):
    cfg = cfg or small_cfg()
    profile = generate_profile(cfg, strong, clone, seed, subarray_rows=128)
    return CommandEngine(cfg, RowData(cfg, seed=seed), profile)


def act(row, bank=0):
    return DramCommand(CommandKind.ACT, DramAddress(0, bank, row))


def pre(row, bank=0):
    return DramCommand(CommandKind.PRE, DramAddress(0, bank, row))


def rd(row, col=0, bank=0):
    return DramCommand(CommandKind.RD, DramAddress(0, bank, row, col))


def test_builder_stages_relative_delays():
    builder = BatchBuilder()
    builder.stage(act(5), 0).stage(rd(5), 13500)
    b = builder.build()
    assert [off for _, off in b.entries] == [0, 13500]


def test_builder_rejects_equal_offsets():
    builder = BatchBuilder()
    builder.stage(act(5), 0).stage(rd(5), 13500)
    with pytest.raises(BatchOrderError):
        builder.stage(pre(5), 0)


def test_builder_rejects_empty_flush():
    with pytest.raises(BatchOrderError):
        BatchBuilder().build()


def test_flush_read_returns_row_bytes_and_elapsed():
    engine = make_engine()
    b = BatchBuilder().stage(act(5), 0).stage(rd(5, col=0), 13500).build()
    result = engine.flush(b, start_ps=0)
    # elapsed = last offset + tCL + burst = 13.5 + 13.5 + 6.0 ns
    assert result.elapsed_ps == 13500 + 13500 + 6000
    expected = engine.rowdata.read_line(DramAddress(0, 0, 5, 0))
    assert result.readback == [expected]
    assert engine.device_now_ps == 33000


def test_reduced_read_correct_when_line_is_strong():
    engine = make_engine(strong=1.0)
    b = CommandBatch(entries=((act(5), 0), (rd(5), 9000)), strict=False)
    result = engine.flush(b, start_ps=0)
    assert result.readback == [engine.rowdata.read_line(DramAddress(0, 0, 5, 0))]
    assert engine.stats.reduced_reads == [(DramAddress(0, 0, 5, 0), 9000, True)]


def test_reduced_read_corrupt_when_line_is_weak():
    engine = make_engine(strong=0.0)
    addr = DramAddress(0, 0, 5, 0)
    assert engine.profile.min_trcd_ps(0, 0, 5, 0) > 9000
    b = CommandBatch(entries=((act(5), 0), (rd(5), 9000)), strict=False)
    result = engine.flush(b, start_ps=0)
    good = engine.rowdata.read_line(addr)
    assert result.readback[0] != good
    # Deterministic garbage: flushing the same access again yields the same bytes.
    engine2 = make_engine(strong=0.0)
    result2 = engine2.flush(b, start_ps=0)
    assert result2.readback[0] == result.readback[0]


def test_strict_flush_aborts_without_side_effects():
    engine = make_engine()
    before_states = dict(engine.bank_states)
    before_row = bytes(engine.rowdata.row(0, 0, 5))
    b = CommandBatch(entries=((act(5), 0), (rd(5), 9000)), strict=True)
    with pytest.raises(StrictViolation) as err:
        engine.flush(b, start_ps=0)
    v = err.value.violations
    assert len(v) == 1 and v[0].parameter == "tRCD" and v[0].deficit_ps == 4500
    assert engine.bank_states == before_states
    assert bytes(engine.rowdata.row(0, 0, 5)) == before_row
    assert engine.device_now_ps == 0


def test_rowclone_detect_patterns():
    cfg = small_cfg()
    idiom = CommandBatch(entries=((act(1), 0), (pre(1), 3000), (act(2), 6000)),
                         strict=False)
    found = rowclone_detect(idiom, cfg)
    assert [(c.src_row, c.dst_row) for c in found] == [(1, 2)]

    legal = CommandBatch(entries=((act(1), 0), (pre(1), 40000), (act(2), 60000)),
                         strict=False)
    assert rowclone_detect(legal, cfg) == []

    chained = CommandBatch(entries=(
        (act(1), 0), (pre(1), 3000), (act(2), 6000),
        (pre(2), 9000), (act(3), 12000)), strict=False)
    assert [(c.src_row, c.dst_row) for c in rowclone_detect(chained, cfg)] == \
        [(1, 2), (2, 3)]


def test_rowclone_flush_copies_row_on_clonable_pair():
    engine = make_engine(clone=1.0)
    src = bytes(engine.rowdata.row(0, 0, 1))
    b = CommandBatch(entries=((act(1), 0), (pre(1), 3000), (act(2), 6000)),
                     strict=False)
    engine.flush(b, start_ps=0)
    assert bytes(engine.rowdata.row(0, 0, 2)) == src
    assert engine.stats.rowclone_success == 1
    assert engine.bank_states[(0, 0)].open_row == 2


def test_rowclone_flush_corrupts_on_unclonable_pair():
    engine = make_engine(clone=0.0)
    src = bytes(engine.rowdata.row(0, 0, 1))
    before = bytes(engine.rowdata.row(0, 0, 2))
    b = CommandBatch(entries=((act(1), 0), (pre(1), 3000), (act(2), 6000)),
                     strict=False)
    engine.flush(b, start_ps=0)
    after = bytes(engine.rowdata.row(0, 0, 2))
    assert after != src and after != before
    assert engine.stats.rowclone_fail == 1


def test_write_then_read_roundtrip():
    engine = make_engine()
    payload = bytes(range(64))
    wr = DramCommand(CommandKind.WR, DramAddress(0, 0, 3, 1), payload=payload)
    b = BatchBuilder().stage(act(3), 0).stage(wr, 13500).build()
    engine.flush(b)
    b2 = BatchBuilder().stage(rd(3, col=1), 50000).build(strict=False)
    result = engine.flush(b2)
    assert result.readback == [payload]


def test_ref_applies_to_all_banks():
    engine = make_engine()
    ref = DramCommand(CommandKind.REF)
    b = CommandBatch(entries=((ref, 0),), strict=True)
    engine.flush(b, start_ps=0)
    for state in engine.bank_states.values():
        assert state.last_ref_ps == 0
    assert engine.stats.command_counts["REF"] == 1
    assert engine.device_now_ps == engine.cfg.timing["tRFC"]


def test_flush_determinism():
    b = CommandBatch(entries=((act(1), 0), (pre(1), 3000), (act(2), 6000),
                              (rd(2), 25000)), strict=False)
    r1 = make_engine(strong=0.5, clone=0.5, seed=3).flush(b, start_ps=0)
    r2 = make_engine(strong=0.5, clone=0.5, seed=3).flush(b, start_ps=0)
    assert r1.readback == r2.readback
    assert r1.elapsed_ps == r2.elapsed_ps


@settings(max_examples=40, deadline=None)
@given(split_gap=st.integers(min_value=46000, max_value=200000),
       rows=st.lists(st.integers(min_value=0, max_value=63), min_size=2,
                     max_size=4, unique=True))
def test_batch_composition(split_gap, rows):
    # Executing a concatenated batch equals executing its halves back to back
    # with preserved bank state, offsets rebased.
    cfg = small_cfg()

    def access(row, at):
        return [(act(row), at), (rd(row), at + 13500),
                (pre(row), at + 13500 + 7500)]

    first = access(rows[0], 0)
    second = []
    base = first[-1][1] + split_gap
    for i, row in enumerate(rows[1:]):
        second.extend(access(row, base + i * 60000))

    whole = CommandBatch(entries=tuple(first + second), strict=False)
    engine_a = make_engine(cfg=cfg)
    res_whole = engine_a.flush(whole, start_ps=0)

    engine_b = make_engine(cfg=cfg)
    res_1 = engine_b.flush(CommandBatch(entries=tuple(first), strict=False),
                           start_ps=0)
    rebased = tuple((cmd, off - base) for cmd, off in second)
    res_2 = engine_b.flush(CommandBatch(entries=rebased, strict=False),
                           start_ps=base)
    assert res_whole.readback == res_1.readback + res_2.readback
    assert engine_a.device_now_ps == engine_b.device_now_ps
    assert res_whole.elapsed_ps == base + res_2.elapsed_ps
    assert engine_a.bank_states == engine_b.bank_states


def test_batch_trace_roundtrip():
    b = CommandBatch(entries=(
        (act(1), 0),
        (DramCommand(CommandKind.RD, DramAddress(0, 0, 1, 3),
                     override_trcd_ps=9000), 9000),
        (pre(1), 30000),
        (DramCommand(CommandKind.REF), 80000),
    ), strict=False)
    text = dump_batch(b)
    parsed = parse_batch(text, strict=False)
    assert len(parsed.entries) == len(b.entries)
    for (cmd_a, off_a), (cmd_b, off_b) in zip(b.entries, parsed.entries):
        assert off_a == off_b
        assert cmd_a.kind == cmd_b.kind
        assert cmd_a.override_trcd_ps == cmd_b.override_trcd_ps
        if cmd_a.addr is None:
            assert cmd_b.addr is None
        else:
            assert (cmd_a.addr.bank_group, cmd_a.addr.bank, cmd_a.addr.row) == \
                (cmd_b.addr.bank_group, cmd_b.addr.bank, cmd_b.addr.row)
