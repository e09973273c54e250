import pytest
from hypothesis import given, settings, strategies as st

from dramscale.errors import IllegalSequence
from dramscale.timing import (
    BankState, CommandKind, DramAddress, DramCommand, DramConfig, Violation,
    apply_command, check_batch_legality, earliest_legal_issue,
    fresh_bank_states, ns_to_ps, ps_to_ns_str,
)
from dramscale.engine import CommandBatch


CFG = DramConfig()
ADDR = DramAddress(0, 0, 7, 0)


def act(row=7, bg=0, bank=0):
    return DramCommand(CommandKind.ACT, DramAddress(bg, bank, row))


def pre(row=7, bg=0, bank=0):
    return DramCommand(CommandKind.PRE, DramAddress(bg, bank, row))


def rd(row=7, col=0, override=None):
    return DramCommand(CommandKind.RD, DramAddress(0, 0, row, col),
                       override_trcd_ps=override)


def batch(*entries):
    return CommandBatch(entries=tuple(entries), strict=False)


def test_ns_to_ps_exact():
    assert ns_to_ps("13.5") == 13500
    assert ns_to_ps(9.0) == 9000
    assert ns_to_ps(7800) == 7_800_000
    with pytest.raises(ValueError):
        ns_to_ps("0.0001")


def test_ps_to_ns_str_roundtrip():
    assert ps_to_ns_str(13500) == "13.5"
    assert ps_to_ns_str(9000) == "9.0"
    assert ps_to_ns_str(8085) == "8.085"


def test_default_config_matches_platform():
    assert CFG.bank_groups == 4
    assert CFG.banks_per_group == 4
    assert CFG.rows_per_bank == 32768
    assert CFG.data_rate == 1333
    assert CFG.timing["tRCD"] == 13500
    assert CFG.timing["tREFI"] == ns_to_ps(7800)
    assert CFG.timing["tREFW"] == ns_to_ps(64_000_000)
    assert CFG.tCK_ps == 1500
    assert CFG.burst_ps == 6000
    assert CFG.row_size_bytes == CFG.columns_per_row * CFG.device_burst_bytes


def test_config_rejects_bad_geometry():
    with pytest.raises(ValueError):
        DramConfig(bank_groups=3)
    with pytest.raises(ValueError):
        DramConfig(row_size_bytes=8000)


def test_config_rejects_trc_below_ras_plus_rp():
    timing = dict(CFG.timing)
    timing["tRC"] = timing["tRAS"] + timing["tRP"] - 1
    with pytest.raises(ValueError):
        DramConfig(timing=timing)


def test_act_after_pre_waits_trp():
    state = BankState(last_pre_ps=0)
    assert earliest_legal_issue(state, act(), CFG, now_ps=0) == 13500
    assert earliest_legal_issue(state, act(), CFG, now_ps=20000) == 20000


def test_rd_gated_by_trcd():
    state = apply_command(BankState(), act(), 0, CFG)
    assert earliest_legal_issue(state, rd(), CFG, now_ps=10000) == 13500


def test_act_to_open_bank_is_illegal():
    state = apply_command(BankState(), act(), 0, CFG)
    with pytest.raises(IllegalSequence):
        earliest_legal_issue(state, act(row=9), CFG, now_ps=100000)


def test_rd_to_closed_bank_is_illegal():
    with pytest.raises(IllegalSequence):
        earliest_legal_issue(BankState(), rd(), CFG, now_ps=0)


def test_rd_to_wrong_row_is_illegal():
    state = apply_command(BankState(), act(row=3), 0, CFG)
    with pytest.raises(IllegalSequence):
        earliest_legal_issue(state, rd(row=4), CFG, now_ps=100000)


def test_apply_act_opens_row():
    state = apply_command(BankState(), act(row=7), 20000, CFG)
    assert state.open_row == 7
    assert state.last_act_ps == 20000


def test_apply_pre_closes_row():
    state = apply_command(BankState(), act(), 20000, CFG)
    state = apply_command(state, pre(), 50000, CFG)
    assert state.open_row is None
    assert state.last_pre_ps == 50000


def test_ref_advances_deadline_and_requires_precharged():
    ref = DramCommand(CommandKind.REF)
    state = BankState(refresh_deadline_ps=CFG.timing["tREFI"])
    after = apply_command(state, ref, 1000, CFG)
    assert after.refresh_deadline_ps == 2 * CFG.timing["tREFI"]
    assert after.last_ref_ps == 1000
    opened = apply_command(BankState(), act(), 0, CFG)
    with pytest.raises(IllegalSequence):
        apply_command(opened, ref, 100000, CFG)


def test_override_trcd_replaces_gate():
    state = apply_command(BankState(), act(), 0, CFG)
    assert earliest_legal_issue(state, rd(override=9000), CFG, 0) == 9000


def test_legal_batch_has_no_violations():
    b = batch((act(), 0), (rd(), 13500))
    assert check_batch_legality(b, fresh_bank_states(CFG), CFG) == []


def test_trcd_deficit_reported():
    b = batch((act(), 0), (rd(), 9000))
    violations = check_batch_legality(b, fresh_bank_states(CFG), CFG)
    assert violations == [Violation(index=1, parameter="tRCD", deficit_ps=4500)]
    assert violations[0].deficit_ns == 4.5


def test_rowclone_idiom_violates_tras_and_trp():
    # Hand-derived from the default DDR4 values: the PRE lands 3 ns after the
    # ACT (tRAS 32.5 -> 29.5 short) and the second ACT 3 ns after the PRE
    # (tRP 13.5 -> 10.5 short). The second ACT is also inside tRC.
    b = batch((act(row=1), 0), (pre(row=1), 3000), (act(row=2), 6000))
    violations = check_batch_legality(b, fresh_bank_states(CFG), CFG)
    by_param = {(v.parameter, v.index): v.deficit_ps for v in violations}
    assert by_param[("tRAS", 1)] == ns_to_ps("32.5") - 3000
    assert by_param[("tRP", 2)] == ns_to_ps("13.5") - (6000 - 3000)
    assert set(p for p, _ in by_param) <= {"tRAS", "tRP", "tRC"}


@given(now=st.integers(min_value=0, max_value=10**8),
       later=st.integers(min_value=0, max_value=10**8))
def test_earliest_legal_issue_monotone_in_now(now, later):
    state = BankState(last_pre_ps=0, last_act_ps=None)
    lo, hi = sorted((now, later))
    t_lo = earliest_legal_issue(state, act(), CFG, lo)
    t_hi = earliest_legal_issue(state, act(), CFG, hi)
    assert t_lo <= t_hi
    assert t_hi >= hi


@given(act_time=st.integers(min_value=0, max_value=10**7))
def test_rd_never_before_act_plus_trcd(act_time):
    state = apply_command(BankState(), act(), act_time, CFG)
    t = earliest_legal_issue(state, rd(), CFG, now_ps=0)
    assert t >= act_time + CFG.timing["tRCD"]


@given(act_time=st.integers(min_value=0, max_value=10**7),
       override=st.integers(min_value=1, max_value=13500))
def test_override_never_before_act_plus_override(act_time, override):
    state = apply_command(BankState(), act(), act_time, CFG)
    t = earliest_legal_issue(state, rd(override=override), CFG, now_ps=0)
    assert t == act_time + override


@settings(max_examples=50)
@given(st.integers(min_value=0, max_value=10**6))
def test_issue_at_earliest_then_requery_respects_binding_parameter(start):
    # Issue a RD at its earliest legal time, then the next RD of the same
    # kind must wait at least the column-to-column gap.
    state = apply_command(BankState(), act(), start, CFG)
    t1 = earliest_legal_issue(state, rd(), CFG, start)
    state = apply_command(state, rd(), t1, CFG)
    t2 = earliest_legal_issue(state, rd(), CFG, t1)
    assert t2 >= t1 + CFG.timing["tCCD"]


def test_pre_waits_for_write_recovery():
    state = apply_command(BankState(), act(), 0, CFG)
    wr = DramCommand(CommandKind.WR, DramAddress(0, 0, 7, 0), payload=b"x" * 64)
    state = apply_command(state, wr, 13500, CFG)
    t = earliest_legal_issue(state, pre(), CFG, 13500)
    # write recovery: tCL + burst + tWR after the WR issue
    assert t == 13500 + 13500 + 6000 + 15000
