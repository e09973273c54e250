"""Per-domain emulation counters, critical mode, and response release tagging.

Three counters drive the whole simulation. The global counter ticks once per
substrate (FPGA) clock cycle. The processor counter tracks how many emulated
target-clock cycles the processor domain has lived through. The controller
counter tracks how much emulated time the memory controller domain has
accounted for, in the same target-cycle units.

Advancement rules, applied every global tick:

* processor behind controller (proc < mc): the processor emulates one cycle
  of the missing duration, in or out of critical mode;
* both equal, no unresolved requests, not critical: idle lockstep, both
  advance together;
* otherwise the processor counter is frozen (it may never overtake the
  controller while work is pending).

While the controller serves requests it holds critical mode, which locks the
processor at or below the controller counter. Responses carry a release tag:
the processor cycle at which the response may become visible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ProtocolError
from .util import ceil_div, cycles_for_ps, ps_for_cycles


@dataclass(frozen=True)
class DomainConfig:
    """The substrate/target frequency pair for one emulated domain."""

    name: str
    substrate_freq_hz: int
    target_freq_hz: int

    def __post_init__(self):
        if self.substrate_freq_hz <= 0 or self.target_freq_hz <= 0:
            raise ValueError("frequencies must be positive")

    @property
    def scale(self) -> float:
        return self.target_freq_hz / self.substrate_freq_hz


@dataclass(frozen=True)
class SchedLatencyModel:
    """How the controller's own decision latency is charged to emulated time.

    target-fixed: every scheduling decision costs `cycles` target cycles
    (models a hardware controller in the target system; used for validation).
    substrate-measured: the software controller's actual substrate cycles,
    scaled by the target/substrate frequency ratio (models what the raw
    platform would report). zero: idealized.
    """

    kind: str = "target-fixed"
    cycles: int = 20

    def __post_init__(self):
        if self.kind not in ("target-fixed", "substrate-measured", "zero"):
            raise ValueError(f"unknown scheduling latency model: {self.kind}")

    def target_cycles(self, substrate_cycles: int, domains: DomainConfig) -> int:
        if self.kind == "target-fixed":
            return self.cycles
        if self.kind == "substrate-measured":
            return ceil_div(substrate_cycles * domains.target_freq_hz,
                            domains.substrate_freq_hz)
        return 0


@dataclass
class ReleaseTag:
    release_at_proc_cycle: int


@dataclass
class TimeScaleState:
    global_counter: int = 0
    proc_counter: int = 0
    mc_counter: int = 0
    critical_mode: bool = False
    proc_gated: bool = False

    def copy(self) -> "TimeScaleState":
        return TimeScaleState(self.global_counter, self.proc_counter,
                              self.mc_counter, self.critical_mode,
                              self.proc_gated)

    def assert_safe(self):
        if self.critical_mode and self.proc_counter > self.mc_counter:
            raise ProtocolError(
                f"processor counter {self.proc_counter} overtook controller "
                f"counter {self.mc_counter} in critical mode")


def tag_request(state: TimeScaleState, req):
    """Stamp a newly arrived request with the current processor cycle and mark
    the processor domain gated until it resolves."""
    req.tag_cycle = state.proc_counter
    state.proc_gated = True
    return req


def enter_critical(state: TimeScaleState):
    state.critical_mode = True


def exit_critical(state: TimeScaleState, unresolved: int = 0):
    if unresolved:
        raise ProtocolError(f"cannot exit critical mode with {unresolved} "
                            "unresolved requests")
    state.critical_mode = False


def account_mc_work(state: TimeScaleState, device_elapsed_ps: int,
                    sched_substrate_cycles: int, domains: DomainConfig,
                    model: SchedLatencyModel) -> int:
    """Advance the controller counter by the emulated cost of one serviced
    request: the device execution time converted to target cycles (rounded
    up) plus the scheduling latency under the configured model. Returns the
    charge."""
    charge = cycles_for_ps(device_elapsed_ps, domains.target_freq_hz)
    charge += model.target_cycles(sched_substrate_cycles, domains)
    state.mc_counter += charge
    state.assert_safe()
    return charge


def release_ready(state: TimeScaleState, tag: ReleaseTag) -> bool:
    return state.proc_counter >= tag.release_at_proc_cycle


def proc_can_advance(state: TimeScaleState, unresolved: bool) -> bool:
    if state.proc_counter < state.mc_counter:
        return True
    return not state.critical_mode and not unresolved


def step_global(state: TimeScaleState, unresolved: bool = False) -> TimeScaleState:
    """Advance the reference timer one substrate cycle and move the other
    counters per the advancement rules."""
    advance(state, 1, unresolved)
    return state


def advance(state: TimeScaleState, ticks: int, unresolved: bool = False) -> TimeScaleState:
    """Equivalent to `ticks` consecutive step_global calls, provided the
    unresolved flag cannot change within the span (the run loop always picks
    spans with that property)."""
    if ticks < 0:
        raise ValueError("ticks must be non-negative")
    state.global_counter += ticks
    remaining = ticks
    if state.proc_counter < state.mc_counter:
        catchup = min(remaining, state.mc_counter - state.proc_counter)
        state.proc_counter += catchup
        remaining -= catchup
    if remaining and not state.critical_mode and not unresolved \
            and state.proc_counter == state.mc_counter:
        state.proc_counter += remaining
        state.mc_counter += remaining
    state.assert_safe()
    return state


def mc_time_ps(state: TimeScaleState, domains: DomainConfig) -> int:
    """The controller counter expressed as emulated time."""
    return ps_for_cycles(state.mc_counter, domains.target_freq_hz)
