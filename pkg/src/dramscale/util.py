"""Small numeric helpers shared across the simulator."""

from __future__ import annotations

MASK64 = (1 << 64) - 1
PS_PER_SECOND = 10**12


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def splitmix64(x: int) -> int:
    """One round of the splitmix64 mixer (deterministic, platform independent)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix(seed: int, *values: int) -> int:
    """Fold integers into a 64-bit hash. Used wherever seeded decisions are needed."""
    h = splitmix64(seed & MASK64)
    for v in values:
        h = splitmix64(h ^ (v & MASK64))
    return h


def unit_interval(h: int) -> float:
    """Map a 64-bit hash onto [0, 1)."""
    return (h >> 11) / float(1 << 53)


def cycles_for_ps(ps: int, freq_hz: int) -> int:
    """Clock cycles covering a picosecond duration, rounded up.

    Rounding up guarantees an emulated completion never precedes the
    physical one.
    """
    return ceil_div(ps * freq_hz, PS_PER_SECOND)


def ps_for_cycles(cycles: int, freq_hz: int) -> int:
    return (cycles * PS_PER_SECOND) // freq_hz
