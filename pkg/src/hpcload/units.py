"""Half-up rounding and unit conversions used in rendered text."""

from __future__ import annotations

from decimal import ROUND_HALF_UP, Decimal


def half_up(value: float, places: int = 0) -> Decimal:
    # repr() gives the shortest decimal that round-trips, so 0.94 stays 0.94
    exp = Decimal(1).scaleb(-places)
    return Decimal(repr(float(value))).quantize(exp, rounding=ROUND_HALF_UP)


def fixed(value: float, places: int) -> str:
    return f"{half_up(value, places):.{places}f}"


def percent(fraction: float) -> int:
    """Fraction to a whole percent: 0.945 -> 95."""
    return int((Decimal(repr(float(fraction))) * 100).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def gib(mib: int) -> str:
    """MiB as GiB with one decimal, half-up."""
    return f"{(Decimal(mib) / 1024).quantize(Decimal('0.1'), rounding=ROUND_HALF_UP):.1f}"
