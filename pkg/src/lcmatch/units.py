"""SI quantity parsing for command-line input (``37nH``, ``3.28GHz``, ``11.74k``)."""

from __future__ import annotations

import re
from decimal import Decimal

from .errors import ConfigError

PREFIXES = {
    "f": -15,
    "p": -12,
    "n": -9,
    "u": -6,
    "µ": -6,
    "μ": -6,
    "m": -3,
    "k": 3,
    "M": 6,
    "G": 9,
    "T": 12,
}
UNIT_NAMES = ("Hz", "Ohm", "ohm", "Ω", "H", "F", "S", "V", "A", "W", "rad")

_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_PATTERN = re.compile(
    rf"^\s*({_NUMBER})\s*([{''.join(PREFIXES)}]?)\s*({'|'.join(UNIT_NAMES)})?\s*$"
)


def parse_quantity(text, unit=None) -> float:
    """Parse a number with an optional SI prefix and unit into SI.

    A lone ``m`` is milli and ``M`` mega. If ``unit`` is given, a unit in the
    text must match it (``ohm``, ``Ohm`` and ``Ω`` are equivalent).

    >>> parse_quantity("37nH")
    3.7e-08
    >>> parse_quantity("11.74k", "Ohm")
    11740.0
    """
    if isinstance(text, (int, float)):
        return float(text)
    m = _PATTERN.match(str(text))
    if not m:
        raise ConfigError(f"cannot parse quantity {text!r}")
    value, prefix, found = m.groups()
    if found and unit is not None and _canonical(found) != _canonical(unit):
        raise ConfigError(f"expected a quantity in {unit}, got {text!r}")
    # decimal scaling keeps 63fF at exactly 6.3e-14
    return float(Decimal(value).scaleb(PREFIXES.get(prefix, 0)))


def _canonical(u):
    return "Ohm" if u in ("Ohm", "ohm", "Ω") else u
