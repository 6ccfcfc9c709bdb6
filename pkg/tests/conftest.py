from __future__ import annotations

from fractions import Fraction

import mpmath


def mpf_fraction(x) -> Fraction:
    """Exact rational value of an mpmath mpf (no decimal round-trip)."""
    sign, man, exp, _ = mpmath.mpf(x)._mpf_
    if man == 0:
        return Fraction(0)
    v = Fraction(man) * Fraction(2) ** exp
    return -v if sign else v
