"""Private multiprecision context.

Generated Besicovitch families span scales far outside the float64 exponent
range, so they are stored as mpmath numbers. A dedicated context keeps the
working precision independent of whatever the caller does with ``mpmath.mp``.
"""

import mpmath
from mpmath import libmp

PREC = 192

ctx = mpmath.MPContext()
ctx.prec = PREC

# digits needed for a lossless decimal round trip at PREC bits
REPR_DPS = libmp.repr_dps(PREC)


def is_wide(x) -> bool:
    return isinstance(x, ctx.mpf) or type(x).__name__ == "mpf"


def to_str(x) -> str:
    return ctx.nstr(ctx.mpf(x), REPR_DPS, strip_zeros=True)
