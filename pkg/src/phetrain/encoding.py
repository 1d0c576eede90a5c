"""Decimal fixed-point codec and scale bookkeeping.

Every protocol value travels as an integer mantissa together with a decimal
scale s, representing mantissa / 10^s.  The default working scale is 2.
Negative mantissas live in Z_N as N - |m| with the usual N/2 threshold on
decode.  Model coefficients are split into a non-negative integer part and
a two-digit fractional part so that ciphertext exponentiation only ever
needs non-negative integer exponents; the fractional product is recombined
through a 100th root.
"""

import math
from dataclasses import dataclass

from . import phe

DEFAULT_SCALE = 2
BLIND_SCALE = 4  # scale used for encoded exponential blinding factors e^r
FRAC_ROOT = 100

# floor(log10 N) for the standard key profiles; other sizes are derived.
_KEY_DIGITS = {512: 154, 768: 231, 1024: 308, 1536: 462, 2048: 616,
               3072: 924, 4096: 1232, 6144: 1849, 8192: 2466}


class BudgetError(Exception):
    """A mantissa or scale does not fit the key's decimal digit budget."""


@dataclass(frozen=True)
class FixedPoint:
    mantissa: int
    scale: int

    def to_float(self):
        return self.mantissa / 10 ** self.scale


@dataclass
class ScaledCiphertext:
    """A ciphertext plus the decimal scale of its (signed) plaintext mantissa."""

    ct: object  # PaillierCiphertext | CloudRsaCiphertext
    scale: int


@dataclass(frozen=True)
class CoeffDecomposition:
    sign: int       # +1 or -1
    int_part: int   # >= 0
    frac_part: int  # in [0, 100)

    def magnitude(self):
        return self.int_part + self.frac_part / FRAC_ROOT


def trunc_div(a, b):
    """Integer division truncating toward zero (Python // floors)."""
    q = abs(a) // b
    return q if a >= 0 else -q


def round_div(a, b):
    """Integer division rounding half away from zero.

    Used for the per-iteration coefficient refresh: truncating there
    systematically biases every coefficient toward zero by up to one
    mantissa unit per iteration, which stalls the margin trainer's SGD
    equilibrium; symmetric rounding removes the bias.
    """
    q = (abs(a) + b // 2) // b
    return q if a >= 0 else -q


def fx_encode(v, scale=DEFAULT_SCALE):
    """Truncate v toward zero at the given number of decimal digits.

    A small epsilon absorbs binary float error on values that are exact
    decimals (0.29 * 100 == 28.999... must encode as 29, not 28).
    """
    mag = int(math.floor(abs(v) * 10 ** scale + 1e-9))
    return mag if v >= 0 else -mag


def fx_decode(mantissa, scale):
    return mantissa / 10 ** scale


def to_residue(m, n):
    """Signed mantissa -> residue mod n; requires |m| < n/2."""
    if 2 * abs(m) >= n:
        raise BudgetError(f"|{m}| >= N/2, signed encoding overflows")
    return m % n


def from_residue(r, n):
    """Residue -> signed mantissa using the N/2 threshold."""
    return r if 2 * r < n else r - n


def decompose_coeff(theta_j):
    """Split a coefficient into sign, integer part and two-digit fraction.

    Rounds (half away from zero) to two decimals: the recombination target
    is the coefficient as written with two decimal places.
    """
    sign = 1 if theta_j >= 0 else -1
    hundredths = int(math.floor(abs(theta_j) * 100 + 0.5))
    return CoeffDecomposition(sign=sign, int_part=hundredths // 100,
                              frac_part=hundredths % 100)


def key_digits(bits):
    if bits in _KEY_DIGITS:
        return _KEY_DIGITS[bits]
    return int(bits * math.log10(2))


def modulus_digits(n):
    return len(str(n)) - 1


def check_scale_budget(scale, n):
    """Send-time guard: the running decimal scale must fit the modulus.

    The plaintext magnitude of a scale-s value is about 10^s times an O(1)
    quantity, with slack for exponential bases up to e (one extra digit per
    four scale digits) plus headroom for blinding factors.
    """
    budget = modulus_digits(n)
    required = scale + scale // 4 + 8
    if required > budget:
        raise BudgetError(
            f"scale {scale} needs ~{required} digits, key provides {budget}")


def budget_check_lr(d, theta_l1_bound, key_bits):
    """Pre-flight guard for the power function's digit consumption.

    Admits a run when (theta_l1_bound + d - 1) * 2 stays under the key's
    decimal digits.  Returns (passed, required_digits, key_digits).
    """
    digits = key_digits(key_bits)
    required = (theta_l1_bound + d - 1) * 2
    return required < digits, required, digits


def rescale_ct(pk, sc, t):
    """Multiply the plaintext mantissa by 10^t, raising the scale by t."""
    if t < 0:
        raise ValueError("rescale factor must be non-negative")
    if t == 0:
        return sc
    out = phe.paillier_scalar_pow(pk, sc.ct, 10 ** t)
    new_scale = sc.scale + t
    check_scale_budget(new_scale, pk.n)
    return ScaledCiphertext(ct=out, scale=new_scale)


def ensure_coprime(m, n):
    """Nudge a mantissa off a shared factor with N (negligible at real sizes)."""
    while phe.gcd(m, n) != 1:
        m += 1
    return m
