"""Coefficient fields.

A Hamiltonian carries one of three scalar types and every algebraic
operation stays inside it:

``RationalField``
    exact Gaussian rationals (sympy ``QQ_I``, gmpy2-backed);
``FloatField``
    binary64 ``complex`` with an absolute zero threshold;
``MPField``
    mpmath ``mpc`` at a fixed binary precision.

Real-valued data such as frequencies are carried by the matching real type
(``Fraction``, ``float``, ``mpf``).
"""
from __future__ import annotations

import math
from fractions import Fraction

import mpmath
from sympy.polys.domains import QQ_I


class RationalField:
    name = "rational"
    exact = True

    def __init__(self):
        self.zero = QQ_I(0)
        self.one = QQ_I(1)
        self.i = QQ_I(0, 1)
        # skips the per-call domain conversion of the regular constructor
        self._new = type(self.zero).new

    def __eq__(self, other):
        return isinstance(other, RationalField)

    def __hash__(self):
        return hash(self.name)

    def __repr__(self):
        return "RationalField()"

    def convert(self, x):
        if isinstance(x, type(self.zero)):
            return x
        if isinstance(x, complex):
            return QQ_I(Fraction(x.real), Fraction(x.imag))
        if isinstance(x, tuple):
            return QQ_I(Fraction(x[0]), Fraction(x[1]))
        if isinstance(x, float):
            return QQ_I(Fraction(x), 0)
        return QQ_I(Fraction(x), 0)

    def real(self, x):
        if isinstance(x, Fraction):
            return x
        if isinstance(x, float):
            return Fraction(x)
        return Fraction(x)

    def conj(self, c):
        return self._new(c.x, -c.y)

    def is_zero(self, c):
        return not c

    def real_is_zero(self, w):
        return w == 0

    def modulus(self, c):
        return math.hypot(float(c.x), float(c.y))

    def re_im(self, c):
        return Fraction(int(c.x.numerator), int(c.x.denominator)), Fraction(
            int(c.y.numerator), int(c.y.denominator)
        )

    def imag_part(self, c):
        return Fraction(int(c.y.numerator), int(c.y.denominator))

    def over_i(self, c, w):
        """c / (i w) for real w."""
        return c * QQ_I(0, -1 / Fraction(w))

    def format_real(self, x):
        x = Fraction(x)
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"

    def parse_real(self, text):
        return Fraction(text)

    def label(self):
        return "rational"


class FloatField:
    name = "f64"
    exact = False

    def __init__(self, threshold=1e-300):
        self.threshold = float(threshold)
        self.zero = 0j
        self.one = 1 + 0j
        self.i = 1j

    def __eq__(self, other):
        return isinstance(other, FloatField)

    def __hash__(self):
        return hash(self.name)

    def __repr__(self):
        return f"FloatField(threshold={self.threshold!r})"

    def convert(self, x):
        if isinstance(x, tuple):
            return complex(float(x[0]), float(x[1]))
        if hasattr(x, "x") and hasattr(x, "y"):  # QQ_I element
            return complex(float(x.x), float(x.y))
        return complex(x)

    def real(self, x):
        return float(x)

    def conj(self, c):
        return c.conjugate()

    def is_zero(self, c):
        return abs(c) <= self.threshold

    def real_is_zero(self, w):
        return w == 0.0

    def modulus(self, c):
        return abs(c)

    def re_im(self, c):
        return c.real, c.imag

    def imag_part(self, c):
        return c.imag

    def over_i(self, c, w):
        return c * complex(0.0, -1.0 / w)

    def format_real(self, x):
        return repr(float(x))

    def parse_real(self, text):
        if "/" in text:
            return float(Fraction(text))
        return float(text)

    def label(self):
        return "f64"


class MPField:
    exact = False

    def __init__(self, bits=113, threshold=0):
        self.bits = int(bits)
        self.ctx = mpmath.MPContext()
        self.ctx.prec = self.bits
        self.threshold = self.ctx.mpf(threshold)
        self.zero = self.ctx.mpc(0)
        self.one = self.ctx.mpc(1)
        self.i = self.ctx.mpc(0, 1)
        self.name = f"mp:{self.bits}"

    def __eq__(self, other):
        return isinstance(other, MPField) and other.bits == self.bits

    def __hash__(self):
        return hash(self.name)

    def __repr__(self):
        return f"MPField(bits={self.bits})"

    def convert(self, x):
        ctx = self.ctx
        if isinstance(x, tuple):
            return ctx.mpc(self.real(x[0]), self.real(x[1]))
        if hasattr(x, "x") and hasattr(x, "y"):
            return ctx.mpc(self.real(Fraction(int(x.x.numerator), int(x.x.denominator))),
                           self.real(Fraction(int(x.y.numerator), int(x.y.denominator))))
        if isinstance(x, Fraction):
            return ctx.mpc(self.real(x))
        return ctx.mpc(x)

    def real(self, x):
        if isinstance(x, Fraction):
            return self.ctx.mpf(x.numerator) / x.denominator
        return self.ctx.mpf(x)

    def conj(self, c):
        return c.conjugate()

    def is_zero(self, c):
        return abs(c) <= self.threshold

    def real_is_zero(self, w):
        return w == 0

    def modulus(self, c):
        return abs(c)

    def re_im(self, c):
        return c.real, c.imag

    def imag_part(self, c):
        return c.imag

    def over_i(self, c, w):
        return c * self.ctx.mpc(0, -1 / self.real(w))

    def format_real(self, x):
        return mpmath.nstr(self.real(x), int(self.bits * 0.302) + 3, strip_zeros=True)

    def parse_real(self, text):
        if "/" in text:
            return self.real(Fraction(text))
        return self.ctx.mpf(text)

    def label(self):
        return self.name


RATIONAL = RationalField()
F64 = FloatField()


def field_from_label(text):
    """Parse ``rational``, ``f64`` or ``mp:<bits>``."""
    text = text.strip()
    if text == "rational":
        return RATIONAL
    if text in ("f64", "float", "float64"):
        return F64
    if text.startswith("mp:"):
        return MPField(int(text[3:]))
    raise ValueError(f"unknown precision {text!r}")
