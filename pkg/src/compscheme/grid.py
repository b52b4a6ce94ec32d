"""Exact rational constants derived from the accuracy parameter eps.

Everything downstream is decided with :class:`fractions.Fraction` or with
integers obtained by scaling every job-size class by a common factor, so no
threshold comparison ever touches floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Union

from .errors import InputError

RationalLike = Union[Fraction, int, str]

__all__ = [
    "EpsilonConfig",
    "make_config",
    "pow_eps",
    "grid_round_up",
    "grid_index",
    "grid_value",
    "parse_rational",
    "format_rational",
    "exponent_of",
]


def parse_rational(value: RationalLike) -> Fraction:
    """Parse ``"p/q"``, an int or a Fraction. Floats are refused."""
    if isinstance(value, bool) or isinstance(value, float):
        raise InputError(f"refusing inexact value {value!r}; pass 'p/q'")
    if isinstance(value, (Fraction, int)):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        if not text or any(ch in text for ch in ".eE"):
            raise InputError(f"not a rational 'p/q' string: {value!r}")
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"not a rational 'p/q' string: {value!r}") from exc
    raise InputError(f"cannot interpret {value!r} as a rational")


def format_rational(value: Fraction | int) -> str:
    """Serialise as ``"p/q"`` (always with a denominator, ``"2/1"`` for 2)."""
    v = Fraction(value)
    return f"{v.numerator}/{v.denominator}"


def _smallest_exponent(base: Fraction, target: Fraction) -> int:
    """Smallest integer j >= 0 with base**j >= target (base > 1)."""
    j = 0
    power = Fraction(1)
    while power < target:
        power *= base
        j += 1
    return j


@dataclass(frozen=True)
class EpsilonConfig:
    """All grid constants for one (eps, m) pair.

    Exponent positions: a trimmed-state or state vector has ``tuple_len``
    coordinates; position ``i`` counts jobs of relative size
    ``(1+eps)**(i - c0)``. Position 0 is the small-job coordinate.
    """

    eps: Fraction
    m: int
    c0: int
    omega: int
    mu0: int
    r_exponents: tuple[int, ...]
    weights: tuple[int, ...] = field(repr=False)
    scale: int = field(repr=False)

    @cached_property
    def base(self) -> Fraction:
        return 1 + self.eps

    @property
    def tuple_len(self) -> int:
        return self.omega + self.c0 + 1

    @property
    def k_max(self) -> int:
        """Shift count beyond which huge jobs are indistinguishable."""
        return -(-self.mu0 // self.omega)

    @cached_property
    def r_set(self) -> tuple[Fraction, ...]:
        return (Fraction(0),) + tuple(pow_eps(self, j) for j in self.r_exponents)

    @property
    def zeta(self) -> int:
        return len(self.r_exponents) + 1

    @cached_property
    def small_unit(self) -> Fraction:
        return pow_eps(self, -self.c0)

    @property
    def band_lo(self) -> Fraction:
        return Fraction(1)

    @cached_property
    def band_top(self) -> Fraction:
        """(1+eps)**omega: upper edge of the canonical band."""
        return pow_eps(self, self.omega)

    @cached_property
    def band_hi(self) -> Fraction:
        return self.band_top + 2 * self.small_unit

    @cached_property
    def state_cap(self) -> Fraction:
        return 4 * self.band_top + 2 * self.small_unit

    @property
    def grid_steps(self) -> int:
        return math.ceil(Fraction(19) / self.eps)

    @cached_property
    def delta_grid(self) -> tuple[Fraction, ...]:
        return tuple(1 + k * self.eps for k in range(self.grid_steps + 1))

    # Integer-scaled quantities: weights[i] == scale * (1+eps)**(i - c0).
    @property
    def cap_scaled(self) -> int:
        return 4 * self.weights[-1] + 2 * self.weights[0]

    def to_json(self) -> dict:
        return {"eps": format_rational(self.eps), "m": self.m}


def make_config(eps: RationalLike, m: int) -> EpsilonConfig:
    """Derive c0, omega, mu0 and the job alphabet R for a rational eps."""
    eps = parse_rational(eps)
    if not (0 < eps <= 1):
        raise InputError(f"eps must lie in (0, 1], got {eps}")
    if isinstance(m, bool) or not isinstance(m, int) or m < 2:
        raise InputError(f"m must be an integer >= 2, got {m!r}")
    base = 1 + eps
    c0 = _smallest_exponent(base, 1 / eps)
    omega = _smallest_exponent(base, Fraction(3))
    mu0 = _smallest_exponent(base, 4 * base ** (omega + c0 + 1))
    k_max = -(-mu0 // omega)
    top = k_max * omega + omega - 1
    r_exponents = tuple(range(-c0, top + 1))
    a, b = base.numerator, base.denominator
    length = omega + c0 + 1
    weights = tuple(a**i * b ** (length - 1 - i) for i in range(length))
    scale = a**c0 * b**omega
    return EpsilonConfig(
        eps=eps,
        m=m,
        c0=c0,
        omega=omega,
        mu0=mu0,
        r_exponents=r_exponents,
        weights=weights,
        scale=scale,
    )


def pow_eps(cfg: EpsilonConfig, j: int) -> Fraction:
    """Exact (1+eps)**j for any integer j."""
    return _pow(cfg.base, j)


@lru_cache(maxsize=65536)
def _pow(base: Fraction, j: int) -> Fraction:
    return base**j


def exponent_of(cfg: EpsilonConfig, x: RationalLike) -> int:
    """Return j with (1+eps)**j == x exactly, or raise InputError."""
    x = parse_rational(x)
    if x <= 0:
        raise InputError(f"{x} is not a positive power of 1+eps")
    base = cfg.base
    guess = round(
        (math.log(x.numerator) - math.log(x.denominator))
        / (math.log(base.numerator) - math.log(base.denominator))
    )
    for j in (guess, guess - 1, guess + 1):
        if _pow(base, j) == x:
            return j
    raise InputError(f"{x} is not on the (1+eps) grid for eps={cfg.eps}")


def grid_index(cfg: EpsilonConfig, r: Fraction) -> int:
    """Index k of the smallest grid value 1 + k*eps that is >= r."""
    if r < 1 or r > grid_value(cfg, cfg.grid_steps):
        raise ValueError(f"ratio {r} outside the grid range [1, 20]")
    k = math.ceil((Fraction(r) - 1) / cfg.eps)
    return k


def grid_value(cfg: EpsilonConfig, k: int) -> Fraction:
    return 1 + k * cfg.eps


def grid_round_up(cfg: EpsilonConfig, r: RationalLike) -> Fraction:
    """Round a ratio in [1, 20] up onto the Delta grid."""
    return grid_value(cfg, grid_index(cfg, parse_rational(r)))
