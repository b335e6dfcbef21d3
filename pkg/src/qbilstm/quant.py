"""Fixed-point quantization grids and binarization.

Quantized values are carried as ordinary float64 numbers that sit exactly on
a dyadic grid ``{min, min + 2**-f, ..., max}``.  For the bit-widths used here
(at most 16) every grid point, and every product of two grid points, is
exactly representable, so grid membership can be checked with ``==``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError, InvalidBitwidthError

#: Integer bits (sign included) of the in-memory cell-state format.  With the
#: default 8-bit cell this gives f=4 and a range of [-8, 7.9375].
CELL_INTEGER_BITS = 4

#: Largest bit-width accepted by :class:`PrecisionConfig`.  Keeps every
#: pre-activation accumulation exact in float64.
MAX_BITS = 16


@dataclass(frozen=True)
class QuantSpec:
    k: int
    f: int
    min: float
    max: float
    signed: bool

    @property
    def step(self) -> float:
        return math.ldexp(1.0, -self.f)

    @property
    def code_min(self) -> int:
        return int(math.ldexp(self.min, self.f))

    @property
    def code_max(self) -> int:
        return int(math.ldexp(self.max, self.f))

    @property
    def levels(self) -> int:
        """Number of representable values."""
        return self.code_max - self.code_min + 1

    def contains(self, value: float) -> bool:
        """Exact grid-membership test."""
        scaled = math.ldexp(value, self.f)
        return scaled == math.floor(scaled) and self.min <= value <= self.max


@dataclass(frozen=True)
class BinaryWeightSpec:
    """Sign binarization scaled by ``1/sqrt(H + I)``."""

    H: int
    I: int

    def __post_init__(self):
        if self.H < 1 or self.I < 1:
            raise InvalidBitwidthError(
                f"binary weight scaling needs H >= 1 and I >= 1, got H={self.H}, I={self.I}"
            )

    @property
    def scaling_factor(self) -> float:
        return 1.0 / math.sqrt(self.H + self.I)


@dataclass(frozen=True)
class BinaryActivationSpec:
    """Plain sign binarization to {-1, +1}."""


QuantPolicy = Union[QuantSpec, BinaryWeightSpec, BinaryActivationSpec]


def make_signed_spec(k: int) -> QuantSpec:
    if k < 2:
        raise InvalidBitwidthError(
            f"signed grid needs k >= 2 (use binarization for 1 bit), got k={k}"
        )
    f = k - 1
    return QuantSpec(k=k, f=f, min=-1.0, max=1.0 - math.ldexp(1.0, -f), signed=True)


def make_unsigned_spec(k: int) -> QuantSpec:
    if k < 1:
        raise InvalidBitwidthError(f"unsigned grid needs k >= 1, got k={k}")
    return QuantSpec(k=k, f=k, min=0.0, max=1.0 - math.ldexp(1.0, -k), signed=False)


def fixed_point_spec(k: int, f: int) -> QuantSpec:
    """Signed two's-complement grid with ``k - f`` integer bits (sign included).

    ``fixed_point_spec(k, k - 1)`` is the same grid as ``make_signed_spec(k)``.
    """
    if k < 1 or f < 0 or f > k - 1:
        raise InvalidBitwidthError(f"need k >= 1 and 0 <= f <= k-1, got k={k}, f={f}")
    half_range = math.ldexp(1.0, k - f - 1)
    return QuantSpec(k=k, f=f, min=-half_range, max=half_range - math.ldexp(1.0, -f), signed=True)


def cell_spec(bits: int = 8) -> QuantSpec:
    """Grid of the in-memory cell state."""
    if bits < CELL_INTEGER_BITS:
        raise InvalidBitwidthError(
            f"cell state needs at least {CELL_INTEGER_BITS} bits, got {bits}"
        )
    return fixed_point_spec(bits, bits - CELL_INTEGER_BITS)


def round_half_away(x):
    """Round to nearest integer, ties away from zero.  Works on scalars and arrays."""
    a = np.abs(x)
    r = np.floor(a)
    r = np.where(a - r >= 0.5, r + 1.0, r)
    out = np.copysign(r, x)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _check_finite(x: float) -> None:
    if not math.isfinite(x):
        raise DomainError(f"cannot quantize non-finite value {x!r}")


def quantize(x: float, spec: QuantSpec) -> float:
    """``clip(round(x * 2**f) * 2**-f, min, max)`` with ties rounded away from zero."""
    x = float(x)
    _check_finite(x)
    code = round_half_away(math.ldexp(x, spec.f))
    code = min(max(code, spec.code_min), spec.code_max)
    return math.ldexp(code, -spec.f)


def quantize_codes(values, spec: QuantSpec) -> np.ndarray:
    """Integer grid codes (as float64) for an array; ``codes * spec.step`` is the quantized array."""
    v = np.asarray(values, dtype=np.float64)
    codes = round_half_away(np.ldexp(v, spec.f))
    return np.clip(codes, spec.code_min, spec.code_max)


def binarize_activation(x: float) -> float:
    """Sign with ``sign(0) = +1``."""
    x = float(x)
    _check_finite(x)
    return 1.0 if x >= 0.0 else -1.0


def binarize_weight(x: float, H: int, I: int) -> float:
    x = float(x)
    _check_finite(x)
    s = BinaryWeightSpec(H, I).scaling_factor
    return s if x >= 0.0 else -s


def quantize_tensor(values, policy: QuantPolicy) -> np.ndarray:
    """Element-wise quantization of an array under ``policy``; shape is preserved."""
    v = np.asarray(values, dtype=np.float64)
    bad = ~np.isfinite(v)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DomainError(f"non-finite value {v[idx]!r} at index {idx}")
    if isinstance(policy, QuantSpec):
        return np.ldexp(quantize_codes(v, policy), -policy.f)
    if isinstance(policy, BinaryWeightSpec):
        return np.where(v >= 0.0, 1.0, -1.0) * policy.scaling_factor
    if isinstance(policy, BinaryActivationSpec):
        return np.where(v >= 0.0, 1.0, -1.0)
    raise TypeError(f"unknown quantization policy {policy!r}")


@dataclass(frozen=True)
class PrecisionConfig:
    """Bit-widths of one design point.

    ``WQ`` weights, ``AQ`` output activations, ``IQ`` input pixels, ``RQ``
    recurrent activations (defaults to ``AQ``).  ``cell_bits`` covers every
    value held inside the memory cell (gate outputs, node activations and the
    cell state); ``fc_weight_bits`` applies to the output layer weights.
    """

    WQ: int
    AQ: int
    IQ: int
    RQ: int | None = None
    cell_bits: int = 8
    fc_weight_bits: int = 8

    def __post_init__(self):
        if self.RQ is None:
            object.__setattr__(self, "RQ", self.AQ)
        for name in ("WQ", "AQ", "IQ", "RQ", "fc_weight_bits"):
            bits = getattr(self, name)
            if not isinstance(bits, int) or not 1 <= bits <= MAX_BITS:
                raise InvalidBitwidthError(f"{name} must be an integer in [1, {MAX_BITS}], got {bits!r}")
        if not isinstance(self.cell_bits, int) or not CELL_INTEGER_BITS <= self.cell_bits <= MAX_BITS:
            raise InvalidBitwidthError(
                f"cell_bits must be in [{CELL_INTEGER_BITS}, {MAX_BITS}], got {self.cell_bits!r}"
            )
        if self.fc_weight_bits < 2:
            raise InvalidBitwidthError("fc_weight_bits must be >= 2")

    @classmethod
    def parse(cls, text: str, **kwargs) -> "PrecisionConfig":
        """Parse ``"WQ/AQ/IQ"`` or ``"WQ/AQ/IQ/RQ"``, e.g. ``"1/2/1/1"``."""
        parts = text.strip().split("/")
        if len(parts) not in (3, 4):
            raise InvalidBitwidthError(
                f"precision must look like WQ/AQ/IQ or WQ/AQ/IQ/RQ, got {text!r}"
            )
        try:
            bits = [int(p) for p in parts]
        except ValueError:
            raise InvalidBitwidthError(f"non-integer bit-width in precision {text!r}") from None
        return cls(*bits, **kwargs)

    @classmethod
    def uniform(cls, k: int) -> "PrecisionConfig":
        """Every field, including cell and output-layer bits, set to ``k``."""
        return cls(WQ=k, AQ=k, IQ=k, RQ=k, cell_bits=k, fc_weight_bits=k)

    @property
    def label(self) -> str:
        base = f"{self.WQ}/{self.AQ}/{self.IQ}"
        return base if self.RQ == self.AQ else f"{base}/{self.RQ}"

    def sort_key(self) -> tuple:
        return (self.WQ, self.AQ, self.IQ, self.RQ, self.cell_bits, self.fc_weight_bits)

    def __str__(self) -> str:
        return self.label


def weight_policy(bits: int, H: int, I: int) -> QuantPolicy:
    return BinaryWeightSpec(H, I) if bits == 1 else make_signed_spec(bits)


def activation_policy(bits: int) -> QuantPolicy:
    """Policy for a tanh-bounded activation: sign at 1 bit, signed grid otherwise."""
    return BinaryActivationSpec() if bits == 1 else make_signed_spec(bits)


def input_spec(bits: int) -> QuantSpec:
    """Pixels live in [0, 1), so inputs always use the unsigned grid."""
    return make_unsigned_spec(bits)
