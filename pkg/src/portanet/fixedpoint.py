"""Affine quantization primitives: scheme selection, quantize, dequantize.

8-bit is asymmetric unsigned with a zero point; 16-bit is symmetric signed
with zero point 0. Rounding is round-half-to-even everywhere (``np.rint``).
"""
from __future__ import annotations

import numpy as np

from .ir import QuantScheme

DEGENERATE_WIDTH = 1e-6


def widen(lo: float, hi: float) -> tuple[float, float]:
    lo, hi = float(lo), float(hi)
    if hi < lo:
        raise ValueError(f"empty range [{lo}, {hi}]")
    if hi == lo:
        hi = lo + DEGENERATE_WIDTH
    return lo, hi


def choose_scheme(lo: float, hi: float, bits: int, mode: str = "PTQ") -> QuantScheme:
    """Scheme whose representable range covers [lo, hi] (to within scale/2 after zero-point rounding)."""
    lo, hi = widen(lo, hi)
    if bits == 8:
        lo, hi = min(lo, 0.0), max(hi, 0.0)
        scale = (hi - lo) / 255.0
        zp = int(np.clip(np.rint(-lo / scale), 0, 255))
        return QuantScheme(8, scale, zp, mode)
    if bits == 16:
        scale = max(abs(lo), abs(hi)) / 32767.0
        return QuantScheme(16, scale, 0, mode)
    raise ValueError(f"unsupported bit width {bits}")


def quantize(x, scheme: QuantScheme) -> np.ndarray:
    """Real values to saturated integers (int64)."""
    q = np.rint(np.asarray(x, dtype=np.float64) / scheme.scale) + scheme.zero_point
    return np.clip(q, scheme.qmin, scheme.qmax).astype(np.int64)


def dequantize(q, scheme: QuantScheme) -> np.ndarray:
    return (np.asarray(q, dtype=np.float64) - scheme.zero_point) * scheme.scale


def fake_quant(x, scheme: QuantScheme) -> np.ndarray:
    return dequantize(quantize(x, scheme), scheme)


def requantize(real, scheme: QuantScheme) -> np.ndarray:
    """Requantize real-valued (float64) results onto an output scheme."""
    return quantize(real, scheme)


def bias_scale(input_scheme: QuantScheme, filter_scheme: QuantScheme) -> float:
    return input_scheme.scale * filter_scheme.scale


INT32_MIN, INT32_MAX = -(1 << 31), (1 << 31) - 1


ACC53 = float(1 << 53)


def accumulator_limit(bits: int) -> float:
    """Largest accumulator magnitude: int32 for 8-bit, exact float64 integers for 16-bit."""
    return float(INT32_MAX) if bits == 8 else ACC53


def quantize_bias(b, input_scheme: QuantScheme, filter_scheme: QuantScheme) -> np.ndarray:
    """Integer bias at scale s_input * s_filter, saturated to the accumulator width."""
    q = np.rint(np.asarray(b, dtype=np.float64) / bias_scale(input_scheme, filter_scheme))
    lim = accumulator_limit(input_scheme.bits)
    return np.clip(q, -lim - (input_scheme.bits == 8), lim).astype(np.int64)
