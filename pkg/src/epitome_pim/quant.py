"""Uniform asymmetric quantization with overlap-weighted clipping ranges.

Zero point is ``Int(alpha / S)`` so that ``alpha`` maps to code 0; ``Int``
rounds half away from zero. Codes are clamped to ``[0, 2**k - 1]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScaleError, DimensionError
from .mapping import LayerMapping

log = logging.getLogger(__name__)


def int_round(x):
    """Round half away from zero; works on scalars and arrays."""
    y = np.sign(x) * np.floor(np.abs(x) + 0.5)
    if np.ndim(y) == 0:
        return int(y)
    return y.astype(np.int64)


@dataclass(frozen=True)
class RangeWeights:
    w1: float = 0.7
    w2: float = 0.3

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0 or abs(self.w1 + self.w2 - 1.0) > 1e-9:
            raise ValueError(f"range weights must be non-negative and sum to 1, got {self}")


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int
    bits: int
    alpha: float
    beta: float

    @property
    def degenerate(self) -> bool:
        return self.scale == 0

    @property
    def qmax(self) -> int:
        return 2 ** self.bits - 1


def compute_scale(alpha: float, beta: float, bits: int) -> float:
    if alpha > beta:
        raise ValueError(f"alpha={alpha} > beta={beta}")
    if bits < 2:
        raise ValueError("bitwidth must be >= 2")
    return (beta - alpha) / (2 ** bits - 1)


def make_params(alpha: float, beta: float, bits: int) -> QuantParams:
    scale = compute_scale(alpha, beta, bits)
    zero_point = int_round(alpha / scale) if scale > 0 else 0
    return QuantParams(scale, zero_point, bits, float(alpha), float(beta))


def quantize(r, params: QuantParams):
    if params.degenerate:
        raise DegenerateScaleError(f"range [{params.alpha}, {params.beta}] has zero width")
    q = int_round(np.asarray(r, dtype=np.float64) / params.scale) - params.zero_point
    q = np.clip(q, 0, params.qmax)
    return int(q) if np.ndim(q) == 0 else q


def dequantize(q, params: QuantParams):
    if params.degenerate:
        out = np.full(np.shape(q), params.alpha)
    else:
        out = (np.asarray(q, dtype=np.float64) + params.zero_point) * params.scale
    return float(out) if out.ndim == 0 else out


def classify_overlap(counts: np.ndarray) -> np.ndarray:
    """True where an epitome element is sampled more than once.

    A uniform count (every element repeated equally often) has no distinguished
    center, so everything is treated as "others".
    """
    counts = np.asarray(counts)
    if counts.size == 0 or counts.min() == counts.max():
        return np.zeros(counts.shape, dtype=bool)
    return counts > 1


def weighted_range(values: np.ndarray, mask: np.ndarray, weights: RangeWeights) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if values.size == 0:
        raise ValueError("cannot compute a range over an empty tensor")
    if values.shape != mask.shape:
        raise DimensionError(f"mask shape {mask.shape} != values shape {values.shape}")
    overlap, others = values[mask], values[~mask]
    if overlap.size == 0:
        overlap = values
    if others.size == 0:
        others = values
    alpha = weights.w1 * overlap.min() + weights.w2 * others.min()
    beta = weights.w1 * overlap.max() + weights.w2 * others.max()
    # a convex combination of two mins never exceeds the matching combination of maxes,
    # but float rounding can, on equal inputs
    return float(alpha), float(max(alpha, beta))


def tensor_params(values: np.ndarray, counts: np.ndarray, weights: RangeWeights, bits: int) -> QuantParams:
    alpha, beta = weighted_range(values, classify_overlap(counts), weights)
    return make_params(alpha, beta, bits)


def crossbar_matrix(tensor: np.ndarray) -> np.ndarray:
    """(out, in, h, w) tensor laid out as word lines x bit lines."""
    return tensor.reshape(tensor.shape[0], -1).T


@dataclass(frozen=True)
class CrossbarQuant:
    layer: str
    crossbar_id: int
    physical_ids: tuple[int, ...]
    params: QuantParams
    rows: slice
    cols: slice

    def record(self) -> dict:
        p = self.params
        return {
            "layer": self.layer,
            "crossbar_id": self.crossbar_id,
            "alpha": p.alpha,
            "beta": p.beta,
            "scale": p.scale,
            "zero_point": p.zero_point,
            "bitwidth": p.bits,
        }


def per_crossbar_params(mapping: LayerMapping, epitome: np.ndarray, counts: np.ndarray,
                        weights: RangeWeights, bits: int) -> list[CrossbarQuant]:
    """One parameter set per logical crossbar block.

    Bit-slice and polarity copies of a block hold the same weights, so they
    share that block's scale.
    """
    values = crossbar_matrix(np.asarray(epitome, dtype=np.float64))
    mask = crossbar_matrix(classify_overlap(counts))
    if values.shape != (mapping.rows_needed, mapping.cols_needed):
        raise DimensionError(
            f"{mapping.layer}: tensor maps to {values.shape}, mapping expects "
            f"{(mapping.rows_needed, mapping.cols_needed)}")
    out = []
    for block in range(mapping.blocks):
        rows, cols = mapping.block_bounds(block)
        v, m = values[rows, cols], mask[rows, cols]
        if v.size == 0:
            log.warning("%s: crossbar block %d holds no weights, skipped", mapping.layer, block)
            continue
        alpha, beta = weighted_range(v, m, weights)
        out.append(CrossbarQuant(mapping.layer, block, tuple(mapping.physical_ids(block)),
                                 make_params(alpha, beta, bits), rows, cols))
    return out


def fake_quantize(values: np.ndarray, params: QuantParams) -> np.ndarray:
    if params.degenerate:
        return np.full(np.shape(values), params.alpha)
    return dequantize(quantize(values, params), params)


def max_roundtrip_error(values: np.ndarray, params: QuantParams) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return 0.0
    return float(np.max(np.abs(fake_quantize(values, params) - values)))
