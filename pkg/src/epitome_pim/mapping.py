"""Crossbar mapping: bit slicing, block counts, utilization and alignment.

Rows of the weight matrix (``c_in*k_h*k_w`` or ``e_cin*e_p*e_q``) go to word
lines and output channels go to bit lines. Every bit slice gets its own copy
of the row/column block layout, and with ``polarity=2`` every slice is
duplicated once more for a differential (positive/negative) pair.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import ceil, gcd

from .epitome import ConvSpec, EpitomeSpec
from .errors import ConfigurationError, EvaluationError

SLICING_MODES = ("plain", "sign")


@dataclass(frozen=True)
class XbarConfig:
    rows: int = 256
    cols: int = 256
    cell_bits: int = 2
    polarity: int = 1
    slicing: str = "plain"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigurationError("crossbar rows/cols must be >= 1")
        if self.cell_bits not in (1, 2, 4):
            raise ConfigurationError(f"cell_bits must be 1, 2 or 4, got {self.cell_bits}")
        if self.polarity not in (1, 2):
            raise ConfigurationError(f"polarity must be 1 or 2, got {self.polarity}")
        if self.slicing not in SLICING_MODES:
            raise ConfigurationError(f"slicing must be one of {SLICING_MODES}")

    @classmethod
    def differential(cls, rows: int = 256, cols: int = 256, cell_bits: int = 2) -> "XbarConfig":
        """Signed weights on differential crossbar pairs, sign bit not sliced."""
        return cls(rows, cols, cell_bits, polarity=2, slicing="sign")

    @property
    def cells(self) -> int:
        return self.rows * self.cols


def slices_per_weight(weight_bits: int, cell_bits: int, mode: str = "plain") -> int:
    if mode == "plain":
        return ceil(weight_bits / cell_bits)
    if mode == "sign":
        return max(1, ceil((weight_bits - 1) / cell_bits))
    raise ConfigurationError(f"unknown slicing mode {mode!r}")


@dataclass(frozen=True)
class LayerMapping:
    layer: str
    rows_needed: int
    cols_needed: int
    row_blocks: int
    col_blocks: int
    slices: int
    polarity: int
    xbar_rows: int
    xbar_cols: int
    first_id: int = 0

    @property
    def copies(self) -> int:
        return self.slices * self.polarity

    @property
    def blocks(self) -> int:
        return self.row_blocks * self.col_blocks

    @property
    def crossbars(self) -> int:
        return self.blocks * self.copies

    @property
    def crossbar_ids(self) -> range:
        return range(self.first_id, self.first_id + self.crossbars)

    @property
    def used_cells(self) -> int:
        return self.rows_needed * self.cols_needed * self.copies

    @property
    def allocated_cells(self) -> int:
        return self.crossbars * self.xbar_rows * self.xbar_cols

    @property
    def utilization(self) -> float:
        return self.used_cells / self.allocated_cells

    def block_id(self, row_block: int, col_block: int) -> int:
        return row_block * self.col_blocks + col_block

    def block_bounds(self, block: int) -> tuple[slice, slice]:
        """Weight-matrix row and column ranges held by one logical block."""
        rb, cb = divmod(block, self.col_blocks)
        r0, c0 = rb * self.xbar_rows, cb * self.xbar_cols
        return (slice(r0, min(r0 + self.xbar_rows, self.rows_needed)),
                slice(c0, min(c0 + self.xbar_cols, self.cols_needed)))

    def physical_ids(self, block: int) -> list[int]:
        # physical crossbars are ordered copy-major: all blocks of copy 0, then copy 1, ...
        return [self.first_id + k * self.blocks + block for k in range(self.copies)]

    def record(self) -> dict:
        return {
            "layer": self.layer,
            "row_blocks": self.row_blocks,
            "col_blocks": self.col_blocks,
            "slices": self.slices,
            "polarity": self.polarity,
            "crossbars": self.crossbars,
            "utilization": self.utilization,
        }


def map_layer(conv: ConvSpec, xbar: XbarConfig, epitome: EpitomeSpec | None = None,
              first_id: int = 0) -> LayerMapping:
    if epitome is None:
        rows, cols = conv.rows_needed, conv.c_out
    else:
        rows, cols = epitome.rows, epitome.e_cout
    return LayerMapping(
        layer=conv.name,
        rows_needed=rows,
        cols_needed=cols,
        row_blocks=ceil(rows / xbar.rows),
        col_blocks=ceil(cols / xbar.cols),
        slices=slices_per_weight(conv.weight_bits, xbar.cell_bits, xbar.slicing),
        polarity=xbar.polarity,
        xbar_rows=xbar.rows,
        xbar_cols=xbar.cols,
        first_id=first_id,
    )


def align_epitome(epi: EpitomeSpec, xbar: XbarConfig) -> EpitomeSpec:
    """Smallest epitome >= ``epi`` whose rows and columns fill whole crossbars.

    ``e_cout`` is rounded up to a multiple of ``xbar.cols``; ``e_cin`` is
    rounded up until ``e_cin*e_p*e_q`` is a multiple of ``xbar.rows``.
    """
    e_cout = ceil(epi.e_cout / xbar.cols) * xbar.cols
    pq = epi.e_p * epi.e_q
    step = xbar.rows // gcd(xbar.rows, pq)
    e_cin = ceil(epi.e_cin / step) * step
    return replace(epi, e_cout=e_cout, e_cin=e_cin)


@dataclass(frozen=True)
class NetworkMapping:
    layers: tuple[LayerMapping, ...]

    @property
    def crossbars(self) -> int:
        return sum(m.crossbars for m in self.layers)

    @property
    def used_cells(self) -> int:
        return sum(m.used_cells for m in self.layers)

    @property
    def allocated_cells(self) -> int:
        return sum(m.allocated_cells for m in self.layers)

    @property
    def utilization(self) -> float:
        alloc = self.allocated_cells
        return self.used_cells / alloc if alloc else 0.0


def count_network(layers, xbar: XbarConfig) -> NetworkMapping:
    """Map every layer independently; ``layers`` holds ConvSpec or
    (ConvSpec, EpitomeSpec | None) items, or objects with ``conv``/``epitome``."""
    out = []
    next_id = 0
    for item in layers:
        conv, epi = _unpack(item)
        m = map_layer(conv, xbar, epi, first_id=next_id)
        next_id += m.crossbars
        out.append(m)
    return NetworkMapping(tuple(out))


def _unpack(item):
    if isinstance(item, ConvSpec):
        return item, None
    if isinstance(item, tuple):
        return item
    return item.conv, item.epitome


def compression_rate(baseline_count: int, compact_count: int) -> float:
    if compact_count <= 0 or baseline_count <= 0:
        raise EvaluationError("crossbar counts must be positive")
    return baseline_count / compact_count
