"""Epitome tensors, the patch sampler and virtual-convolution reconstruction.

All weight tensors use the (out, in, h, w) dim order. Feature maps are
(channels, h, w).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil

import numpy as np

from .errors import DimensionError

AXES = ("out", "in", "h", "w")


@dataclass(frozen=True)
class ConvSpec:
    name: str
    c_in: int
    c_out: int
    k_h: int = 1
    k_w: int = 1
    stride: int = 1
    padding: int = 0
    input_h: int = 1
    input_w: int = 1
    weight_bits: int = 32
    kind: str = "conv"

    def __post_init__(self):
        for attr in ("c_in", "c_out", "k_h", "k_w", "stride", "input_h", "input_w"):
            if getattr(self, attr) < 1:
                raise DimensionError(f"{self.name}: {attr} must be >= 1, got {getattr(self, attr)}")
        if self.padding < 0:
            raise DimensionError(f"{self.name}: padding must be >= 0")
        if not 2 <= self.weight_bits <= 32:
            raise DimensionError(f"{self.name}: weight_bits must lie in [2, 32]")
        if self.kind not in ("conv", "fc"):
            raise DimensionError(f"{self.name}: unknown layer kind {self.kind!r}")
        if self.kind == "fc" and (self.k_h, self.k_w, self.input_h, self.input_w) != (1, 1, 1, 1):
            raise DimensionError(f"{self.name}: fc layers are 1x1 convs on a 1x1 input")
        if self.output_h < 1 or self.output_w < 1:
            raise DimensionError(f"{self.name}: kernel does not fit the padded input")

    @classmethod
    def fc(cls, name: str, c_in: int, c_out: int, weight_bits: int = 32) -> "ConvSpec":
        return cls(name, c_in, c_out, weight_bits=weight_bits, kind="fc")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.c_out, self.c_in, self.k_h, self.k_w)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.c_in, self.input_h, self.input_w)

    @property
    def output_h(self) -> int:
        return (self.input_h + 2 * self.padding - self.k_h) // self.stride + 1

    @property
    def output_w(self) -> int:
        return (self.input_w + 2 * self.padding - self.k_w) // self.stride + 1

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return (self.c_out, self.output_h, self.output_w)

    @property
    def rows_needed(self) -> int:
        return self.c_in * self.k_h * self.k_w


@dataclass(frozen=True)
class PatchDims:
    """Extent of one sampled sub-tensor: spatial ``w``/``h``, input channels
    ``beta1`` and output channels ``beta2``."""

    w: int
    h: int
    beta1: int
    beta2: int

    def __post_init__(self):
        if min(self.w, self.h, self.beta1, self.beta2) < 1:
            raise DimensionError(f"patch dims must be >= 1, got {self}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.beta2, self.beta1, self.h, self.w)


@dataclass(frozen=True)
class EpitomeSpec:
    e_cout: int
    e_cin: int
    e_p: int
    e_q: int
    patch: PatchDims

    def __post_init__(self):
        if min(self.e_cout, self.e_cin, self.e_p, self.e_q) < 1:
            raise DimensionError(f"epitome dims must be >= 1, got {self.shape}")
        if any(p > e for p, e in zip(self.patch.shape, self.shape)):
            raise DimensionError(f"patch {self.patch.shape} exceeds epitome {self.shape}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.e_cout, self.e_cin, self.e_p, self.e_q)

    @property
    def rows(self) -> int:
        return self.e_cin * self.e_p * self.e_q

    @property
    def size(self) -> int:
        return self.e_cout * self.rows

    def check_against(self, conv: ConvSpec) -> None:
        if self.e_cout > conv.c_out:
            raise DimensionError(f"{conv.name}: epitome e_cout={self.e_cout} exceeds c_out={conv.c_out}")
        if self.rows > conv.rows_needed:
            raise DimensionError(
                f"{conv.name}: epitome rows {self.rows} exceed conv rows {conv.rows_needed}")


def default_patch(conv: ConvSpec, e_cout: int, e_cin: int, e_p: int, e_q: int,
                  xbar_cols: int | None = None) -> PatchDims:
    """One patch per crossbar activation: the full kernel window (clipped to the
    epitome), as many input channels as both tensors share, and at most one
    crossbar's worth of output channels."""
    beta2 = min(e_cout, conv.c_out)
    if xbar_cols is not None:
        beta2 = min(beta2, xbar_cols)
    return PatchDims(w=min(conv.k_w, e_q), h=min(conv.k_h, e_p),
                     beta1=min(e_cin, conv.c_in), beta2=beta2)


def make_epitome(conv: ConvSpec, e_cout: int, e_cin: int, e_p: int, e_q: int,
                 patch: PatchDims | None = None, xbar_cols: int | None = None) -> EpitomeSpec:
    if patch is None:
        patch = default_patch(conv, e_cout, e_cin, e_p, e_q, xbar_cols)
    return EpitomeSpec(e_cout, e_cin, e_p, e_q, patch)


def _spatial_split(k_h: int, k_w: int, rows: int) -> tuple[int, int]:
    # largest spatial footprint (<= kernel) that divides the row target
    best = (1, 1)
    for p in range(1, k_h + 1):
        for q in range(1, k_w + 1):
            if rows % (p * q) == 0 and p * q > best[0] * best[1]:
                best = (p, q)
    return best


def uniform_epitome(conv: ConvSpec, rows: int = 1024, cols: int = 256,
                    xbar_cols: int | None = None) -> EpitomeSpec | None:
    """Epitome with ``e_cin*e_p*e_q == rows`` and ``e_cout == cols``.

    Returns None when the layer is too small to host such an epitome or when
    the epitome would not be smaller than the convolution itself.
    """
    if conv.c_out < cols or conv.rows_needed < rows:
        return None
    if conv.rows_needed * conv.c_out <= rows * cols:
        return None
    e_p, e_q = _spatial_split(conv.k_h, conv.k_w, rows)
    return make_epitome(conv, cols, rows // (e_p * e_q), e_p, e_q, xbar_cols=xbar_cols)


@dataclass(frozen=True)
class PatchEntry:
    epitome_start: tuple[int, int, int, int]
    conv_origin: tuple[int, int, int, int]
    extent: tuple[int, int, int, int]
    tile_index: tuple[int, int, int, int]

    def epitome_slices(self) -> tuple[slice, ...]:
        return tuple(slice(s, s + e) for s, e in zip(self.epitome_start, self.extent))

    def conv_slices(self) -> tuple[slice, ...]:
        return tuple(slice(o, o + e) for o, e in zip(self.conv_origin, self.extent))


@dataclass(frozen=True)
class PatchSchedule:
    entries: tuple[PatchEntry, ...]
    patch: PatchDims
    conv: ConvSpec
    epitome: EpitomeSpec
    tiles_per_axis: tuple[int, int, int, int] = field(default=(1, 1, 1, 1))

    def __len__(self) -> int:
        return len(self.entries)

    def out_tiles(self) -> list[tuple[int, int, int]]:
        """(epitome start, conv origin, extent) per tile along the c_out axis."""
        seen = {}
        for e in self.entries:
            seen.setdefault(e.tile_index[0], (e.epitome_start[0], e.conv_origin[0], e.extent[0]))
        return [seen[i] for i in sorted(seen)]


def _round_half_up(x: Fraction) -> int:
    return int(x + Fraction(1, 2)) if x >= 0 else -int(-x + Fraction(1, 2))


def axis_starts(conv_dim: int, patch_dim: int, epi_dim: int) -> list[int]:
    """Evenly spread epitome start indices for the tiles along one axis."""
    n = ceil(conv_dim / patch_dim)
    span = epi_dim - patch_dim
    if n == 1 or span == 0:
        return [0] * n
    return [_round_half_up(Fraction(j * span, n - 1)) for j in range(n)]


def build_schedule(conv: ConvSpec, epi: EpitomeSpec) -> PatchSchedule:
    conv_dims = conv.weight_shape
    patch_dims = epi.patch.shape
    epi_dims = epi.shape
    per_axis = []
    for ax, c, p, e in zip(AXES, conv_dims, patch_dims, epi_dims):
        if p > e:
            raise DimensionError(f"{conv.name}: patch {ax}={p} exceeds epitome {ax}={e}")
        if p > c:
            raise DimensionError(f"{conv.name}: patch {ax}={p} exceeds conv {ax}={c}")
        starts = axis_starts(c, p, e)
        per_axis.append([(j, s, j * p, min(p, c - j * p)) for j, s in enumerate(starts)])

    entries = []
    for combo in itertools.product(*per_axis):
        entries.append(PatchEntry(
            epitome_start=tuple(t[1] for t in combo),
            conv_origin=tuple(t[2] for t in combo),
            extent=tuple(t[3] for t in combo),
            tile_index=tuple(t[0] for t in combo),
        ))
    return PatchSchedule(tuple(entries), epi.patch, conv, epi,
                         tuple(len(a) for a in per_axis))


def sample_patch(epitome: np.ndarray, start, patch: PatchDims | tuple) -> np.ndarray:
    """Contiguous sub-tensor of ``epitome`` anchored at ``start``."""
    extent = patch.shape if isinstance(patch, PatchDims) else tuple(patch)
    if len(start) != 4 or len(extent) != 4:
        raise DimensionError("start and extent must be 4-tuples")
    for ax, s, e, d in zip(AXES, start, extent, epitome.shape):
        if s < 0 or s + e > d:
            raise DimensionError(f"patch along {ax} [{s}, {s + e}) outside epitome extent {d}")
    return epitome[tuple(slice(s, s + e) for s, e in zip(start, extent))].copy()


def reconstruct(epitome: np.ndarray, schedule: PatchSchedule) -> np.ndarray:
    """Virtual convolution weight assembled tile by tile from the epitome."""
    if tuple(epitome.shape) != schedule.epitome.shape:
        raise DimensionError(
            f"epitome shape {epitome.shape} does not match schedule {schedule.epitome.shape}")
    out = np.empty(schedule.conv.weight_shape, dtype=epitome.dtype)
    for e in schedule.entries:
        out[e.conv_slices()] = sample_patch(epitome, e.epitome_start, e.extent)
    return out


def repetition_counts(schedule: PatchSchedule) -> np.ndarray:
    counts = np.zeros(schedule.epitome.shape, dtype=np.int64)
    for e in schedule.entries:
        counts[e.epitome_slices()] += 1
    return counts


def detect_wrap_factor(schedule: PatchSchedule) -> int:
    """Largest r such that the c_out tiling is r copies of one period.

    Works on the schedule alone; other axes are enumerated independently of
    the c_out tile, so c_out periodicity of the tiles implies
    ``W[x] == W[x + c_out // r]``.
    """
    c_out = schedule.conv.c_out
    beta2 = schedule.patch.beta2
    tiles = schedule.out_tiles()
    for r in range(c_out, 1, -1):
        if c_out % r:
            continue
        period = c_out // r
        if period % beta2:
            continue
        step = period // beta2
        if all(tiles[j][0] == tiles[j % step][0] and tiles[j][2] == tiles[j % step][2]
               for j in range(len(tiles))):
            return r
    return 1


def pad_input(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (padding, padding), (padding, padding)))


def conv2d_reference(x: np.ndarray, weight: np.ndarray, conv: ConvSpec) -> np.ndarray:
    """Dense cross-correlation, accumulated one kernel tap at a time."""
    if tuple(x.shape) != conv.input_shape:
        raise DimensionError(f"{conv.name}: input shape {x.shape} != {conv.input_shape}")
    if tuple(weight.shape) != conv.weight_shape:
        raise DimensionError(f"{conv.name}: weight shape {weight.shape} != {conv.weight_shape}")
    dtype = np.result_type(x.dtype, weight.dtype)
    if np.issubdtype(dtype, np.integer):
        dtype = np.int64
    xp = pad_input(x.astype(dtype), conv.padding)
    ho, wo, s = conv.output_h, conv.output_w, conv.stride
    out = np.zeros((conv.c_out, ho, wo), dtype=dtype)
    w = weight.astype(dtype)
    for a in range(conv.k_h):
        for b in range(conv.k_w):
            window = xp[:, a:a + s * (ho - 1) + 1:s, b:b + s * (wo - 1) + 1:s]
            out += np.tensordot(w[:, :, a, b], window, axes=([1], [0]))
    return out
