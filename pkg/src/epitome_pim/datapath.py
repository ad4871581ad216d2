"""Functional model of the epitome datapath.

Each sampled patch is one activation round. The epitome sits on the
crossbars as a word-line x bit-line matrix; per round the input feature
address table (IFAT) selects the input-channel slice from the flattened
(channel, y, x) input buffer, the input feature row table (IFRT) enables only
the word lines that carry the patch, and the output feature address table
(OFAT) says which output channels the bit-line results belong to. The joint
module then sums partial results that share an OFAT range and concatenates
consecutive ranges.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .epitome import (ConvSpec, EpitomeSpec, PatchDims, PatchEntry, PatchSchedule,
                      build_schedule, detect_wrap_factor, pad_input)
from .errors import CoverageError, DimensionError
from .mapping import LayerMapping
from .quant import crossbar_matrix


def identity_epitome(conv: ConvSpec) -> EpitomeSpec:
    """A plain convolution viewed as an epitome sampled once, whole."""
    return EpitomeSpec(conv.c_out, conv.c_in, conv.k_h, conv.k_w,
                       PatchDims(w=conv.k_w, h=conv.k_h, beta1=conv.c_in, beta2=conv.c_out))


@dataclass(frozen=True)
class IndexTables:
    ifat: tuple[tuple[int, int], ...]
    ifrt: tuple[np.ndarray, ...]
    ofat: tuple[tuple[int, int], ...]
    entries: tuple[PatchEntry, ...]
    wrap_factor: int = 1
    channels: int = 0

    @property
    def rounds(self) -> int:
        return len(self.ifat)

    def records(self, layer: str) -> list[dict]:
        out = []
        for i, (a, b) in enumerate(self.ifat):
            out.append({"layer": layer, "table": "IFAT", "id": i, "payload": [a, b]})
        for i, mask in enumerate(self.ifrt):
            rows = np.flatnonzero(mask.ravel()).tolist()
            out.append({"layer": layer, "table": "IFRT", "id": i, "payload": rows})
        for i, (a, b) in enumerate(self.ofat):
            out.append({"layer": layer, "table": "OFAT", "id": i, "payload": [a, b]})
        return out


@dataclass
class ExecutionTrace:
    activation_rounds: int = 0
    steps_per_round: int = 0
    xbar_reads: int = 0
    input_buffer_reads: int = 0
    output_buffer_writes: int = 0
    adc_conversions: int = 0
    dac_conversions: int = 0
    joint_adds: int = 0
    joint_concats: int = 0

    def record(self) -> dict:
        return asdict(self)


def patch_rows(epi: EpitomeSpec, entry: PatchEntry) -> np.ndarray:
    """Word-line indices (sorted) occupied by a patch of the epitome."""
    _, s_in, s_h, s_w = entry.epitome_start
    _, n_in, n_h, n_w = entry.extent
    ci = np.arange(s_in, s_in + n_in)[:, None, None]
    y = np.arange(s_h, s_h + n_h)[None, :, None]
    x = np.arange(s_w, s_w + n_w)[None, None, :]
    return (ci * (epi.e_p * epi.e_q) + y * epi.e_q + x).ravel()


def _check_consistent(schedule: PatchSchedule, mapping: LayerMapping, conv: ConvSpec | None):
    if conv is not None and conv != schedule.conv:
        raise ValueError(f"schedule belongs to {schedule.conv.name}, not {conv.name}")
    epi = schedule.epitome
    if (mapping.rows_needed, mapping.cols_needed) != (epi.rows, epi.e_cout):
        raise ValueError(
            f"{mapping.layer}: mapping holds a {mapping.rows_needed}x{mapping.cols_needed} matrix, "
            f"epitome needs {epi.rows}x{epi.e_cout}")


def active_entries(schedule: PatchSchedule, wrap: bool) -> tuple[tuple[PatchEntry, ...], int]:
    """Entries executed and the wrap factor actually applied."""
    r = detect_wrap_factor(schedule) if wrap else 1
    if r == 1:
        return schedule.entries, 1
    period = schedule.conv.c_out // r
    return tuple(e for e in schedule.entries if e.conv_origin[0] < period), r


def build_tables(schedule: PatchSchedule, mapping: LayerMapping, conv: ConvSpec | None = None,
                 wrap: bool = False) -> IndexTables:
    _check_consistent(schedule, mapping, conv)
    conv = schedule.conv
    entries, r = active_entries(schedule, wrap)
    plane = conv.input_h * conv.input_w
    ifat, ifrt, ofat = [], [], []
    for e in entries:
        o_out, o_in = e.conv_origin[0], e.conv_origin[1]
        n_out, n_in = e.extent[0], e.extent[1]
        ifat.append((o_in * plane, (o_in + n_in) * plane))
        mask = np.zeros(mapping.row_blocks * mapping.xbar_rows, dtype=bool)
        mask[patch_rows(schedule.epitome, e)] = True
        ifrt.append(mask.reshape(mapping.row_blocks, mapping.xbar_rows))
        ofat.append((o_out, o_out + n_out))
    return IndexTables(tuple(ifat), tuple(ifrt), tuple(ofat), entries, r, conv.c_out // r)


def joint_reconstruct(partials, channels: int | None = None) -> np.ndarray:
    """Sum partials sharing an output range, then concatenate ranges in order."""
    if not partials:
        raise CoverageError("no partial outputs to join")
    sums: dict[tuple[int, int], np.ndarray] = {}
    for seg, (start, stop) in partials:
        if not 0 <= start < stop or seg.shape[0] != stop - start:
            raise CoverageError(f"segment of {seg.shape[0]} channels cannot fill [{start}, {stop})")
        if (start, stop) in sums:
            sums[(start, stop)] = sums[(start, stop)] + seg
        else:
            sums[(start, stop)] = seg.copy()
    ranges = sorted(sums)
    expected = 0
    for start, stop in ranges:
        if start != expected:
            kind = "gap" if start > expected else "overlap"
            raise CoverageError(f"{kind} in output channels at {min(start, expected)}")
        expected = stop
    if channels is not None and expected != channels:
        raise CoverageError(f"segments cover [0, {expected}), expected [0, {channels})")
    return np.concatenate([sums[k] for k in ranges], axis=0)


def _input_windows(x: np.ndarray, conv: ConvSpec) -> np.ndarray:
    # (C, Ho, Wo, k_h, k_w) view of the padded input
    win = sliding_window_view(pad_input(x, conv.padding), (conv.k_h, conv.k_w), axis=(1, 2))
    return win[:, ::conv.stride, ::conv.stride][:, :conv.output_h, :conv.output_w]


def _touched_blocks(rows: np.ndarray, first_col: int, n_cols: int, mapping: LayerMapping) -> int:
    row_blocks = np.unique(rows // mapping.xbar_rows).size
    col_blocks = (first_col + n_cols - 1) // mapping.xbar_cols - first_col // mapping.xbar_cols + 1
    return row_blocks * col_blocks


def execute_layer(x: np.ndarray, epitome: np.ndarray, schedule: PatchSchedule,
                  mapping: LayerMapping, tables: IndexTables | None = None,
                  wrap: bool = False) -> tuple[np.ndarray, ExecutionTrace]:
    """Run every activation round and rebuild the output feature map.

    With ``wrap`` and a c_out replication factor r > 1 only the first
    ``c_out // r`` channels are computed; the rest are copies.
    """
    conv = schedule.conv
    if tuple(x.shape) != conv.input_shape:
        raise DimensionError(f"{conv.name}: input shape {x.shape} != {conv.input_shape}")
    if tuple(epitome.shape) != schedule.epitome.shape:
        raise DimensionError(f"{conv.name}: epitome shape {epitome.shape} != {schedule.epitome.shape}")
    if tables is None:
        tables = build_tables(schedule, mapping, wrap=wrap)
    else:
        _check_consistent(schedule, mapping, None)
        expected_r = detect_wrap_factor(schedule) if wrap else 1
        if tables.wrap_factor != expected_r:
            raise ValueError(f"tables built with wrap factor {tables.wrap_factor}, "
                             f"execution requests {expected_r}")

    epi = schedule.epitome
    integer = np.issubdtype(x.dtype, np.integer) and np.issubdtype(epitome.dtype, np.integer)
    dtype = np.int64 if integer else np.result_type(x.dtype, epitome.dtype, np.float64)
    xbar = crossbar_matrix(epitome.astype(dtype))
    buffer = x.astype(dtype).ravel()
    steps = conv.output_h * conv.output_w
    copies = mapping.copies

    trace = ExecutionTrace(steps_per_round=steps)
    partials = []
    opened = set()
    for entry, (a, b), mask, (o0, o1) in zip(tables.entries, tables.ifat, tables.ifrt, tables.ofat):
        n_in = (b - a) // (conv.input_h * conv.input_w)
        slab = buffer[a:b].reshape(n_in, conv.input_h, conv.input_w)
        windows = _input_windows(slab, conv)

        rows = np.flatnonzero(mask.ravel())
        ci_e, y_e, x_e = np.unravel_index(rows, (epi.e_cin, epi.e_p, epi.e_q))
        s_out, s_in, s_h, s_w = entry.epitome_start
        ky = entry.conv_origin[2] + (y_e - s_h)
        kx = entry.conv_origin[3] + (x_e - s_w)
        taps = windows[ci_e - s_in, :, :, ky, kx]            # (rows, Ho, Wo)
        weights = xbar[rows, s_out:s_out + (o1 - o0)]         # (rows, cols)
        partials.append((np.tensordot(weights, taps, axes=([0], [0])), (o0, o1)))

        n_rows, n_cols = rows.size, o1 - o0
        trace.activation_rounds += 1
        trace.xbar_reads += _touched_blocks(rows, s_out, n_cols, mapping) * copies * steps
        trace.dac_conversions += n_rows * steps
        trace.input_buffer_reads += n_rows * steps
        trace.adc_conversions += n_cols * copies * steps
        trace.output_buffer_writes += n_cols * steps
        if (o0, o1) in opened:
            trace.joint_adds += n_cols * steps
        else:
            opened.add((o0, o1))
            trace.joint_concats += n_cols * steps

    ofm = joint_reconstruct(partials, channels=tables.channels)
    if tables.wrap_factor > 1:
        ofm = np.tile(ofm, (tables.wrap_factor, 1, 1))
    return ofm, trace


def analytic_trace(schedule: PatchSchedule, mapping: LayerMapping, wrap: bool = False) -> ExecutionTrace:
    """Event counts of :func:`execute_layer` computed from the schedule alone."""
    _check_consistent(schedule, mapping, None)
    conv, epi = schedule.conv, schedule.epitome
    entries, _ = active_entries(schedule, wrap)
    steps = conv.output_h * conv.output_w
    copies = mapping.copies
    trace = ExecutionTrace(steps_per_round=steps)
    opened = set()
    for e in entries:
        n_out, n_in, n_h, n_w = e.extent
        n_rows = n_in * n_h * n_w
        rows = patch_rows(epi, e)
        trace.activation_rounds += 1
        trace.xbar_reads += _touched_blocks(rows, e.epitome_start[0], n_out, mapping) * copies * steps
        trace.dac_conversions += n_rows * steps
        trace.input_buffer_reads += n_rows * steps
        trace.adc_conversions += n_out * copies * steps
        trace.output_buffer_writes += n_out * steps
        key = (e.conv_origin[0], e.conv_origin[0] + n_out)
        if key in opened:
            trace.joint_adds += n_out * steps
        else:
            opened.add(key)
            trace.joint_concats += n_out * steps
    return trace


def layer_schedule(conv: ConvSpec, epitome: EpitomeSpec | None) -> PatchSchedule:
    return build_schedule(conv, epitome if epitome is not None else identity_epitome(conv))
