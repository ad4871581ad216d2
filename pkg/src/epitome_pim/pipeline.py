"""Glue between network files and the mapping / datapath / perf / quant modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datapath import ExecutionTrace, analytic_trace, execute_layer, layer_schedule
from .epitome import conv2d_reference, detect_wrap_factor, reconstruct, repetition_counts
from .mapping import LayerMapping, NetworkMapping, XbarConfig, count_network, map_layer
from .netspec import Layer, Network
from .perf import HardwareProfile, PerfReport, evaluate_layer, evaluate_network
from .quant import (RangeWeights, crossbar_matrix, max_roundtrip_error, per_crossbar_params,
                    tensor_params)
from .search import AdditiveEvaluator, Evaluation


def resolve_xbar(net: Network, override: XbarConfig | None = None) -> XbarConfig:
    if override is not None:
        return override
    return net.xbar if net.xbar is not None else XbarConfig()


def map_network(net: Network, xbar: XbarConfig) -> NetworkMapping:
    return count_network(net.layers, xbar)


@dataclass
class Simulation:
    mappings: NetworkMapping
    traces: list[ExecutionTrace]
    report: PerfReport
    wrap_factors: list[int]


def simulate_network(net: Network, xbar: XbarConfig, profile: HardwareProfile,
                     wrap: bool | None = None) -> Simulation:
    """Count-only simulation; ``wrap`` overrides every layer's own setting."""
    profile.validate()
    mappings = map_network(net, xbar)
    traces, factors = [], []
    for layer, m in zip(net.layers, mappings.layers):
        schedule = layer_schedule(layer.conv, layer.epitome)
        use_wrap = layer.wrap if wrap is None else wrap
        trace = analytic_trace(schedule, m, wrap=use_wrap)
        traces.append(trace)
        factors.append(detect_wrap_factor(schedule) if use_wrap else 1)
    return Simulation(mappings, traces, evaluate_network(traces, mappings.layers, profile), factors)


def layer_seed(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def synth_layer_tensors(layer: Layer, rng: np.random.Generator, low: int = -8, high: int = 8):
    """Integer epitome (or dense weight) and input for a functional run."""
    schedule = layer_schedule(layer.conv, layer.epitome)
    epitome = rng.integers(low, high, size=schedule.epitome.shape, dtype=np.int64)
    x = rng.integers(low, high, size=layer.conv.input_shape, dtype=np.int64)
    return schedule, epitome, x


@dataclass(frozen=True)
class Equivalence:
    layer: str
    exact: bool
    max_abs_diff: int
    wrap_factor: int


def functional_check(net: Network, xbar: XbarConfig, seed: int = 0,
                     wrap: bool | None = None) -> list[Equivalence]:
    results = []
    for i, layer in enumerate(net.layers):
        schedule, epitome, x = synth_layer_tensors(layer, layer_seed(seed, i))
        m = map_layer(layer.conv, xbar, schedule.epitome)
        use_wrap = layer.wrap if wrap is None else wrap
        ofm, trace = execute_layer(x, epitome, schedule, m, wrap=use_wrap)
        ref = conv2d_reference(x, reconstruct(epitome, schedule), layer.conv)
        diff = int(np.max(np.abs(ofm - ref))) if ofm.shape == ref.shape else -1
        results.append(Equivalence(layer.name, ofm.shape == ref.shape and diff == 0, diff,
                                   detect_wrap_factor(schedule) if use_wrap else 1))
    return results


def network_evaluator(net: Network, candidates, xbar: XbarConfig, profile: HardwareProfile,
                      wrap: bool | None = None) -> AdditiveEvaluator:
    """Evaluator over per-layer candidate indices for :func:`search.evolve`."""
    profile.validate()

    def layer_cost(i: int, choice: int) -> Evaluation:
        layer = net.layers[i]
        epi = candidates[i][choice]
        schedule = layer_schedule(layer.conv, epi)
        m = map_layer(layer.conv, xbar, epi)
        use_wrap = layer.wrap if wrap is None else wrap
        perf = evaluate_layer(analytic_trace(schedule, m, wrap=use_wrap), m, profile)
        return Evaluation(perf.latency, perf.energy, m.crossbars)

    return AdditiveEvaluator(layer_cost)


@dataclass(frozen=True)
class QuantRecord:
    layer: str
    crossbar_id: int
    alpha: float
    beta: float
    scale: float
    zero_point: int
    bitwidth: int
    max_error: float

    def record(self) -> dict:
        return dict(self.__dict__)


def synth_float_epitome(layer: Layer, rng: np.random.Generator) -> np.ndarray:
    schedule = layer_schedule(layer.conv, layer.epitome)
    return rng.standard_normal(schedule.epitome.shape) * 0.1


def quantize_network(net: Network, xbar: XbarConfig, bits: int, weights: RangeWeights,
                     per_crossbar: bool = True, tensors: dict | None = None,
                     seed: int = 0) -> list[QuantRecord]:
    """Quantization parameters for each layer's stored tensor (epitome or conv
    weight). Tensors missing from ``tensors`` are drawn from a seeded normal."""
    tensors = tensors or {}
    out = []
    for i, layer in enumerate(net.layers):
        schedule = layer_schedule(layer.conv, layer.epitome)
        values = tensors.get(layer.name)
        if values is None:
            values = synth_float_epitome(layer, layer_seed(seed, i))
        values = np.asarray(values, dtype=np.float64)
        if values.shape != schedule.epitome.shape:
            raise ValueError(f"{layer.name}: weights have shape {values.shape}, "
                             f"expected {schedule.epitome.shape}")
        counts = repetition_counts(schedule)
        m = map_layer(layer.conv, xbar, schedule.epitome)
        if per_crossbar:
            for cq in per_crossbar_params(m, values, counts, weights, bits):
                block = crossbar_matrix(values)[cq.rows, cq.cols]
                p = cq.params
                out.append(QuantRecord(layer.name, cq.crossbar_id, p.alpha, p.beta, p.scale,
                                       p.zero_point, p.bits, max_roundtrip_error(block, p)))
        else:
            p = tensor_params(values, counts, weights, bits)
            out.append(QuantRecord(layer.name, -1, p.alpha, p.beta, p.scale, p.zero_point, p.bits,
                                   max_roundtrip_error(values, p)))
    return out


def layer_mappings(net: Network, xbar: XbarConfig) -> list[LayerMapping]:
    return list(map_network(net, xbar).layers)
