"""Lookup-table latency/energy model.

Every component has a unit latency (ns) and a unit energy (pJ). Within one
activation round the pipeline streams one input vector per output pixel and
all active components work in parallel, so a round costs
``steps * max(unit latency of active components)`` plus one table lookup.
Rounds are serialized. Energy is events times unit energy.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .datapath import ExecutionTrace
from .errors import ConfigurationError
from .mapping import LayerMapping

COMPONENTS = (
    "xbar_read",
    "dac",
    "adc",
    "input_buffer_read",
    "output_buffer_write",
    "joint_add",
    "joint_concat",
    "table_lookup",
)

# trace counter feeding each streamed component
EVENT_FIELDS = {
    "xbar_read": "xbar_reads",
    "dac": "dac_conversions",
    "adc": "adc_conversions",
    "input_buffer_read": "input_buffer_reads",
    "output_buffer_write": "output_buffer_writes",
    "joint_add": "joint_adds",
    "joint_concat": "joint_concats",
}

PROFILE_HEADER = "# epitome-pim-profile/1 units: latency=ns energy=pJ"


@dataclass(frozen=True)
class HardwareProfile:
    costs: dict[str, tuple[float, float]]
    name: str = "custom"

    def __post_init__(self):
        for comp, (lat, energy) in self.costs.items():
            if lat < 0 or energy < 0:
                raise ConfigurationError(f"profile entry {comp!r} has a negative cost")

    def latency(self, comp: str) -> float:
        return self._get(comp)[0]

    def energy(self, comp: str) -> float:
        return self._get(comp)[1]

    def _get(self, comp: str) -> tuple[float, float]:
        try:
            return self.costs[comp]
        except KeyError:
            raise ConfigurationError(f"hardware profile {self.name!r} has no entry for {comp!r}") from None

    def validate(self) -> None:
        for comp in COMPONENTS:
            self._get(comp)

    def scaled(self, factor: float) -> "HardwareProfile":
        return HardwareProfile({k: (lat * factor, e * factor) for k, (lat, e) in self.costs.items()},
                               name=f"{self.name}*{factor}")

    def only(self, *components: str) -> "HardwareProfile":
        """Same profile with every component outside ``components`` zeroed."""
        return HardwareProfile({k: (v if k in components else (0.0, 0.0)) for k, v in self.costs.items()},
                               name=f"{self.name}[{','.join(components)}]")

    @classmethod
    def zeros(cls) -> "HardwareProfile":
        return cls({c: (0.0, 0.0) for c in COMPONENTS}, name="zero")

    @classmethod
    def parse(cls, text: str, name: str = "profile") -> "HardwareProfile":
        rows = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        reader = csv.DictReader(io.StringIO("\n".join(rows)))
        if reader.fieldnames is None or not {"component", "latency_ns", "energy_pj"} <= set(reader.fieldnames):
            raise ConfigurationError(f"{name}: expected columns component,latency_ns,energy_pj")
        costs = {}
        for row in reader:
            try:
                costs[row["component"].strip()] = (float(row["latency_ns"]), float(row["energy_pj"]))
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"{name}: bad cost row {row}: {exc}") from None
        return cls(costs, name=name)

    @classmethod
    def load(cls, path: str | Path) -> "HardwareProfile":
        path = Path(path)
        return cls.parse(path.read_text(), name=path.stem)

    @classmethod
    def default(cls) -> "HardwareProfile":
        """Synthetic profile shipped with the package (not measured hardware)."""
        text = resources.files("epitome_pim.data").joinpath("default_profile.csv").read_text()
        return cls.parse(text, name="default-synthetic")

    def dumps(self) -> str:
        lines = [PROFILE_HEADER, "component,latency_ns,energy_pj"]
        lines += [f"{k},{lat!r},{e!r}" for k, (lat, e) in self.costs.items()]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LayerPerf:
    layer: str
    latency: float
    energy: float
    breakdown: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def edp(self) -> float:
        return self.latency * self.energy


@dataclass(frozen=True)
class PerfReport:
    per_layer: tuple[LayerPerf, ...]

    @property
    def latency(self) -> float:
        return sum(p.latency for p in self.per_layer)

    @property
    def energy(self) -> float:
        return sum(p.energy for p in self.per_layer)

    @property
    def edp(self) -> float:
        return self.latency * self.energy


def evaluate_layer(trace: ExecutionTrace, mapping: LayerMapping | None,
                   profile: HardwareProfile) -> LayerPerf:
    """``mapping`` only supplies the layer name; block geometry is already
    folded into the trace counters."""
    rounds, steps = trace.activation_rounds, trace.steps_per_round
    breakdown = {}
    stage = 0.0
    for comp, attr in EVENT_FIELDS.items():
        lat, energy = profile.latency(comp), profile.energy(comp)
        events = getattr(trace, attr)
        busy = rounds * steps * lat if events else 0.0
        breakdown[comp] = (busy, events * energy)
        if events:
            stage = max(stage, lat)
    lookup_lat, lookup_energy = profile.latency("table_lookup"), profile.energy("table_lookup")
    breakdown["table_lookup"] = (rounds * lookup_lat, rounds * lookup_energy)
    latency = rounds * (steps * stage + lookup_lat)
    energy = sum(e for _, e in breakdown.values())
    name = mapping.layer if mapping is not None else ""
    return LayerPerf(name, latency, energy, breakdown)


def evaluate_network(traces, mappings, profile: HardwareProfile) -> PerfReport:
    traces, mappings = list(traces), list(mappings)
    if len(traces) != len(mappings):
        raise ValueError("need exactly one trace per layer mapping")
    return PerfReport(tuple(evaluate_layer(t, m, profile) for t, m in zip(traces, mappings)))
