"""Latency/energy trends under the synthetic profile.

Part 1 sweeps an epitome round multiplier over a small chained network and
reports latency and energy relative to the plain network alongside the
crossbar compression rate. Part 2 runs the shipped ResNet-50 with and
without a uniform epitome and with channel wrapping on and off.

    python3 scripts/perf_trends.py [--profile p.csv] [--csv out.csv]
"""

import argparse
import csv
import sys

from epitome_pim.epitome import ConvSpec, EpitomeSpec, PatchDims
from epitome_pim.mapping import XbarConfig, compression_rate
from epitome_pim.netspec import Layer, Network, apply_uniform, load_network
from epitome_pim.perf import HardwareProfile
from epitome_pim.pipeline import simulate_network


def chained(multiplier: int, xbar: XbarConfig) -> Network:
    convs = [ConvSpec("a", 32, 64, 3, 3, padding=1, input_h=16, input_w=16),
             ConvSpec("b", 64, 64, 3, 3, padding=1, input_h=16, input_w=16),
             ConvSpec("c", 64, 128, 1, 1, input_h=16, input_w=16)]
    layers = []
    for c in convs:
        if multiplier == 1:
            layers.append(Layer(c))
            continue
        e_cout = c.c_out // multiplier
        epi = EpitomeSpec(e_cout, c.c_in, c.k_h, c.k_w, PatchDims(c.k_w, c.k_h, c.c_in, e_cout))
        layers.append(Layer(c, epi, wrap=False))
    return Network(f"chain-x{multiplier}", tuple(layers), xbar)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--profile")
    ap.add_argument("--csv")
    args = ap.parse_args(argv)
    profile = HardwareProfile.load(args.profile) if args.profile else HardwareProfile.default()

    rows = []
    xbar = XbarConfig(64, 16, 2)
    base = simulate_network(chained(1, xbar), xbar, profile)
    for mult in (1, 2, 4, 8, 16):
        for wrap in (False, True):
            sim = simulate_network(chained(mult, xbar), xbar, profile, wrap=wrap)
            rows.append({
                "case": f"chain x{mult}", "wrap": "on" if wrap else "off",
                "rounds": sum(t.activation_rounds for t in sim.traces),
                "crossbars": sim.mappings.crossbars,
                "cr": round(compression_rate(base.mappings.crossbars, sim.mappings.crossbars), 3),
                "latency_ratio": round(sim.report.latency / base.report.latency, 4),
                "energy_ratio": round(sim.report.energy / base.report.energy, 4),
                "obuf_writes": sum(t.output_buffer_writes for t in sim.traces),
            })

    net = load_network("resnet50")
    ref = simulate_network(net, net.xbar, profile)
    for label, variant in (("resnet50", net), ("resnet50 1024x256", apply_uniform(net, 1024, 256))):
        for wrap in (False, True):
            sim = simulate_network(variant, net.xbar, profile, wrap=wrap)
            rows.append({
                "case": label, "wrap": "on" if wrap else "off",
                "rounds": sum(t.activation_rounds for t in sim.traces),
                "crossbars": sim.mappings.crossbars,
                "cr": round(compression_rate(ref.mappings.crossbars, sim.mappings.crossbars), 3),
                "latency_ratio": round(sim.report.latency / ref.report.latency, 4),
                "energy_ratio": round(sim.report.energy / ref.report.energy, 4),
                "obuf_writes": sum(t.output_buffer_writes for t in sim.traces),
            })

    keys = list(rows[0])
    widths = {k: max(len(k), *(len(str(r[k])) for r in rows)) for k in keys}
    print(f"profile: {profile.name}")
    print("  ".join(k.ljust(widths[k]) for k in keys))
    for r in rows:
        print("  ".join(str(r[k]).ljust(widths[k]) for k in keys))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
