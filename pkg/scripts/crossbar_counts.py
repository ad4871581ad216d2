"""Crossbar counts and compression rates for the shipped ResNets.

Counts every model at several weight bit widths, with and without a uniform
epitome overlay, and prints them next to the target counts. The CR column is
relative to the 32-bit baseline of the same model.

    python3 scripts/crossbar_counts.py [--epitome 1024x256] [--csv out.csv]
"""

import argparse
import csv
import sys
from dataclasses import replace

from epitome_pim.mapping import XbarConfig, compression_rate
from epitome_pim.netspec import Layer, Network, apply_uniform, load_network
from epitome_pim.pipeline import map_network

# (model, bits, epitome?) -> target crossbar count
TARGETS = {
    ("resnet50", 32, False): 13120, ("resnet50", 32, True): 5696,
    ("resnet50", 9, True): 1424, ("resnet50", 7, True): 1076,
    ("resnet50", 5, True): 720, ("resnet50", 3, True): 428,
    ("resnet101", 32, False): 22912, ("resnet101", 32, True): 10592,
    ("resnet101", 9, True): 2648, ("resnet101", 7, True): 1994,
    ("resnet101", 5, True): 1584, ("resnet101", 3, True): 734,
}


def with_bits(net: Network, bits: int) -> Network:
    return replace(net, layers=tuple(Layer(replace(l.conv, weight_bits=bits), l.epitome, l.wrap)
                                     for l in net.layers))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--models", nargs="+", default=["resnet50", "resnet101"])
    ap.add_argument("--bits", nargs="+", type=int, default=[32, 9, 7, 5, 3])
    ap.add_argument("--epitome", default="1024x256")
    ap.add_argument("--polarity", type=int, choices=(1, 2), help="override the shipped crossbar preset")
    ap.add_argument("--slicing", choices=("plain", "sign"))
    ap.add_argument("--csv")
    args = ap.parse_args(argv)
    rows, cols = (int(v) for v in args.epitome.lower().split("x"))

    out = []
    for model in args.models:
        net = load_network(model)
        xbar = net.xbar or XbarConfig()
        if args.polarity or args.slicing:
            xbar = replace(xbar, polarity=args.polarity or xbar.polarity, slicing=args.slicing or xbar.slicing)
        base32 = map_network(net, xbar).crossbars
        for bits in args.bits:
            for epi in (False, True):
                variant = with_bits(apply_uniform(net, rows, cols, xbar) if epi else net, bits)
                m = map_network(variant, xbar)
                target = TARGETS.get((model, bits, epi)) if args.epitome == "1024x256" or not epi else None
                out.append({
                    "model": model, "bits": bits, "epitome": args.epitome if epi else "-",
                    "crossbars": m.crossbars, "target": target or "",
                    "deviation": f"{m.crossbars / target - 1:+.1%}" if target else "",
                    "cr": round(compression_rate(base32, m.crossbars), 3),
                    "utilization": round(m.utilization, 4),
                })

    keys = list(out[0])
    widths = {k: max(len(k), *(len(str(r[k])) for r in out)) for k in keys}
    print("  ".join(k.ljust(widths[k]) for k in keys))
    for r in out:
        print("  ".join(str(r[k]).ljust(widths[k]) for k in keys))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
