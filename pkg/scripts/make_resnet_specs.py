"""Regenerate the shipped ResNet-50/101 network files (torchvision layer naming)."""

import argparse
from pathlib import Path

from epitome_pim.epitome import ConvSpec
from epitome_pim.mapping import XbarConfig
from epitome_pim.netspec import Layer, Network, dump_network

DEPTHS = {"resnet50": (3, 4, 6, 3), "resnet101": (3, 4, 23, 3)}


def resnet(name: str, blocks, weight_bits: int = 32) -> Network:
    layers = [ConvSpec("conv1", 3, 64, 7, 7, stride=2, padding=3, input_h=224, input_w=224,
                       weight_bits=weight_bits)]
    c_in, hw = 64, 56           # after the stride-2 max pool
    for stage, (n, width) in enumerate(zip(blocks, (64, 128, 256, 512)), start=1):
        for b in range(n):
            stride = 2 if (b == 0 and stage > 1) else 1
            prefix = f"layer{stage}.{b}"
            out_hw = hw // stride
            layers.append(ConvSpec(f"{prefix}.conv1", c_in, width, 1, 1, input_h=hw, input_w=hw,
                                   weight_bits=weight_bits))
            layers.append(ConvSpec(f"{prefix}.conv2", width, width, 3, 3, stride=stride, padding=1,
                                   input_h=hw, input_w=hw, weight_bits=weight_bits))
            layers.append(ConvSpec(f"{prefix}.conv3", width, 4 * width, 1, 1, input_h=out_hw,
                                   input_w=out_hw, weight_bits=weight_bits))
            if b == 0:
                layers.append(ConvSpec(f"{prefix}.downsample", c_in, 4 * width, 1, 1, stride=stride,
                                       input_h=hw, input_w=hw, weight_bits=weight_bits))
            c_in, hw = 4 * width, out_hw
    layers.append(ConvSpec.fc("fc", 2048, 1000, weight_bits=weight_bits))
    return Network(name, tuple(Layer(c) for c in layers), XbarConfig.differential())


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/epitome_pim/data"))
    args = ap.parse_args()
    for name, depth in DEPTHS.items():
        path = Path(args.out) / f"{name}.yaml"
        path.write_text(dump_network(resnet(name, depth)))
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
