"""Independent oracles and random instance generators shared by the tests."""

from __future__ import annotations

import numpy as np

from epitome_pim.epitome import ConvSpec, EpitomeSpec, PatchDims
from epitome_pim.mapping import XbarConfig


def brute_conv(x, w, stride, padding):
    """Per-output-element accumulation with explicit bounds checks (no padding array)."""
    c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((c_out, ho, wo), dtype=object)
    for o in range(c_out):
        for oy in range(ho):
            for ox in range(wo):
                acc = 0
                for c in range(c_in):
                    for a in range(kh):
                        for b in range(kw):
                            iy, ix = oy * stride + a - padding, ox * stride + b - padding
                            if 0 <= iy < h and 0 <= ix < wd:
                                acc += int(x[c, iy, ix]) * int(w[o, c, a, b])
                out[o, oy, ox] = acc
    return out.astype(np.int64)


def expected_starts(conv_dim, patch_dim, epi_dim):
    n = -(-conv_dim // patch_dim)
    if n == 1 or epi_dim == patch_dim:
        return [0] * n
    return [int(np.floor(j * (epi_dim - patch_dim) / (n - 1) + 0.5)) for j in range(n)]


def random_conv(rng, name="l", max_dim=8):
    k_h, k_w = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    padding = int(rng.integers(0, 2))
    h = int(rng.integers(max(1, k_h - 2 * padding), max_dim + 1))
    w = int(rng.integers(max(1, k_w - 2 * padding), max_dim + 1))
    return ConvSpec(name, c_in=int(rng.integers(1, max_dim + 1)), c_out=int(rng.integers(1, max_dim + 1)),
                    k_h=k_h, k_w=k_w, stride=int(rng.integers(1, 3)), padding=padding,
                    input_h=h, input_w=w)


def random_epitome(rng, conv):
    e_cout = int(rng.integers(1, conv.c_out + 1))
    e_cin = int(rng.integers(1, conv.c_in + 1))
    e_p = int(rng.integers(1, conv.k_h + 1))
    e_q = int(rng.integers(1, conv.k_w + 1))
    patch = PatchDims(w=int(rng.integers(1, e_q + 1)), h=int(rng.integers(1, e_p + 1)),
                      beta1=int(rng.integers(1, e_cin + 1)), beta2=int(rng.integers(1, e_cout + 1)))
    return EpitomeSpec(e_cout, e_cin, e_p, e_q, patch)


def replication_instance(rng):
    conv0 = random_conv(rng)
    e_cout = int(rng.integers(1, 5))
    r = int(rng.integers(2, 8 // e_cout + 1)) if e_cout <= 4 else 2
    conv = ConvSpec("rep", conv0.c_in, e_cout * r, conv0.k_h, conv0.k_w, conv0.stride, conv0.padding,
                    conv0.input_h, conv0.input_w)
    e_cin = int(rng.integers(1, conv.c_in + 1))
    patch = PatchDims(w=conv.k_w, h=conv.k_h, beta1=int(rng.integers(1, e_cin + 1)), beta2=e_cout)
    return conv, EpitomeSpec(e_cout, e_cin, conv.k_h, conv.k_w, patch)


def overlap_instance(rng):
    conv0 = random_conv(rng)
    c_out = int(rng.integers(4, 9))
    beta2 = int(rng.integers(1, c_out // 2 + 1))
    e_cout = int(rng.integers(beta2 + 1, c_out + 1))
    conv = ConvSpec("ovl", conv0.c_in, c_out, conv0.k_h, conv0.k_w, conv0.stride, conv0.padding,
                    conv0.input_h, conv0.input_w)
    e_cin = int(rng.integers(1, conv.c_in + 1))
    patch = PatchDims(w=conv.k_w, h=conv.k_h, beta1=e_cin, beta2=beta2)
    return conv, EpitomeSpec(e_cout, e_cin, conv.k_h, conv.k_w, patch)


def instance(rng, kind):
    """(conv, epitome, xbar) for one of the scheduled instance families."""
    if kind == "replication":
        conv, epi = replication_instance(rng)
        return conv, epi, XbarConfig(rows=8, cols=8)
    if kind == "overlap":
        conv, epi = overlap_instance(rng)
        return conv, epi, XbarConfig(rows=8, cols=8)
    conv = random_conv(rng)
    epi = random_epitome(rng, conv)
    if kind == "multi_row_block":
        return conv, epi, XbarConfig(rows=int(rng.integers(1, 4)), cols=8)
    if kind == "multi_out_tile":
        return conv, epi, XbarConfig(rows=8, cols=int(rng.integers(1, 3)))
    return conv, epi, XbarConfig(rows=int(rng.integers(1, 9)), cols=int(rng.integers(1, 9)))


KINDS = ("replication", "overlap", "multi_row_block", "multi_out_tile", "general")
