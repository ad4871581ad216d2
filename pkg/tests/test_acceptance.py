"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (also gathered
into the pytest terminal summary) and then asserts. Run as a script to get
only the report lines: ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from epitome_pim import cli  # noqa: E402
from epitome_pim.datapath import analytic_trace, execute_layer  # noqa: E402
from epitome_pim.epitome import (ConvSpec, EpitomeSpec, PatchDims, build_schedule, conv2d_reference,  # noqa: E402
                                 detect_wrap_factor, reconstruct, repetition_counts)
from epitome_pim.mapping import XbarConfig, compression_rate, map_layer  # noqa: E402
from epitome_pim.netspec import Layer, Network, apply_uniform, load_network  # noqa: E402
from epitome_pim.perf import HardwareProfile, evaluate_layer  # noqa: E402
from epitome_pim.pipeline import map_network, simulate_network  # noqa: E402
from epitome_pim.quant import (RangeWeights, classify_overlap, compute_scale, dequantize, make_params,  # noqa: E402
                               per_crossbar_params, quantize, tensor_params, weighted_range)
from epitome_pim.search import AdditiveEvaluator, Evaluation, SearchConfig, evolve, exhaustive_best  # noqa: E402

from helpers import KINDS, instance  # noqa: E402

REPORT: list[str] = []


def report(n: int, ok: bool, detail: str) -> bool:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    REPORT.append(line)
    print(line)
    return ok


def within(value, target, rel):
    return abs(value - target) <= rel * target


# 1 ---------------------------------------------------------------------------

def test_criterion_1_crossbar_counts():
    t0 = time.perf_counter()
    counts = {}
    for name in ("resnet50", "resnet101"):
        net = load_network(name)
        counts[name] = map_network(net, net.xbar).crossbars
    elapsed = time.perf_counter() - t0
    ok50 = within(counts["resnet50"], 13120, 0.05)
    ok101 = within(counts["resnet101"], 22912, 0.05)
    ok = report(1, ok50 and ok101 and elapsed < 1.0,
                f"resnet50={counts['resnet50']} (target 13120 +-5%, {counts['resnet50'] / 13120 - 1:+.2%}) "
                f"resnet101={counts['resnet101']} (target 22912 +-5%, {counts['resnet101'] / 22912 - 1:+.2%}) "
                f"runtime={elapsed:.3f}s (<1s)")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_criterion_2_compression_rate():
    base = load_network("resnet50")
    compact = apply_uniform(base, 1024, 256)
    b = map_network(base, base.xbar).crossbars
    e = map_network(compact, compact.xbar).crossbars
    cr = compression_rate(b, e)
    formula = compression_rate(13120, 428)
    ok_cr = within(cr, 2.30, 0.15)
    ok_formula = abs(formula - 30.65) <= 0.01
    ok = report(2, ok_cr and ok_formula,
                f"uniform 1024x256 CR={b}/{e}={cr:.4f} (target 2.30 +-15%); "
                f"13120/428={formula:.4f} (target 30.65 +-0.01)")
    assert ok


# 3 ---------------------------------------------------------------------------

def instances(seed=3, per_kind=20):
    rng = np.random.default_rng(seed)
    for kind in KINDS:
        for _ in range(per_kind):
            yield kind, (*instance(rng, kind), rng)


def run_instance(conv, epi, xbar, rng, wrap=False):
    s = build_schedule(conv, epi)
    m = map_layer(conv, xbar, epi)
    e = rng.integers(-9, 10, size=epi.shape)
    x = rng.integers(-9, 10, size=conv.input_shape)
    out, trace = execute_layer(x, e, s, m, wrap=wrap)
    return s, m, x, e, out, trace


def test_criterion_3_functional_equivalence():
    t0 = time.perf_counter()
    failures, kinds, features = [], {}, {"multi_row_block": 0, "multi_out_tile": 0, "replication": 0,
                                        "overlap": 0}
    for i, (kind, (conv, epi, xbar, rng)) in enumerate(instances()):
        s, m, x, e, out, _ = run_instance(conv, epi, xbar, rng)
        if not np.array_equal(out, conv2d_reference(x, reconstruct(e, s), conv)):
            failures.append(i)
        kinds[kind] = kinds.get(kind, 0) + 1
        counts = repetition_counts(s)
        features["multi_row_block"] += m.row_blocks > 1
        features["multi_out_tile"] += s.tiles_per_axis[0] > 1
        features["replication"] += detect_wrap_factor(s) > 1
        features["overlap"] += bool(classify_overlap(counts).any())
    elapsed = time.perf_counter() - t0
    n = sum(kinds.values())
    covered = all(v > 0 for v in features.values())
    ok = report(3, not failures and n == 100 and covered and elapsed < 10,
                f"{n - len(failures)}/{n} exact; coverage {features}; runtime={elapsed:.2f}s (<10s)")
    assert ok, failures


# 4 ---------------------------------------------------------------------------

def wrap_instances():
    rng = np.random.default_rng(44)
    for kind, inst in instances(seed=4, per_kind=40):
        yield inst
    # guaranteed replication layers with large factors
    for r in (2, 3, 4, 8):
        conv = ConvSpec("rep", c_in=3, c_out=2 * r, k_h=3, k_w=3, padding=1, input_h=5, input_w=5)
        yield conv, EpitomeSpec(2, 3, 3, 3, PatchDims(3, 3, 3, 2)), XbarConfig(8, 8), rng


def test_criterion_4_channel_wrapping():
    checked, bad = 0, []
    factors = set()
    for i, (conv, epi, xbar, rng) in enumerate(wrap_instances()):
        s = build_schedule(conv, epi)
        r = detect_wrap_factor(s)
        if r == 1:
            continue
        m = map_layer(conv, xbar, epi)
        x = rng.integers(-9, 10, size=conv.input_shape)
        e = rng.integers(-9, 10, size=epi.shape)
        off, t_off = execute_layer(x, e, s, m, wrap=False)
        on, t_on = execute_layer(x, e, s, m, wrap=True)
        c = conv.c_out // r
        a = np.array_equal(off, on)
        b = t_off.output_buffer_writes == r * t_on.output_buffer_writes
        shift = np.array_equal(on[:-c], on[c:])
        checked += 1
        factors.add(r)
        if not (a and b and shift):
            bad.append((i, a, b, shift))
    ok = report(4, checked > 0 and not bad,
                f"{checked - len(bad)}/{checked} wrap instances satisfy (a) equal values "
                f"(b) write ratio r (c) OFM period c_out/r; factors seen {sorted(factors)}")
    assert ok, bad


# 5 ---------------------------------------------------------------------------

def test_criterion_5_quantization():
    rng = np.random.default_rng(5)
    notes = []

    # (i) S is the exactly rounded value of (beta - alpha) / (2^k - 1)
    scale_bad = 0
    for _ in range(10_000):
        a, b = sorted(rng.integers(-2 ** 23, 2 ** 23, 2) / 2 ** 20)
        k = int(rng.choice([3, 5, 7, 9]))
        s = compute_scale(a, b, k)
        if Fraction(s) != Fraction(float((Fraction(b) - Fraction(a)) / (2 ** k - 1))):
            scale_bad += 1
    notes.append(f"scale exact-rounding failures={scale_bad}/10000")

    # (ii) round trip on a 10^4-point grid, covering the clamp region too
    rt_bad = 0
    for k in (3, 5, 7, 9):
        alpha, beta = -1.37, 2.91
        p = make_params(alpha, beta, k)
        grid = np.linspace(alpha - 0.5, beta + 0.5, 10_000)
        err = np.abs(dequantize(quantize(grid, p), p) - np.clip(grid, alpha, beta))
        bound = p.scale / 2 + np.spacing(max(abs(alpha), abs(beta)))
        rt_bad += int((err > bound).sum())
    notes.append(f"round-trip violations={rt_bad}/40000")

    # (iii) w1 = 1 gives the overlap region's min and max exactly
    values = np.array([-1.0, 0.5, 2.0, 0.25])
    counts = np.array([1, 2, 1, 3])
    mask = classify_overlap(counts)
    got = weighted_range(values, mask, RangeWeights(1.0, 0.0))
    degenerate_ok = got == (values[mask].min(), values[mask].max()) == (0.25, 0.5)
    notes.append(f"w1=1 range={got}")

    # (iv) per-crossbar error bounded by each crossbar's own range
    # two output channels on two single-column crossbars: [-1, 0] and [0, 4]
    conv = ConvSpec("t", c_in=16, c_out=2, weight_bits=2)
    epi = EpitomeSpec(2, 16, 1, 1, PatchDims(1, 1, 16, 2))
    e = np.stack([np.linspace(-1, 0, 16), np.linspace(0, 4, 16)]).reshape(2, 16, 1, 1)
    m = map_layer(conv, XbarConfig(rows=16, cols=1), epi)
    cnt = repetition_counts(build_schedule(conv, epi))
    per_ok = m.crossbars == 2
    errs = []
    wide = tensor_params(e, cnt, RangeWeights(), 3)
    for cq in per_crossbar_params(m, e, cnt, RangeWeights(), 3):
        block = e.reshape(2, -1).T[cq.rows, cq.cols]
        p = cq.params
        err = np.max(np.abs(dequantize(quantize(block, p), p) - np.clip(block, p.alpha, p.beta)))
        errs.append(round(float(err), 4))
        per_ok &= err <= p.scale / 2 + np.spacing(max(abs(p.alpha), abs(p.beta))) < wide.scale / 2
    notes.append(f"per-crossbar max errors={errs} vs shared S/2={wide.scale / 2:.4f}")

    ok = report(5, scale_bad == 0 and rt_bad == 0 and degenerate_ok and per_ok, "; ".join(notes))
    assert ok


# 6 ---------------------------------------------------------------------------

def synthetic(rng, layers, choices):
    costs = {(i, c): Evaluation(float(rng.uniform(1, 100)), float(rng.uniform(1, 100)),
                                int(rng.integers(1, 50)))
             for i in range(layers) for c in range(choices)}
    return AdditiveEvaluator(lambda i, c: costs[(i, c)]), [list(range(choices))] * layers


def test_criterion_6_search_vs_oracle():
    t0 = time.perf_counter()
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        ev, cands = synthetic(rng, 3, 3)
        totals = sorted(ev(c).crossbars for c in np.ndindex(3, 3, 3))
        budget = totals[len(totals) // 2]
        oracle = exhaustive_best(cands, ev, budget)
        res = evolve(SearchConfig(population_size=8, max_iterations=30, seed=seed, budget=budget), cands, ev)
        hits += res.feasible and res.best.reward == oracle.best.reward

    over, infeasible = 0, 0
    fuzz = np.random.default_rng(6)
    for i in range(1000):
        layers, choices = int(fuzz.integers(1, 6)), int(fuzz.integers(1, 5))
        ev, cands = synthetic(fuzz, layers, choices)
        budget = int(fuzz.integers(0, 50 * layers))
        res = evolve(SearchConfig(population_size=int(fuzz.integers(2, 9)), max_iterations=5,
                                  parent_count=1, seed=i, budget=budget,
                                  objective=str(fuzz.choice(["latency", "energy"]))), cands, ev)
        if res.feasible:
            over += res.best.evaluation.crossbars > budget
        else:
            infeasible += 1
    elapsed = time.perf_counter() - t0
    ok = report(6, hits == 20 and over == 0 and elapsed < 30,
                f"oracle agreement {hits}/20; over-budget results {over}/1000 fuzzed "
                f"({infeasible} reported infeasible); runtime={elapsed:.2f}s (<30s)")
    assert ok


# 7 ---------------------------------------------------------------------------

XB7 = XbarConfig(64, 16, 2)


def uniform_network(multiplier: int) -> Network:
    """Three chained layers whose epitomes keep 1/multiplier of the output channels."""
    convs = [ConvSpec("a", 32, 64, 3, 3, padding=1, input_h=8, input_w=8),
             ConvSpec("b", 64, 64, 3, 3, padding=1, input_h=8, input_w=8),
             ConvSpec("c", 64, 128, 1, 1, input_h=8, input_w=8)]
    layers = []
    for c in convs:
        if multiplier == 1:
            layers.append(Layer(c))
            continue
        e_cout = c.c_out // multiplier
        layers.append(Layer(c, EpitomeSpec(e_cout, c.c_in, c.k_h, c.k_w,
                                           PatchDims(c.k_w, c.k_h, c.c_in, e_cout))))
    return Network(f"m{multiplier}", tuple(layers), XB7)


def test_criterion_7_perf_trends():
    prof = HardwareProfile.default()

    # (a) same per-round shape, twice the rounds
    epi = EpitomeSpec(8, 4, 3, 3, PatchDims(3, 3, 4, 8))
    one = ConvSpec("one", 4, 8, 3, 3, padding=1, input_h=6, input_w=6)
    two = ConvSpec("two", 8, 8, 3, 3, padding=1, input_h=6, input_w=6)
    perf = {}
    for conv in (one, two):
        m = map_layer(conv, XbarConfig(64, 64, 2), epi)
        t = analytic_trace(build_schedule(conv, epi), m)
        perf[conv.name] = (t.activation_rounds, evaluate_layer(t, m, prof))
    (r1, p1), (r2, p2) = perf["one"], perf["two"]
    stage = ("xbar_read", "adc", "dac")
    a_ok = r2 == 2 * r1 and all(p2.breakdown[c][0] == 2 * p1.breakdown[c][0] for c in stage) \
        and p2.latency == 2 * p1.latency

    # (b) output-buffer-only profile isolates the wrapping saving
    b_ok, ratios = True, []
    for r in (2, 4):
        conv = ConvSpec("rep", 4, 2 * r, 3, 3, padding=1, input_h=6, input_w=6)
        rep = EpitomeSpec(2, 4, 3, 3, PatchDims(3, 3, 4, 2))
        s, m = build_schedule(conv, rep), map_layer(conv, XbarConfig(64, 64, 2), rep)
        obuf = prof.only("output_buffer_write")
        off = evaluate_layer(analytic_trace(s, m, wrap=False), m, obuf).energy
        on = evaluate_layer(analytic_trace(s, m, wrap=True), m, obuf).energy
        ratios.append(off / on)
        b_ok &= on == off / r

    # (c) latency ratio vs baseline against the mean round multiplier
    base = simulate_network(uniform_network(1), XB7, prof)
    rows = []
    for mult in (1, 2, 4, 8, 16):
        net = uniform_network(mult)
        sim = simulate_network(net, net.xbar, prof)
        round_mult = np.mean([t.activation_rounds / b.activation_rounds
                              for t, b in zip(sim.traces, base.traces)])
        cr = compression_rate(base.mappings.crossbars, sim.mappings.crossbars)
        rows.append((round_mult, sim.report.latency / base.report.latency, cr))
    rows.sort()
    lat = [r[1] for r in rows]
    c_ok = all(b > a for a, b in zip(lat, lat[1:]))
    trend = ", ".join(f"x{m:g}->lat {l:.2f} (CR {c:.2f})" for m, l, c in rows)
    ok = report(7, a_ok and b_ok and c_ok,
                f"(a) rounds {r1}->{r2} latency x{p2.latency / p1.latency:g}; "
                f"(b) wrap energy ratios {ratios}; (c) {trend}")
    assert ok


# 8 ---------------------------------------------------------------------------

CANDIDATES = """\
schema: epitome-pim-candidates/1
layers:
  stem: [none, {e_cout: 4, e_cin: 3, e_p: 3, e_q: 3}, {e_cout: 8, e_cin: 2, e_p: 2, e_q: 2}]
  rep: [none, {e_cout: 4, e_cin: 8, e_p: 3, e_q: 3}, {e_cout: 2, e_cin: 4, e_p: 2, e_q: 2}]
  head: [none, {e_cout: 3, e_cin: 8, e_p: 1, e_q: 1}, {e_cout: 6, e_cin: 4, e_p: 1, e_q: 1}]
"""


def test_criterion_8_determinism(tmp_path):
    cands = tmp_path / "cands.yaml"
    cands.write_text(CANDIDATES)
    runs = [("toy3", ["--candidates", str(cands), "--budget", "30", "--rows", "16", "--cols", "4"]),
            ("resnet50", ["--budget", "9000", "--iterations", "15"])]
    same = []
    for net, flags in runs:
        blobs = []
        for attempt in ("a", "b"):
            out = tmp_path / f"{net}-{attempt}"
            code = cli.main(["search", net, "--seed", "11", "--out-dir", str(out), *flags])
            assert code == 0
            blobs.append(tuple((out / f).read_bytes() for f in ("best_network.yaml", "history.csv")))
        same.append(blobs[0] == blobs[1])
    ok = report(8, all(same), f"byte-identical overlay+history across two runs: "
                              f"toy3={same[0]} resnet50={same[1]}")
    assert ok


if __name__ == "__main__":
    import tempfile

    results = []
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
                results.append(True)
            except AssertionError:
                results.append(False)
    sys.exit(0 if all(results) else 1)
