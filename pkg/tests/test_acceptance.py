"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they execute.
"""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from eedlab import io, metrics, runtime
from eedlab.actions import (circular_mask, make_permutation_action,
                            make_regular_channel_action, make_rotation_action,
                            make_trivial_action)
from eedlab.groups import make_cyclic
from eedlab.metrics import (channelwise_eed, filter_orbit_metric, generic_eed,
                            latent_eed, softmax_eed, symmetrize)
from eedlab.tensors import EUCLIDEAN

C2 = make_cyclic(2)
C4 = make_cyclic(4)


def _report(num: int, ok: bool, detail: str):
    print(f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def masked_inputs(count, seed, size=28, centered=False):
    rng = np.random.default_rng(seed)
    out = []
    c = (size - 1) / 2.0
    ys = np.arange(size)[:, None] - c
    xs = np.arange(size)[None, :] - c
    disc = ys * ys + xs * xs <= c * c
    for _ in range(count):
        img = np.zeros((size, size))
        for _ in range(3):
            cy, cx = rng.uniform(-size / 4, size / 4, size=2)
            sigma = rng.uniform(size / 10, size / 5)
            img += rng.uniform(0.3, 1.0) * np.exp(
                -((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sigma ** 2))
        img = img / img.max()
        if centered:
            # zero-mean texture keeps random conv responses sign-varied
            img += 0.25 * rng.standard_normal((size, size))
            img -= img[disc].mean()
        img = circular_mask(img.astype(np.float32))
        out.append(img[None, :, :])
    return out


def swap_action(carrier=(2,)):
    tables = np.stack([np.arange(2), np.array([1, 0])])
    return make_permutation_action(C2, tables, carrier, name="swap")


def roll16_action():
    tables = np.stack([(np.arange(16) + 4 * k) % 16 for k in range(4)])
    return make_permutation_action(C4, tables, (16,), name="roll4")


def test_criterion_1_exact_equivariance_oracle():
    model = runtime.build_c4_equivariant_model(blocks=2, channels_per_block=2,
                                               classes=5, seed=1)
    data = masked_inputs(20, seed=101)
    worst_channelwise = -1.0
    for tap in model.block_taps:
        act = make_regular_channel_action(C4, model.layer_shapes[tap - 1])
        rep = channelwise_eed(model, tap, act, data)
        worst_channelwise = max(worst_channelwise, rep.mean)
    act_in = make_rotation_action(C4, model.input_shape)
    feat = runtime.feature_function(model)
    latent = latent_eed(feat, act_in, EUCLIDEAN, data, data, normalize=True)
    ok = worst_channelwise <= -0.99999 and latent.mean <= 1e-5
    _report(1, ok, f"channelwise worst {worst_channelwise:.8f} (<= -0.99999), "
                   f"latent {latent.mean:.3e} (<= 1e-5)")


def test_criterion_2_equivariance_detection_both_directions():
    act = roll16_action()
    rng = np.random.default_rng(2)
    raw = rng.standard_normal((16, 16))
    basis = np.eye(16)
    mats = [np.stack([act.apply(g, basis[i]) for i in range(16)], axis=1)
            for g in range(4)]
    averaged = sum(mats[(4 - g) % 4] @ raw @ mats[g] for g in range(4)) / 4.0
    # independent oracle first: the equivariance equation on every basis vector
    for g in range(4):
        for i in range(16):
            np.testing.assert_allclose(averaged @ act.apply(g, basis[i]),
                                       act.apply(g, averaged @ basis[i]),
                                       atol=1e-10)
    data = [rng.standard_normal(16) for _ in range(10)]
    zero = generic_eed(lambda v: averaged @ v, act, act, EUCLIDEAN, data).mean
    noise = rng.standard_normal((16, 16))
    means = []
    for delta in (1e-3, 1e-2, 1e-1):
        f = lambda v, d=delta: (averaged + d * noise) @ v
        means.append(generic_eed(f, act, act, EUCLIDEAN, data).mean)
    ok = (zero <= 1e-6 and means[0] < means[1] < means[2]
          and all(m > 1e-5 for m in means))
    _report(2, ok, f"averaged map {zero:.2e} (<= 1e-6); perturbed means "
                   f"{means[0]:.2e} < {means[1]:.2e} < {means[2]:.2e} (all > 1e-5)")


def test_criterion_3_invariant_composite_with_non_equivariant_factor():
    act_x = swap_action()
    act_y = make_trivial_action(C2, (1,))
    rng = np.random.default_rng(3)
    data = [np.array([math.cos(t), math.sin(t)])
            for t in rng.uniform(0, 2 * math.pi, size=12)]
    f = lambda v: np.array([(v[0] + v[1]) / 2.0])
    f1 = lambda v: np.array([2.0 * v[0], v[1]])
    whole = generic_eed(f, act_x, act_y, EUCLIDEAN, data).mean
    factor = generic_eed(f1, act_x, swap_action(), EUCLIDEAN, data).mean
    ok = whole <= 1e-7 and factor >= 0.1
    _report(3, ok, f"composite {whole:.2e} (<= 1e-7), factor {factor:.4f} (>= 0.1)")


def test_criterion_4_latent_normalization():
    act = swap_action()
    rng = np.random.default_rng(4)
    base = lambda v: np.array([v[0] ** 3 + 0.5 * v[1], v[0] - v[1], 0.25 * v[1] ** 2])
    data = [rng.standard_normal(2) for _ in range(8)]
    norm = [rng.standard_normal(2) for _ in range(10)]
    ref = latent_eed(base, act, EUCLIDEAN, data, norm).mean
    worst_rel = 0.0
    for c in (0.1, 3.7, 100.0):
        scaled = lambda v, c=c: c * base(v)
        got = latent_eed(scaled, act, EUCLIDEAN, data, norm).mean
        worst_rel = max(worst_rel, abs(got - ref) / ref)

    two_point = latent_eed(lambda v: v, act, EUCLIDEAN,
                           [np.array([1.0, 0.0])],
                           [np.array([1.0, 0.0]), np.array([0.0, 1.0]),
                            np.array([2.0, 0.0])]).mean
    ok = worst_rel <= 1e-9 and abs(two_point - 0.4560) <= 1e-3
    _report(4, ok, f"scaling drift {worst_rel:.2e} (<= 1e-9), two-point "
                   f"{two_point:.6f} (0.4560 +/- 1e-3)")


def test_criterion_5_softmax_oracle_and_symmetrization():
    act = swap_action()
    f = lambda v: np.array([0.8, 0.2]) if v[0] >= v[1] else np.array([0.2, 0.8])
    hand = softmax_eed(f, act, [np.array([1.0, 0.0])]).mean
    expect = 0.8 * math.log(1.6) + 0.2 * math.log(0.4)
    sym = symmetrize(f, act)
    rng = np.random.default_rng(5)
    symmetric_score = softmax_eed(sym, act, [rng.standard_normal(2)
                                             for _ in range(4)]).mean
    ok = abs(hand - 0.19274) <= 1e-4 and abs(hand - expect) <= 1e-6 \
        and symmetric_score <= 1e-6
    _report(5, ok, f"hand oracle {hand:.6f} (0.19274 +/- 1e-4), symmetrized "
                   f"{symmetric_score:.2e} (<= 1e-6)")


def test_criterion_6_filter_orbit_ordering():
    rng = np.random.default_rng(6)
    base = rng.standard_normal((4, 2, 7, 7)).astype(np.float32)
    orbit_layer = runtime.lift_filters(base, 4)
    zero = filter_orbit_metric(orbit_layer, C4, trials=20, seed=0)
    pinned = filter_orbit_metric(
        np.random.default_rng(123).standard_normal((16, 2, 7, 7)).astype(np.float32),
        C4, trials=20, seed=42)
    wins = 0
    for seed in range(20):
        rnd = np.random.default_rng(1000 + seed).standard_normal(
            (16, 2, 7, 7)).astype(np.float32)
        random_value = filter_orbit_metric(rnd, C4, trials=10, seed=seed)
        orbit_seeded = runtime.lift_filters(
            np.random.default_rng(2000 + seed).standard_normal(
                (4, 2, 7, 7)).astype(np.float32), 4)
        equivariant_value = filter_orbit_metric(orbit_seeded, C4, trials=10, seed=seed)
        if equivariant_value < random_value:
            wins += 1
    ok = zero == 0.0 and pinned > 0.0 and wins == 20
    _report(6, ok, f"orbit layer {zero} (== 0.0), random pinned {pinned:.4f} (> 0), "
                   f"ordering {wins}/20 seeds")


def test_criterion_7_conventional_vs_equivariant_ordering():
    data = masked_inputs(6, seed=107, centered=True)
    all_hold = True
    gaps = []
    for seed in range(10):
        cnn = runtime.build_standard_cnn(2, [8, 8], 5, seed=seed)
        oracle = runtime.build_c4_equivariant_model(2, 2, 5, seed=seed)
        for tap_c, tap_o in zip(cnn.block_taps, oracle.block_taps):
            act_c = make_rotation_action(C4, cnn.layer_shapes[tap_c - 1])
            act_o = make_regular_channel_action(C4, oracle.layer_shapes[tap_o - 1])
            mean_c = channelwise_eed(cnn, tap_c, act_c, data).mean
            mean_o = channelwise_eed(oracle, tap_o, act_o, data).mean
            gaps.append(mean_c - mean_o)
            if not mean_c > mean_o:
                all_hold = False
    _report(7, all_hold, f"conventional minus equivariant channelwise gap in "
                         f"[{min(gaps):.4f}, {max(gaps):.4f}] over 10 seeds x "
                         f"2 blocks (all > 0)")


def test_criterion_8_thread_count_determinism(tmp_path):
    ds = tmp_path / "ds"
    mdl = tmp_path / "m"
    from eedlab.cli import dispatch
    assert dispatch(["synthesize", "--count", "10", "--classes", "3",
                     "--size", "28", "--seed", "1", "--out", str(ds)]) == 0
    assert dispatch(["model-init", "--arch", "standard", "--blocks", "2",
                     "--channels", "4,8", "--classes", "3", "--seed", "2",
                     "--out", str(mdl)]) == 0
    out = tmp_path / "report.json"
    blobs = []
    for threads in ("1", "8"):
        env = dict(os.environ, EEDLAB_THREADS=threads)
        proc = subprocess.run(
            [sys.executable, "-m", "eedlab.cli", "eed", "softmax",
             "--group", "c8", "--action", "rot",
             "--model", str(mdl / "model.json"), "--data", str(ds / "dataset.json"),
             "--samples", "8", "--seed", "42", "--emit-pairs", "--out", str(out)],
            env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        blobs.append(out.read_bytes())
    ok = blobs[0] == blobs[1]
    detail = f"EEDLAB_THREADS 1 vs 8 report bytes identical ({len(blobs[0])} bytes)"
    _report(8, ok, detail)
    rep = json.loads(blobs[0])
    assert rep["ci_low"] <= rep["mean"] <= rep["ci_high"]
