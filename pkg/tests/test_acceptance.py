"""End-to-end acceptance checks; each test prints and records one PASS/FAIL line."""

import math
import statistics
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from psotrack.geometry import PoseVector
from psotrack.harness import similarity_surface, track_synthetic, write_errors_csv
from psotrack.imaging import gain_ramp, generate_sequence, random_motion_schedule
from psotrack.optimizer import CIRCLE, GLOBAL, SearchBounds, optimize, preset
from psotrack.similarity import HistogramConfig, SimilarityMeasure, entropy, joint_entropy, mutual_information
from psotrack.tracker import TRACKER_STALL_ITERATIONS, TrackerConfig, frame_fitness_batch, init_tracker

ROOT = Path(__file__).resolve().parent.parent

FRAMES = 100
MAX_STEP = 0.01
MAX_ROT = 0.02
MOTION_SEED = 42
TRACK_SEED = 42


def report_line(criterion, number, passed, detail):
    criterion(number, passed, detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def tracker_config(measure, seed, camera, dof=6):
    return TrackerConfig(
        dof=dof,
        measure=SimilarityMeasure.parse(measure),
        pso=preset("common", stall_iterations=TRACKER_STALL_ITERATIONS, seed=seed),
        intrinsics=camera,
    )


def motion():
    return random_motion_schedule(FRAMES, MAX_STEP, MAX_ROT, seed=MOTION_SEED)


@pytest.fixture(scope="module")
def plain_sequence(base, region, camera):
    return generate_sequence(base, region, camera, motion(), [1.0] * FRAMES)


@pytest.fixture(scope="module")
def gain_sequence(base, region, camera):
    return generate_sequence(base, region, camera, motion(), gain_ramp(FRAMES, 0.3))


@pytest.fixture(scope="module")
def reference_run(plain_sequence, region, camera, tmp_path_factory):
    cfg = tracker_config("mi", TRACK_SEED, camera)
    start = time.perf_counter()
    report = track_synthetic(plain_sequence, region, cfg, run="mi_dof6_common_s42")
    elapsed = time.perf_counter() - start
    path = tmp_path_factory.mktemp("run1") / "errors.csv"
    write_errors_csv(path, report)
    return report, elapsed, path.read_bytes()


# 1


def test_criterion_1_trivial_examples(criterion):
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-m", "trivial", "-p", "no:cacheprovider", "tests"],
        cwd=ROOT,
        capture_output=True,
        text=True,
    )
    elapsed = time.perf_counter() - start
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    passed = proc.returncode == 0 and elapsed < 10.0
    report_line(criterion, 1, passed, f"{summary}; wall {elapsed:.1f} s (limit 10 s)")
    assert proc.returncode == 0, proc.stdout[-2000:]
    assert elapsed < 10.0


# 2


def _brute_entropy(labels):
    counts = {}
    for v in labels:
        counts[v] = counts.get(v, 0) + 1
    n = len(labels)
    return -math.fsum((c / n) * math.log2(c / n) for c in counts.values())


def test_criterion_2_entropy_oracle(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    symmetric = bounded = True
    for case in range(200):
        bins = (2, 8, 32)[case % 3]
        n = int(rng.integers(1, 1001))
        a = rng.uniform(0, 1, n)
        # mix in dependent streams so the MI bound is exercised away from zero
        b = np.clip(a + rng.normal(0, 0.1, n), 0, 1) if case % 2 else rng.uniform(0, 1, n)
        cfg = HistogramConfig(bins)
        la = [min(int(v * bins), bins - 1) for v in a]
        lb = [min(int(v * bins), bins - 1) for v in b]
        worst = max(
            worst,
            abs(entropy(a, cfg=cfg) - _brute_entropy(la)),
            abs(joint_entropy(a, b, cfg=cfg) - _brute_entropy(list(zip(la, lb)))),
        )
        mi = mutual_information(a, b, cfg=cfg)
        symmetric &= mi == mutual_information(b, a, cfg=cfg)
        bounded &= 0.0 <= mi <= min(entropy(a, cfg=cfg), entropy(b, cfg=cfg)) + 1e-9
    passed = worst <= 1e-12 and symmetric and bounded
    report_line(
        criterion, 2, passed,
        f"200 streams: max |histogram - brute force| = {worst:.2e}; symmetry {symmetric}; bound {bounded}",
    )
    assert worst <= 1e-12 and symmetric and bounded


# 3


@pytest.mark.slow
def test_criterion_3_synthetic_tracking(reference_run, criterion):
    report, elapsed, _ = reference_run
    passed = (
        len(report.errors) == FRAMES
        and report.mean_corner_rmse < 2.0
        and report.max_corner_rmse < 5.0
        and not report.any_lost
        and elapsed < 300.0
    )
    report_line(
        criterion, 3, passed,
        f"MI dof 6 seed 42: mean {report.mean_corner_rmse:.3f} px (<2), max {report.max_corner_rmse:.3f} px (<5), "
        f"lost {sum(report.lost)}/{len(report.lost)}, {elapsed:.0f} s (<300)",
    )
    assert len(report.errors) == FRAMES
    assert report.mean_corner_rmse < 2.0
    assert report.max_corner_rmse < 5.0
    assert not report.any_lost
    assert elapsed < 300.0


# 4


@pytest.mark.slow
def test_criterion_4_intensity_robustness(gain_sequence, region, camera, criterion):
    lines, ok = [], True
    for seed in range(42, 47):
        mi = track_synthetic(gain_sequence, region, tracker_config("mi", seed, camera))
        ssd = track_synthetic(gain_sequence, region, tracker_config("ssd", seed, camera))
        mi_ok = mi.mean_corner_rmse < 2.5 and not mi.any_lost
        ssd_worse = ssd.any_lost or ssd.mean_corner_rmse >= 3.0 * mi.mean_corner_rmse
        ok &= mi_ok and ssd_worse
        ssd_text = f"lost at frame {len(ssd.lost)}" if ssd.any_lost else f"{ssd.mean_corner_rmse:.3f} px"
        lines.append(f"s{seed}: MI {mi.mean_corner_rmse:.3f} px, SSD {ssd_text}")
    report_line(criterion, 4, ok, "gain ramp to 1.3; " + "; ".join(lines))
    assert ok


# 5


def test_criterion_5_similarity_surfaces(base, region, camera, criterion):
    truth = [0.0125, -0.0075]
    centre = 20
    cells, ok = {}, True
    for gain in (1.0, 1.3):
        frame = generate_sequence(base, region, camera, [PoseVector(2, truth)], [gain]).frames[1]
        for measure in ("mi", "ncc", "ssd"):
            cfg = TrackerConfig(dof=2, measure=SimilarityMeasure.parse(measure), intrinsics=camera)
            s = similarity_surface(base, frame, region, cfg, grid=41, center=truth, half_width=0.05)
            r, c = s.argmax()
            cells[(gain, measure)] = (r - centre, c - centre)
            near = abs(r - centre) <= 1 and abs(c - centre) <= 1
            if gain == 1.0 or measure != "ssd":
                ok &= near
    detail = "; ".join(f"gain {g} {m} offset {cells[(g, m)]}" for g, m in cells)
    report_line(criterion, 5, ok, f"argmax cell offset from truth (41x41, +/-0.05): {detail}")
    assert ok


# 6


def test_criterion_6_dof_scaling(base, region, camera, criterion):
    frame = generate_sequence(
        base, region, camera, [PoseVector(2, [3.0 / camera.fx, -2.0 / camera.fy])], [1.0]
    ).frames[1]
    medians, fitness = {}, {}
    for dof in (2, 4, 6):
        cfg = TrackerConfig(
            dof=dof, measure=SimilarityMeasure.parse("mi"), pso=preset("trelea"), intrinsics=camera
        )
        state = init_tracker(base, region, cfg)
        its, fits = [], []
        for seed in range(10):
            result = optimize(
                lambda xs: frame_fitness_batch(state, frame, cfg, xs),
                replace(cfg.pso, seed=seed),
                cfg.bounds,
                batch=True,
            )
            its.append(result.iterations_used)
            fits.append(result.best_fitness)
        medians[dof] = statistics.median(its)
        fitness[dof] = statistics.median(fits)
    ok = medians[2] <= medians[4] <= medians[6] and fitness[2] >= fitness[6]
    report_line(
        criterion, 6, ok,
        "median iterations (2/4/6 DOF) {} / {} / {}; median fitness {:.3f} / {:.3f} / {:.3f}".format(
            medians[2], medians[4], medians[6], fitness[2], fitness[4], fitness[6]
        ),
    )
    assert ok


# 7


def _sphere(x):
    return -float(np.dot(x, x))


def _rastrigin(x):
    return -float(10 * len(x) + np.sum(x * x - 10 * np.cos(2 * np.pi * x)))


def test_criterion_7_optimizer_benchmarks(criterion):
    parts, ok = [], True
    for k in (2, 6):
        bounds = SearchBounds.symmetric([1.0] * k)
        hits = []
        for seed in range(20):
            cfg = preset("common", max_iterations=200, stall_iterations=200, seed=seed)
            trace = optimize(_sphere, cfg, bounds).trace
            hits.append(next((i + 1 for i, f in enumerate(trace) if f >= -1e-4), None))
        reached = sum(h is not None for h in hits)
        ok &= reached == 20
        parts.append(f"sphere {k}-D {reached}/20 (latest iteration {max(h or 999 for h in hits)})")

    bounds = SearchBounds.symmetric([5.12, 5.12])
    found = 0
    for seed in range(20):
        cfg = preset("common", swarm_size=40, max_iterations=500, stall_iterations=500, seed=seed)
        found += optimize(_rastrigin, cfg, bounds).best_fitness >= -1e-2
    ok &= found >= 16
    parts.append(f"Rastrigin 2-D {found}/20 (need 16)")

    for k in (2, 6):
        bounds = SearchBounds.symmetric([1.0] * k)
        med = {}
        for topology in (GLOBAL, CIRCLE):
            its = [
                optimize(
                    _sphere,
                    preset("trelea", topology=topology, max_iterations=1000,
                           improvement_threshold=1e-6, seed=seed),
                    bounds,
                ).iterations_used
                for seed in range(20)
            ]
            med[topology.kind] = statistics.median(its)
        ok &= med["global"] <= med["circle"]
        parts.append(f"stall {k}-D global {med['global']} <= circle {med['circle']}")
    report_line(criterion, 7, ok, "; ".join(parts))
    assert ok


# 8


@pytest.mark.slow
def test_criterion_8_determinism(reference_run, plain_sequence, region, camera, tmp_path, criterion):
    _, _, first = reference_run
    report = track_synthetic(plain_sequence, region, tracker_config("mi", TRACK_SEED, camera))
    write_errors_csv(tmp_path / "errors.csv", report)
    second = (tmp_path / "errors.csv").read_bytes()
    same = first == second
    report_line(criterion, 8, same, f"errors CSV of two criterion-3 runs byte-identical: {same} ({len(first)} bytes)")
    assert same
