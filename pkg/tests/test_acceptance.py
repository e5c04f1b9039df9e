"""End-to-end acceptance checks; each prints one PASS/FAIL line in the run summary."""

import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from rmtdetect.cli import iid_window, main
from rmtdetect.detect import flag_events, msr_series
from rmtdetect.ingest import parse_frames
from rmtdetect.rmt import (
    KdeEstimate,
    MpModel,
    covariance_eigs,
    inner_radius,
    kde_pdf,
    mp_cdf,
    mp_fit_statistic,
    mp_pdf,
    msr,
    product_chain,
    ring_mean_radius,
    ring_pdf,
    ring_spectrum,
    row_standardize,
    singular_value_equivalent,
)

T = 10
STRIDE = 10


def _mp_trials(distribution):
    n, t = 200, 800
    stats, first = [], None
    for trial in range(20):
        eigs = covariance_eigs(row_standardize(iid_window(n, t, distribution, 1000 + trial)))
        first = eigs if first is None else first
        stats.append(mp_fit_statistic(eigs, MpModel(c=n / t)))
    return stats, first


def _oracle_cdf_check(eigs, c):
    # direct integration of the density at the observed eigenvalues
    m = MpModel(c=c)
    pts = eigs[(eigs > m.a) & (eigs < m.b)][::10]
    want = [integrate.quad(lambda x: mp_pdf(m, x), m.a, e, limit=200, epsabs=1e-12)[0] for e in pts]
    return float(np.max(np.abs(mp_cdf(m, pts) - want)))


def test_criterion_1_mp_convergence(criterion):
    with criterion(1, "MP law convergence, gaussian N=200 T=800") as rec:
        start = time.perf_counter()
        stats, first = _mp_trials("gaussian")
        elapsed = time.perf_counter() - start
        passed = sum(s < 0.05 for s in stats)
        cdf_err = _oracle_cdf_check(first, 0.25)
        rec.detail = f"{passed}/20 below 0.05 (max {max(stats):.4f}), {elapsed:.2f} s, cdf vs quadrature {cdf_err:.1e}"
        assert passed >= 19
        assert elapsed < 10
        assert cdf_err < 1e-7


def test_criterion_2_universality(criterion):
    with criterion(2, "universality, uniform and symmetric Bernoulli entries") as rec:
        parts, ok = [], True
        for dist in ("uniform", "bernoulli-symmetric"):
            stats, _ = _mp_trials(dist)
            passed = sum(s < 0.05 for s in stats)
            ok &= passed >= 19
            parts.append(f"{dist} {passed}/20 (max {max(stats):.4f})")
        rec.detail = ", ".join(parts)
        assert ok


def _ring_eigs(n, t, seed):
    sw = row_standardize(np.random.default_rng(seed).normal(size=(n, t)))
    return ring_spectrum(product_chain([singular_value_equivalent(sw, seed)]), sw.c)


def test_criterion_3_ring_law(criterion):
    with criterion(3, "ring law N=400 T=800 L=1, 10 trials") as rec:
        lo, hi = math.sqrt(0.5) - 0.05, 1.05
        fracs = []
        for seed in range(10):
            r = np.abs(_ring_eigs(400, 800, seed).eigenvalues)
            fracs.append(float(np.mean((r >= lo) & (r <= hi))))
        rec.detail = f"min in-annulus fraction {min(fracs):.4f}"
        assert min(fracs) >= 0.97


def test_criterion_4_msr_mean(criterion):
    with criterion(4, "MSR mean over 50 windows, c=0.5 and c=0.8") as rec:
        parts, ok = [], True
        for c, n, t in ((0.5, 200, 400), (0.8, 200, 250)):
            expect = 2 * (1 - (1 - c) ** 1.5) / (3 * c)
            assert ring_mean_radius(c) == pytest.approx(expect, rel=1e-14)
            got = float(np.mean([msr(_ring_eigs(n, t, 500 + s)) for s in range(50)]))
            ok &= abs(got - expect) <= 0.02
            parts.append(f"c={c} N={n} T={t}: {got:.5f} vs {expect:.6f}")
        rec.detail = "; ".join(parts)
        assert ok


def test_criterion_5_normalizations(criterion):
    with criterion(5, "density normalizations") as rec:
        worst = 0.0
        for c in (0.1, 0.25, 0.5, 0.9):
            m = MpModel(c=c)
            tot = integrate.quad(lambda x: mp_pdf(m, x), m.a, m.b, limit=400, epsabs=1e-13)[0]
            worst = max(worst, abs(tot - 1))
        mp_worst = worst
        worst = 0.0
        for c in (0.25, 0.5, 0.75):
            for L in (1, 2, 3):
                f = lambda r: ring_pdf(c, L, r) * 2 * math.pi * r  # noqa: E731
                worst = max(worst, abs(integrate.quad(f, inner_radius(c, L), 1.0, epsabs=1e-13)[0] - 1))
        ring_worst = worst
        eigs = covariance_eigs(row_standardize(np.random.default_rng(0).normal(size=(50, 100))))
        k = KdeEstimate.silverman(eigs)
        lo, hi = eigs.min() - 10 * k.bandwidth, eigs.max() + 10 * k.bandwidth
        kde_err = abs(integrate.quad(lambda x: kde_pdf(k, x), lo, hi, limit=2000, epsabs=1e-13)[0] - 1)
        rec.detail = f"max error MP {mp_worst:.1e}, ring {ring_worst:.1e}, KDE {kde_err:.1e}"
        assert max(mp_worst, ring_worst, kde_err) < 1e-6


def test_criterion_6_singular_values(criterion):
    with criterion(6, "SVE preserves singular values, 100 cases N<=64") as rec:
        rng = np.random.default_rng(6)
        worst = 0.0
        for case in range(100):
            n = int(rng.integers(1, 65))
            t = n + int(rng.integers(1, 65))
            sw = row_standardize(rng.normal(size=(n, t)) * rng.uniform(0.1, 10, size=(n, 1)))
            a = np.sort(np.linalg.svd(singular_value_equivalent(sw, case), compute_uv=False))
            b = np.sort(np.linalg.svd(sw.matrix, compute_uv=False))
            worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(b, 1e-300))))
        rec.detail = f"max relative error {worst:.1e}"
        assert worst <= 1e-9


@pytest.fixture(scope="module")
def scenario_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    runs = {}
    start = time.perf_counter()
    for name, preset, seed in (("fault", "fault", 0), ("fault-s1", "fault", 1), ("fault-s2", "fault", 2), ("quiet", "quiet", 0)):
        sim, ana = root / name / "sim", root / name / "ana"
        assert main(["simulate", "--preset", preset, "--seed", str(seed), "--out", str(sim)]) == 0
        t0 = time.perf_counter()
        rc = main(["analyze", "--input", str(sim / "frames.csv"), "--stride", str(STRIDE), "--window", str(T), "--out", str(ana)])
        assert rc == 0
        scenario = json.loads((sim / "scenario.json").read_text())
        runs[name] = {
            "scenario": scenario,
            "frames": parse_frames((sim / "frames.csv").read_text(), "csv"),
            "events": json.loads((ana / "events.json").read_text()),
            "pca": [json.loads(x) for x in (ana / "pca.jsonl").read_text().splitlines()],
            "analyze_seconds": time.perf_counter() - t0,
        }
    runs["_total"] = time.perf_counter() - start
    return runs


def _onset_windows(t0):
    return {i for i in range(t0 // STRIDE + 1) if i * STRIDE <= t0 < i * STRIDE + T}


def test_criterion_7_end_to_end(criterion, scenario_runs):
    with criterion(7, "end-to-end detection on the default and no-event scenarios") as rec:
        fault, quiet = scenario_runs["fault"], scenario_runs["quiet"]
        # reported only: overlapping windows (stride 1) are not the evaluated cadence
        dense = {k: len(flag_events(msr_series(scenario_runs[k]["frames"], T=T, stride=1))) for k in ("fault", "quiet")}
        t0 = fault["scenario"]["events"][0]["t0"]
        ev = fault["events"]
        hit = len(ev) == 1 and any(ev[0]["start"] - T <= w <= ev[0]["end"] + T for w in _onset_windows(t0))
        where = f"windows {ev[0]['start']}-{ev[0]['end']}" if ev else "none"
        rec.detail = (
            f"fault: {len(ev)} event(s) at {where}, onset t0={t0}; quiet: {len(quiet['events'])} event(s); "
            f"analyze {fault['analyze_seconds']:.2f} s; stride 1 for reference: fault {dense['fault']}, quiet {dense['quiet']}"
        )
        assert hit
        assert quiet["events"] == []
        assert fault["analyze_seconds"] < 30


def test_criterion_8_pca_consistency(criterion, scenario_runs):
    with criterion(8, "PCA residual peak intersects the MSR event") as rec:
        parts, ok = [], True
        for name, run in scenario_runs.items():
            if name.startswith("_") or not run["scenario"]["events"]:
                continue
            pts = [p for p in run["pca"] if p["residual"] is not None]
            peak = max(pts, key=lambda p: p["residual"])
            lo, hi = peak["t"] - T, peak["t"]
            overlap = any(e["t_start"] <= hi and lo <= e["t_end"] for e in run["events"])
            ok &= overlap and len(run["events"]) >= 1
            spans = ",".join(f"[{e['t_start']},{e['t_end']}]" for e in run["events"]) or "none"
            parts.append(f"{name} peak [{lo},{hi}] vs {spans}")
        rec.detail = "; ".join(parts)
        assert parts and ok


def test_criterion_9_determinism(criterion, tmp_path):
    with criterion(9, "simulate and analyze reproduce byte-identical outputs") as rec:
        sim, ana = tmp_path / "sim", tmp_path / "ana"
        names = ["sim/frames.csv", "sim/scenario.json", "ana/msr.jsonl", "ana/events.json", "ana/pca.jsonl", "ana/summary.json"]
        snaps = []
        for _ in range(2):
            assert main(["simulate", "--seed", "3", "--out", str(sim)]) == 0
            assert main(["analyze", "--input", str(sim / "frames.csv"), "--seed", "3", "--stride", "10", "--out", str(ana)]) == 0
            snap = {f: (tmp_path / f).read_bytes() for f in names}
            # wall-clock runtime is the one field that cannot repeat
            summary = json.loads(snap["ana/summary.json"])
            summary.pop("runtime_seconds")
            snap["ana/summary.json"] = json.dumps(summary).encode()
            snaps.append(snap)
        same = [snaps[0][f] == snaps[1][f] for f in names]
        rec.detail = f"{sum(same)}/{len(same)} outputs identical (summary compared without runtime_seconds)"
        assert all(same)
