"""Acceptance suite: one test per release criterion, at its stated tolerance.

Each test prints a [PASS] line naming the criterion; run with `pytest -v -s
tests/test_acceptance.py` to see them. The suite uses only the core package
(oracle, Monte Carlo predictor, unigram baseline, identity predictors) and
never depends on the reference trainer.
"""

import json
import time
from math import comb
from multiprocessing import get_context

import numpy as np
import pytest

from metahmm import (
    EnvironmentConfig,
    advance,
    build_ensemble,
    build_hmm,
    div,
    environment_size,
    generate_bank,
    index_to_code,
    make_split,
    mc_predict,
    oracle_init,
    oracle_step,
    posterior_snapshot,
    sample_sequence,
    slot_radices,
)
from metahmm.cli import main as cli_main

import bruteforce
from conftest import paper_config_dict, tiny_config_dict, write_config

_FULL_SCALE: dict = {}


def _filter_one_full_scale(args):
    """Worker: filter one sequence, returning stability diagnostics."""
    seq_id, symbols = args
    ens = _FULL_SCALE["ensemble"]
    state = oracle_init(ens)
    worst_norm = 0.0
    finite = True
    for sym in symbols:
        state, snap = oracle_step(state, int(sym))
        worst_norm = max(worst_norm, abs(float(snap.predictive.sum()) - 1.0))
        finite &= bool(np.isfinite(snap.predictive).all())
        finite &= np.isfinite(snap.entropy_nats)
        finite &= bool(np.isfinite(state.log_evidence_active).all())
    return seq_id, worst_norm, finite


def _sign_test_p(wins: int, n: int) -> float:
    """One-sided binomial tail P(X >= wins) under fair coin."""
    return sum(comb(n, k) for k in range(wins, n + 1)) / 2.0**n


def test_criterion_size_formula(paper_config):
    started = time.perf_counter()
    size = environment_size(paper_config)
    assert size == 12288
    radices = slot_radices(paper_config)
    distinct = {index_to_code(radices, i) for i in range(size)}
    assert len(distinct) == 12288
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"size check took {elapsed:.2f}s, budget 1s"
    print(f"\n[PASS] size formula: 12288 tasks, enumeration agrees ({elapsed*1e3:.0f} ms)")


def test_criterion_oracle_matches_brute_force():
    started = time.perf_counter()
    matrix = [
        tiny_config_dict(),
        tiny_config_dict(emission_smoothing=0.3),
        tiny_config_dict(base_cycles=1, emission_groups=2, emissions_per_group=2),
    ]
    checked = 0
    worst = 0.0
    for cfg_dict in matrix:
        cfg = EnvironmentConfig.from_dict(cfg_dict)
        size = environment_size(cfg)
        assert size <= 48 and cfg.hidden_states <= 4 and cfg.symbols <= 6
        bank = generate_bank(cfg)
        radices = slot_radices(cfg)
        hmms = [build_hmm(bank, index_to_code(radices, k)) for k in range(size)]
        prior = np.full(size, 1.0 / size)
        ensemble = build_ensemble(bank)
        for seq_seed in (0, 1):
            hmm = hmms[(7 * seq_seed + 3) % size]
            _, symbols = sample_sequence(hmm, 6, rng_seed=(90, seq_seed))
            state = oracle_init(ensemble)
            for t, sym in enumerate(symbols):
                state, snap = oracle_step(state, int(sym))
                expected = bruteforce.path_predictive(hmms, prior, symbols, t)
                worst = max(worst, float(np.max(np.abs(snap.predictive - expected))))
                checked += 1
    elapsed = time.perf_counter() - started
    assert worst < 1e-10, f"max |oracle - path enumeration| = {worst:.2e}"
    assert elapsed < 30.0, f"brute-force matrix took {elapsed:.1f}s, budget 30s"
    print(
        f"\n[PASS] oracle correctness: {checked} positions vs path enumeration, "
        f"max err {worst:.2e} ({elapsed:.1f} s)"
    )


def test_criterion_full_scale_stability(paper_bank):
    started = time.perf_counter()
    size = environment_size(paper_bank.config)
    assert size == 12288
    _, validation = make_split(size, 1000, seed=0)
    radices = slot_radices(paper_bank.config)

    jobs = []
    for i in range(100):
        task = int(validation[i % len(validation)])
        hmm = build_hmm(paper_bank, index_to_code(radices, task))
        _, symbols = sample_sequence(hmm, 200, rng_seed=(500, i))
        jobs.append((i, symbols))

    _FULL_SCALE["ensemble"] = build_ensemble(paper_bank)
    with get_context("fork").Pool(processes=2) as pool:
        results = list(pool.imap(_filter_one_full_scale, jobs, chunksize=4))
    elapsed = time.perf_counter() - started

    worst_norm = max(r[1] for r in results)
    assert all(r[2] for r in results), "non-finite value during full-scale filtering"
    assert worst_norm < 1e-9, f"worst predictive normalization error {worst_norm:.2e}"
    assert elapsed < 300.0, f"full-scale run took {elapsed:.1f}s, budget 300s"
    print(
        f"\n[PASS] full-scale stability: 100 sequences x T=200 over 12288 tasks, "
        f"worst norm err {worst_norm:.1e}, all finite ({elapsed:.1f} s)"
    )


def test_criterion_ambiguity_trend(tiny_bank):
    n_sequences = 200
    horizon = 200
    size = environment_size(tiny_bank.config)
    _, validation = make_split(size, 8, seed=1)
    radices = slot_radices(tiny_bank.config)
    ensemble = build_ensemble(tiny_bank)

    entropy = np.empty((n_sequences, horizon))
    for i in range(n_sequences):
        task = int(validation[i % len(validation)])
        hmm = build_hmm(tiny_bank, index_to_code(radices, task))
        _, symbols = sample_sequence(hmm, horizon, rng_seed=(600, i))
        state = oracle_init(ensemble)
        for t, sym in enumerate(symbols):
            state, snap = oracle_step(state, int(sym))
            entropy[i, t] = snap.entropy_nats

    diffs = entropy[:, 1:] - entropy[:, :-1]  # paired per-sequence steps
    mean_diff = diffs.mean(axis=0)
    se_diff = diffs.std(axis=0, ddof=1) / np.sqrt(n_sequences)
    violations = mean_diff > 2 * se_diff + 1e-12
    assert not violations.any(), (
        f"mean entropy increased beyond 2 standard errors at positions "
        f"{np.nonzero(violations)[0].tolist()[:5]}"
    )
    print(
        f"\n[PASS] ambiguity trend: mean posterior entropy non-increasing over "
        f"{n_sequences} validation sequences (max mean step {mean_diff.max():.2e})"
    )


def test_criterion_mc_convergence(tiny_bank):
    n_sequences = 40
    horizon = 100
    sample_grid = (1, 10, 100)
    size = environment_size(tiny_bank.config)
    assert size == 48
    radices = slot_radices(tiny_bank.config)
    ensemble = build_ensemble(tiny_bank)

    summarized = {s: [] for s in sample_grid}
    worst_exact = 0.0
    for i in range(n_sequences):
        hmm = build_hmm(tiny_bank, index_to_code(radices, (5 * i + 2) % size))
        _, symbols = sample_sequence(hmm, horizon, rng_seed=(700, i))
        state = oracle_init(ensemble)
        per_s = {s: [] for s in sample_grid}
        for t, sym in enumerate(symbols):
            snap = posterior_snapshot(state)
            exact = mc_predict(state, None, rng_seed=0)
            worst_exact = max(worst_exact, float(np.max(np.abs(exact - snap.predictive))))
            for s in sample_grid:
                vec = mc_predict(state, s, rng_seed=(900, i, t))  # paired across s
                per_s[s].append(div(vec, snap.predictive))
            state = advance(state, int(sym))
        for s in sample_grid:
            summarized[s].append(float(np.mean(per_s[s])))

    means = {s: float(np.mean(summarized[s])) for s in sample_grid}
    assert means[1] > means[10] > means[100], f"means not monotone in S: {means}"
    assert worst_exact < 1e-12, f"stratified mode deviates from oracle by {worst_exact:.2e}"
    for lo, hi in ((1, 10), (10, 100)):
        wins = sum(a > b for a, b in zip(summarized[lo], summarized[hi]))
        p = _sign_test_p(wins, n_sequences)
        assert p < 0.01, f"sign test S={lo} vs S={hi}: {wins}/{n_sequences} wins, p={p:.4f}"
    print(
        f"\n[PASS] MC convergence: mean Div {means[1]:.4f} > {means[10]:.4f} > "
        f"{means[100]:.4f}, sign tests p < 0.01, exact mode err {worst_exact:.1e}"
    )


def test_criterion_metric_properties():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = rng.dirichlet(np.ones(5))
        q = rng.dirichlet(np.ones(5))
        assert div(p, q) == div(q, p)
        assert div(p, q) >= 0.0
        assert div(p, p) == 0.0
    hand = div(np.array([0.75, 0.25]), np.array([0.25, 0.75]))
    # 0.5*ln(3) confirmed to 30 digits with mpmath before pinning
    assert abs(hand - 0.549306144334054845697622618461) < 1e-9
    print(f"\n[PASS] metric properties: symmetric, >= 0, zero on equal, 0.5*ln3 = {hand:.9f}")


def test_criterion_pipeline_determinism(tmp_path, capsys):
    cfg_path = write_config(tmp_path / "cfg.json", tiny_config_dict())

    def cli(*argv):
        assert cli_main([str(a) for a in argv]) == 0

    outputs = {}
    for round_name in ("first", "second"):
        d = tmp_path / round_name
        d.mkdir()
        cli("split", "--config", cfg_path, "--holdout", 8, "--seed", 1, "--out", d / "split.json")
        cli(
            "gen", "--config", cfg_path, "--split", d / "split.json", "--subset", "validation",
            "--per-task", 2, "--length", 32, "--seed", 5, "--out", d / "val.jsonl",
        )
        workers = 1 if round_name == "first" else 3
        cli(
            "oracle", "--config", cfg_path, "--sequences", d / "val.jsonl",
            "--workers", workers, "--out", d / "oracle.bin",
            "--entropy-out", d / "entropy.csv",
        )
        cli(
            "mc", "--config", cfg_path, "--sequences", d / "val.jsonl", "--samples", "10",
            "--seed", 2, "--workers", workers, "--out", d / "mc.bin",
        )
        cli(
            "eval", "--predictions", d / "mc.bin", "--reference", d / "oracle.bin",
            "--out-csv", d / "curve.csv", "--out-summary", d / "summary.json",
        )
        outputs[round_name] = {
            name: (d / name).read_bytes()
            for name in ("split.json", "val.jsonl", "oracle.bin", "entropy.csv",
                         "mc.bin", "curve.csv", "summary.json")
        }
    capsys.readouterr()
    for name, blob in outputs["first"].items():
        assert blob == outputs["second"][name], f"{name} differs between identical runs"
    print(
        "\n[PASS] determinism: split/gen/oracle/mc/eval byte-identical across reruns "
        "and worker counts 1 vs 3"
    )
