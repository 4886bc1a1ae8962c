import numpy as np
import pytest

from metahmm import (
    EnvironmentConfig,
    ImpossibleEvidenceError,
    ImpossiblePrefixError,
    ValidationError,
    advance,
    build_ensemble,
    build_hmm,
    conditional_predictive,
    ensemble_from_hmms,
    environment_size,
    generate_bank,
    index_to_code,
    logsumexp,
    mc_predict,
    oracle_init,
    oracle_run,
    oracle_step,
    posterior_snapshot,
    sample_sequence,
    slot_radices,
)
from metahmm.hmm import Hmm
from metahmm.metrics import div

import bruteforce
from conftest import tiny_config_dict


def all_hmms(bank):
    radices = slot_radices(bank.config)
    size = environment_size(bank.config)
    return [build_hmm(bank, index_to_code(radices, k)) for k in range(size)]


def random_dense_hmms(k, n, v, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(k):
        out.append(
            Hmm(
                transition=rng.dirichlet(np.ones(n), size=n),
                emission=rng.dirichlet(np.ones(v), size=n),
                initial=rng.dirichlet(np.ones(n)),
            )
        )
    return out


# ---------------------------------------------------------------------------
# logsumexp
# ---------------------------------------------------------------------------


def test_logsumexp_matches_direct_sum():
    x = np.log(np.array([0.1, 0.2, 0.7]))
    assert abs(logsumexp(x)) < 1e-15
    m = np.log(np.array([[0.5, 0.5], [1.0, 3.0]]))
    assert np.allclose(logsumexp(m, axis=1), [0.0, np.log(4.0)])


def test_logsumexp_all_negative_infinity():
    x = np.full(4, -np.inf)
    assert logsumexp(x) == -np.inf
    m = np.array([[-np.inf, -np.inf], [0.0, -np.inf]])
    out = logsumexp(m, axis=1)
    assert out[0] == -np.inf and out[1] == 0.0
    assert not np.any(np.isnan(out))


def test_logsumexp_large_offsets():
    x = np.array([1000.0, 1000.0])
    assert np.isclose(logsumexp(x), 1000.0 + np.log(2.0))


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def test_init_posterior_is_prior(tiny_bank):
    state = oracle_init(tiny_bank)
    snap = posterior_snapshot(state)
    assert np.allclose(snap.task_posterior, 1 / 48, atol=1e-15)
    assert abs(snap.entropy_nats - np.log(48)) < 1e-12


def test_init_custom_prior_support_is_absorbing(tiny_bank):
    prior = np.zeros(48)
    prior[0] = prior[1] = 0.5
    ensemble = build_ensemble(tiny_bank)
    state = oracle_init(ensemble, prior=prior)
    assert np.allclose(posterior_snapshot(state).task_posterior, prior, atol=1e-15)
    hmm = build_hmm(tiny_bank, index_to_code(slot_radices(tiny_bank.config), 1))
    _, symbols = sample_sequence(hmm, 12, rng_seed=3)
    for sym in symbols:
        state, snap = oracle_step(state, int(sym))
        assert np.all(snap.task_posterior[2:] == 0.0)
    assert posterior_snapshot(state).task_posterior[1] > 0.5


def test_init_rejects_bad_arguments(tiny_bank):
    with pytest.raises(ValidationError):
        build_ensemble(tiny_bank, [])
    with pytest.raises(ValidationError):
        build_ensemble(tiny_bank, [48])
    ens = build_ensemble(tiny_bank, [0, 1])
    with pytest.raises(ValidationError):
        oracle_init(ens, prior=np.array([0.9, 0.2]))
    with pytest.raises(ValidationError):
        oracle_init(ens, prior=np.array([0.5, 0.5, 0.0]))


# ---------------------------------------------------------------------------
# brute-force equivalence on the tiny matrix
# ---------------------------------------------------------------------------

TINY_MATRIX = [
    tiny_config_dict(),  # 48 tasks, deterministic emissions
    tiny_config_dict(emission_smoothing=0.3),  # stochastic emissions
    tiny_config_dict(base_cycles=1, emission_groups=2, emissions_per_group=2),  # 32 tasks
]


@pytest.mark.parametrize("cfg_dict", TINY_MATRIX)
def test_oracle_matches_path_enumeration(cfg_dict):
    cfg = EnvironmentConfig.from_dict(cfg_dict)
    bank = generate_bank(cfg)
    hmms = all_hmms(bank)
    k = len(hmms)
    prior = np.full(k, 1.0 / k)
    ensemble = build_ensemble(bank)
    for seq_seed in (0, 1):
        hmm = hmms[seq_seed * 7 % k]
        _, symbols = sample_sequence(hmm, 6, rng_seed=seq_seed)
        snaps = oracle_run(ensemble, None, symbols)
        for t, snap in enumerate(snaps):
            expected = bruteforce.path_predictive(hmms, prior, symbols, t)
            assert np.max(np.abs(snap.predictive - expected)) < 1e-10
            post = bruteforce.path_posterior(hmms, prior, symbols[:t]) if t else prior
            assert np.max(np.abs(snap.task_posterior - post)) < 1e-10


def test_oracle_matches_path_enumeration_dense_layout():
    hmms = random_dense_hmms(k=5, n=3, v=4, seed=2)
    prior = np.full(5, 0.2)
    ensemble = ensemble_from_hmms(hmms)
    rng = np.random.default_rng(0)
    symbols = rng.integers(0, 4, size=6)
    snaps = oracle_run(ensemble, None, symbols)
    for t, snap in enumerate(snaps):
        expected = bruteforce.path_predictive(hmms, prior, symbols, t)
        assert np.max(np.abs(snap.predictive - expected)) < 1e-10


def test_predictive_ignores_current_symbol(tiny_bank):
    ens = build_ensemble(tiny_bank)
    hmm = build_hmm(tiny_bank, index_to_code(slot_radices(tiny_bank.config), 9))
    _, symbols = sample_sequence(hmm, 5, rng_seed=1)
    variant = symbols.copy()
    variant[-1] = (variant[-1] + 1) % 6
    a = oracle_run(ens, None, symbols)
    b = oracle_run(ens, None, variant)
    assert np.array_equal(a[-1].predictive, b[-1].predictive)


# ---------------------------------------------------------------------------
# special structure
# ---------------------------------------------------------------------------


def test_single_permutation_task_predicts_next_cycle_symbol():
    transition = np.zeros((3, 3))
    transition[0, 1] = transition[1, 2] = transition[2, 0] = 1.0
    emission = np.zeros((3, 4))
    emission[0, 0] = emission[1, 1] = emission[2, 2] = 1.0
    hmm = Hmm(transition=transition, emission=emission, initial=np.full(3, 1 / 3))
    ens = ensemble_from_hmms([hmm])
    state = oracle_init(ens)
    state, _ = oracle_step(state, 0)  # observe symbol of state 0
    snap = posterior_snapshot(state)
    expected = np.zeros(4)
    expected[1] = 1.0  # next state on the cycle is 1, emitting symbol 1
    assert np.allclose(snap.predictive, expected, atol=1e-15)


def test_uniform_emissions_give_uniform_predictive():
    cfg = EnvironmentConfig.from_dict(tiny_config_dict(emission_smoothing=1.0))
    bank = generate_bank(cfg)
    ens = build_ensemble(bank)
    rng = np.random.default_rng(5)
    symbols = rng.integers(0, 6, size=8)
    for snap in oracle_run(ens, None, symbols):
        assert np.allclose(snap.predictive, 1 / 6, atol=1e-12)


def test_impossible_evidence_is_flagged_then_raises(tiny_bank):
    # all 48 tasks map group states into block [0, 6); no task can be killed by
    # an in-vocabulary symbol alone, so kill support via a two-task subset with
    # disjoint emitted symbols under an impossible continuation
    ens = build_ensemble(tiny_bank)
    state = oracle_init(ens)
    hmm = build_hmm(tiny_bank, index_to_code(slot_radices(tiny_bank.config), 0))
    _, symbols = sample_sequence(hmm, 3, rng_seed=0)
    for sym in symbols:
        state, _ = oracle_step(state, int(sym))
    # active tasks all agree the next symbol lies in the emitted supports;
    # find one no surviving task can emit next
    snap = posterior_snapshot(state)
    dead = int(np.argmin(snap.predictive))
    assert snap.predictive[dead] == 0.0
    state, snap2 = oracle_step(state, dead)  # snapshot still returned
    assert snap2.predictive[dead] == 0.0
    assert state.impossible
    with pytest.raises(ImpossibleEvidenceError):
        oracle_step(state, 0)
    with pytest.raises(ImpossibleEvidenceError):
        posterior_snapshot(state)
    with pytest.raises(ImpossibleEvidenceError):
        mc_predict(state, 5, rng_seed=0)


def test_oracle_run_empty_sequence(tiny_bank):
    assert oracle_run(tiny_bank, None, []) == []


# ---------------------------------------------------------------------------
# invariants along full runs
# ---------------------------------------------------------------------------


def test_running_invariants_hold_each_step(tiny_bank):
    ens = build_ensemble(tiny_bank)
    hmm = build_hmm(tiny_bank, index_to_code(slot_radices(tiny_bank.config), 17))
    _, symbols = sample_sequence(hmm, 40, rng_seed=2)
    state = oracle_init(ens)
    prev_evidence = state.log_evidence
    for sym in symbols:
        state, snap = oracle_step(state, int(sym))
        # message mass equals recorded evidence
        recomputed = logsumexp(state.log_alpha, axis=1)
        assert np.max(np.abs(recomputed - state.log_evidence_active)) < 1e-9
        assert abs(snap.task_posterior.sum() - 1.0) < 1e-12
        assert abs(snap.predictive.sum() - 1.0) < 1e-9
        assert 0.0 <= snap.entropy_nats <= np.log(48) + 1e-12
        # per-task evidence never increases
        evidence = state.log_evidence
        assert np.all(evidence <= prev_evidence + 1e-12)
        prev_evidence = evidence


def test_posterior_concentrates_on_true_task(tiny_bank):
    ens = build_ensemble(tiny_bank)
    radices = slot_radices(tiny_bank.config)
    finals = []
    for i in range(50):
        true_task = i % 48
        hmm = build_hmm(tiny_bank, index_to_code(radices, true_task))
        _, symbols = sample_sequence(hmm, 80, rng_seed=(200, i))
        snap = oracle_run(ens, None, symbols)[-1]
        finals.append(snap.task_posterior[true_task])
    finals = np.array(finals)
    assert finals.mean() > 0.9
    assert np.all(finals > 0.45)


def test_subset_equals_full_run_with_zeroed_prior(tiny_bank):
    subset = np.array([3, 11, 30, 41])
    hmm = build_hmm(tiny_bank, index_to_code(slot_radices(tiny_bank.config), 11))
    _, symbols = sample_sequence(hmm, 20, rng_seed=9)

    snaps_sub = oracle_run(tiny_bank, subset, symbols)
    prior = np.zeros(48)
    prior[subset] = 0.25
    ens_full = build_ensemble(tiny_bank)
    snaps_full = oracle_run(ens_full, None, symbols, prior=prior)
    for a, b in zip(snaps_sub, snaps_full):
        assert np.allclose(a.task_posterior, b.task_posterior[subset], atol=1e-14)
        assert np.allclose(a.predictive, b.predictive, atol=1e-14)
        assert abs(a.entropy_nats - b.entropy_nats) < 1e-12


def test_oracle_run_bitwise_deterministic(tiny_bank):
    ens = build_ensemble(tiny_bank)
    hmm = build_hmm(tiny_bank, index_to_code(slot_radices(tiny_bank.config), 5))
    _, symbols = sample_sequence(hmm, 30, rng_seed=4)
    a = oracle_run(ens, None, symbols)
    b = oracle_run(ens, None, symbols)
    for x, y in zip(a, b):
        assert np.array_equal(x.predictive, y.predictive)
        assert np.array_equal(x.task_posterior, y.task_posterior)


# ---------------------------------------------------------------------------
# single-task conditional predictive
# ---------------------------------------------------------------------------


def test_conditional_matches_singleton_oracle(tiny_bank):
    radices = slot_radices(tiny_bank.config)
    code = index_to_code(radices, 21)
    hmm = build_hmm(tiny_bank, code)
    _, symbols = sample_sequence(hmm, 6, rng_seed=8)
    got = conditional_predictive(tiny_bank, code, symbols)
    snaps = oracle_run(tiny_bank, [21], list(symbols) + [0])
    assert np.allclose(got, snaps[-1].predictive, atol=1e-15)
    # index form agrees with code form
    assert np.array_equal(got, conditional_predictive(tiny_bank, 21, symbols))


def test_conditional_matches_path_enumeration(tiny_bank):
    radices = slot_radices(tiny_bank.config)
    code = index_to_code(radices, 40)
    hmm = build_hmm(tiny_bank, code)
    _, symbols = sample_sequence(hmm, 5, rng_seed=12)
    got = conditional_predictive(tiny_bank, code, symbols)
    expected = bruteforce.path_predictive([hmm], np.ones(1), symbols, len(symbols))
    assert np.max(np.abs(got - expected)) < 1e-10


def test_conditional_uniform_task():
    cfg = EnvironmentConfig.from_dict(tiny_config_dict(emission_smoothing=1.0))
    bank = generate_bank(cfg)
    got = conditional_predictive(bank, 0, [2, 4, 1])
    assert np.allclose(got, 1 / 6, atol=1e-12)


def test_conditional_impossible_prefix_distinct_error(tiny_bank):
    radices = slot_radices(tiny_bank.config)
    code = index_to_code(radices, 0)
    hmm = build_hmm(tiny_bank, code)
    emitted = set(hmm.emission.argmax(axis=1).tolist())
    missing = next(v for v in range(6) if v not in emitted)
    with pytest.raises(ImpossiblePrefixError):
        conditional_predictive(tiny_bank, code, [missing])


# ---------------------------------------------------------------------------
# Monte Carlo predictor
# ---------------------------------------------------------------------------


def _state_after(ens, symbols):
    state = oracle_init(ens)
    for sym in symbols:
        state = advance(state, int(sym))
    return state


def test_mc_point_mass_posterior_equals_conditional(tiny_bank):
    prior = np.zeros(48)
    prior[7] = 1.0
    ens = build_ensemble(tiny_bank)
    hmm = build_hmm(tiny_bank, index_to_code(slot_radices(tiny_bank.config), 7))
    _, symbols = sample_sequence(hmm, 10, rng_seed=6)
    state = oracle_init(ens, prior=prior)
    for sym in symbols:
        state = advance(state, int(sym))
    reference = conditional_predictive(tiny_bank, 7, symbols)
    for s in (1, 3, 50):
        assert np.allclose(mc_predict(state, s, rng_seed=s), reference, atol=1e-12)


def test_mc_exact_mode_equals_oracle_predictive(tiny_bank):
    ens = build_ensemble(tiny_bank)
    hmm = build_hmm(tiny_bank, index_to_code(slot_radices(tiny_bank.config), 30))
    _, symbols = sample_sequence(hmm, 15, rng_seed=14)
    state = oracle_init(ens)
    for sym in symbols:
        snap = posterior_snapshot(state)
        exact = mc_predict(state, None, rng_seed=0)
        assert np.max(np.abs(exact - snap.predictive)) < 1e-12
        state = advance(state, int(sym))


def test_mc_single_sample_unbiased(tiny_bank):
    ens = build_ensemble(tiny_bank)
    hmm = build_hmm(tiny_bank, index_to_code(slot_radices(tiny_bank.config), 2))
    _, symbols = sample_sequence(hmm, 4, rng_seed=21)
    state = _state_after(ens, symbols)
    target = posterior_snapshot(state).predictive
    draws = np.stack([mc_predict(state, 1, rng_seed=(31, i)) for i in range(10_000)])
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(mean - target) <= 3 * se + 1e-12)


def test_mc_divergence_shrinks_with_samples(tiny_bank):
    ens = build_ensemble(tiny_bank)
    hmm = build_hmm(tiny_bank, index_to_code(slot_radices(tiny_bank.config), 19))
    _, symbols = sample_sequence(hmm, 3, rng_seed=33)
    state = _state_after(ens, symbols)
    target = posterior_snapshot(state).predictive
    means = []
    for s in (10, 100, 1000):
        values = [div(mc_predict(state, s, rng_seed=(s, r)), target) for r in range(100)]
        means.append(np.mean(values))
    assert means[0] > means[1] > means[2]


def test_mc_rejects_bad_sample_count(tiny_bank):
    state = oracle_init(build_ensemble(tiny_bank))
    with pytest.raises(ValidationError):
        mc_predict(state, 0, rng_seed=1)


def test_mc_deterministic_in_seed(tiny_bank):
    state = oracle_init(build_ensemble(tiny_bank))
    a = mc_predict(state, 25, rng_seed=(1, 2))
    b = mc_predict(state, 25, rng_seed=(1, 2))
    c = mc_predict(state, 25, rng_seed=(1, 3))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


# ---------------------------------------------------------------------------
# full-scale smoke (the acceptance suite runs the full protocol)
# ---------------------------------------------------------------------------


def test_full_scale_single_sequence_stays_finite(paper_bank):
    ens = build_ensemble(paper_bank)
    radices = slot_radices(paper_bank.config)
    hmm = build_hmm(paper_bank, index_to_code(radices, 4321))
    _, symbols = sample_sequence(hmm, 200, rng_seed=0)
    state = oracle_init(ens)
    prev_evidence = state.log_evidence
    for sym in symbols:
        state, snap = oracle_step(state, int(sym))
        assert np.all(np.isfinite(snap.predictive))
        assert abs(snap.predictive.sum() - 1.0) < 1e-9
        evidence = state.log_evidence
        assert np.all(evidence <= prev_evidence + 1e-12)
        prev_evidence = evidence
    assert np.all(np.isfinite(state.log_evidence_active))
