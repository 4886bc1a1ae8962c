"""Exact Bayesian filtering over a task family, in log space throughout.

The filter runs one forward recursion per task and mixes tasks by their
posterior weight. For a family of K tasks over N states and V symbols:

- ``log_alpha[k, s]`` is the unnormalized log forward message
  ``log p(x_{<t}, s_t = s | task k)``; its logsumexp over states is the
  per-task log evidence ``log p(x_{<t} | task k)``.
- The task posterior is ``softmax(log_prior + log_evidence)``.
- The posterior predictive at position t is computed *before* conditioning
  on ``x_t``: mix each task's one-step emission predictive by its posterior
  weight.

Transitions here are sparse (cycle unions have at most a couple of edges
per row), so the recursion stores incoming edges per state, padded to a
fixed width, and advances with a sequential ``logaddexp`` chain over that
width. All reductions are fixed-order numpy reductions; results do not
depend on worker count because parallelism only ever splits *sequences*,
never the per-sequence recursion.

Tasks whose evidence hits exactly zero (deterministic emissions prune hard)
are dropped from the active block; their posterior weight is exactly zero
from then on, which is the same arithmetic as keeping them at -inf. If every
task dies, the state enters an impossible-evidence condition and any further
use raises rather than renormalizing garbage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .bank import EnvironmentBank
from .codes import (
    LatentCode,
    code_to_index,
    environment_size,
    index_to_code,
    slot_radices,
)
from .errors import (
    ImpossibleEvidenceError,
    ImpossiblePrefixError,
    ValidationError,
)
from .hmm import (
    Hmm,
    base_successors,
    decode,
    emission_symbols,
    family_successors,
    state_blocks,
)
from .rng import HashRng

NEG_INF = -np.inf


def logsumexp(a: np.ndarray, axis: int | None = None) -> np.ndarray:
    """Max-shifted log-sum-exp; returns -inf (not NaN) on all--inf input."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        if axis is None:
            return np.float64(NEG_INF)
        shape = list(a.shape)
        del shape[axis]
        return np.full(shape, NEG_INF)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis))
    if axis is None:
        return out + np.squeeze(m)
    return out + np.squeeze(m, axis=axis)


# ---------------------------------------------------------------------------
# Filter-ready stacked task representation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskEnsemble:
    """Stacked per-task filtering inputs, immutable once built.

    Emissions come in two layouts. ``structured`` stores one mapped symbol
    per (task, state) plus the state's symbol block and a smoothing weight;
    this covers every bank-built HMM. ``dense`` stores full (K, N, V)
    emission tensors and covers arbitrary hand-built HMMs.
    """

    n_states: int
    n_symbols: int
    log_initial: np.ndarray  # (K, N)
    in_src: np.ndarray  # (K, N, max_in) int64, source state of each incoming edge
    in_logw: np.ndarray  # (K, N, max_in) float64, -inf padding
    emit_symbol: np.ndarray | None = None  # (K, N) structured layout
    block_start: np.ndarray | None = None  # (N,)
    block_size: np.ndarray | None = None  # (N,)
    smoothing: float = 0.0
    log_emission: np.ndarray | None = None  # (K, N, V) dense layout
    emission_prob: np.ndarray | None = None  # (K, N, V)
    _log_hit: np.ndarray | None = field(default=None, repr=False)
    _log_miss: np.ndarray | None = field(default=None, repr=False)
    _block_spread: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.log_initial.shape[0]

    @property
    def structured(self) -> bool:
        return self.emit_symbol is not None

    def log_emission_column(self, idx: np.ndarray, symbol: int) -> np.ndarray:
        """log p(symbol | state) for the tasks in ``idx``; shape (len(idx), N)."""
        if self.structured:
            hit = self.emit_symbol[idx] == symbol
            in_block = (self.block_start <= symbol) & (
                symbol < self.block_start + self.block_size
            )
            return np.where(hit, self._log_hit, np.where(in_block, self._log_miss, NEG_INF))
        return self.log_emission[idx, :, symbol]

    def mixture_predictive(self, idx: np.ndarray, q: np.ndarray) -> np.ndarray:
        """One-step symbol predictive of the joint weights ``q[a, s]`` (sum 1)."""
        if self.structured:
            pred = np.bincount(
                self.emit_symbol[idx].ravel(),
                weights=q.ravel(),
                minlength=self.n_symbols,
            )
            eps = self.smoothing
            if eps > 0.0:
                pred = (1.0 - eps) * pred + eps * (q.sum(axis=0) @ self._block_spread)
            return pred
        return np.einsum("an,anv->v", q, self.emission_prob[idx])


def _structured_emission_fields(
    starts: np.ndarray, sizes: np.ndarray, eps: float, n_symbols: int
) -> dict:
    with np.errstate(divide="ignore"):
        log_hit = np.log(1.0 - eps + eps / sizes)
        log_miss = np.full(len(sizes), NEG_INF) if eps == 0.0 else np.log(eps / sizes)
    spread = np.zeros((len(sizes), n_symbols))
    for s in range(len(sizes)):
        spread[s, starts[s] : starts[s] + sizes[s]] = 1.0 / sizes[s]
    return {
        "block_start": starts,
        "block_size": sizes,
        "smoothing": eps,
        "_log_hit": log_hit,
        "_log_miss": log_miss,
        "_block_spread": spread,
    }


def _resolve_codes(
    bank: EnvironmentBank, task_subset: Sequence[int] | None
) -> tuple[np.ndarray, list[LatentCode]]:
    radices = slot_radices(bank.config)
    size = environment_size(bank.config)
    if task_subset is None:
        indices = np.arange(size, dtype=np.int64)
    else:
        indices = np.asarray(list(task_subset), dtype=np.int64).reshape(-1)
        if indices.size == 0:
            raise ValidationError("task subset is empty")
        if np.any(indices < 0) or np.any(indices >= size):
            bad = indices[(indices < 0) | (indices >= size)][0]
            raise ValidationError(f"task index {bad} out of range [0, {size})")
    codes = [index_to_code(radices, int(i)) for i in indices]
    return indices, codes


def build_ensemble(
    bank: EnvironmentBank, task_subset: Sequence[int] | None = None
) -> TaskEnsemble:
    """Stack the HMMs selected by ``task_subset`` (all tasks when None)."""
    cfg = bank.config
    n = cfg.hidden_states
    _, codes = _resolve_codes(bank, task_subset)
    k = len(codes)

    base = np.empty((k, n), dtype=np.int64)
    fam = np.empty((k, n), dtype=np.int64)
    emit = np.empty((k, n), dtype=np.int64)
    for row, code in enumerate(codes):
        sel = decode(bank, code)
        base[row] = base_successors(bank, sel)
        fam[row] = family_successors(bank, sel)
        emit[row] = emission_symbols(bank, sel)

    has_extra = (fam >= 0) & (fam != base)
    outdeg = 1 + has_extra.astype(np.int64)
    logw = -np.log(outdeg.astype(np.float64))

    cols = np.broadcast_to(np.arange(n, dtype=np.int64), (k, n))
    base_pred = np.empty((k, n), dtype=np.int64)
    np.put_along_axis(base_pred, base, cols, axis=1)

    fam_pred = np.full((k, n), -1, dtype=np.int64)
    rows_i, src_i = np.nonzero(has_extra)
    fam_pred[rows_i, fam[rows_i, src_i]] = src_i

    in_src = np.stack([base_pred, np.maximum(fam_pred, 0)], axis=2)
    in_logw = np.stack(
        [
            np.take_along_axis(logw, base_pred, axis=1),
            np.where(
                fam_pred >= 0,
                np.take_along_axis(logw, np.maximum(fam_pred, 0), axis=1),
                NEG_INF,
            ),
        ],
        axis=2,
    )

    starts, sizes = state_blocks(bank)
    return TaskEnsemble(
        n_states=n,
        n_symbols=cfg.symbols,
        log_initial=np.full((k, n), -np.log(n)),
        in_src=in_src,
        in_logw=in_logw,
        emit_symbol=emit,
        **_structured_emission_fields(
            starts, sizes, float(cfg.emission_smoothing), cfg.symbols
        ),
    )


def ensemble_from_hmms(hmms: Sequence[Hmm]) -> TaskEnsemble:
    """Dense-layout ensemble for arbitrary HMMs sharing (N, V)."""
    if not hmms:
        raise ValidationError("task subset is empty")
    n, v = hmms[0].n_states, hmms[0].n_symbols
    for h in hmms:
        if h.n_states != n or h.n_symbols != v:
            raise ValidationError("all HMMs in an ensemble must share (N, V)")
    k = len(hmms)

    max_in = 1
    for h in hmms:
        max_in = max(max_in, int(np.max(np.count_nonzero(h.transition, axis=0))))
    in_src = np.zeros((k, n, max_in), dtype=np.int64)
    in_logw = np.full((k, n, max_in), NEG_INF)
    for t_idx, h in enumerate(hmms):
        for dst in range(n):
            src = np.nonzero(h.transition[:, dst])[0]
            in_src[t_idx, dst, : len(src)] = src
            in_logw[t_idx, dst, : len(src)] = np.log(h.transition[src, dst])

    prob = np.stack([h.emission for h in hmms]).astype(np.float64)
    with np.errstate(divide="ignore"):
        log_initial = np.log(np.stack([h.initial for h in hmms]))
        log_emission = np.log(prob)
    return TaskEnsemble(
        n_states=n,
        n_symbols=v,
        log_initial=log_initial,
        in_src=in_src,
        in_logw=in_logw,
        log_emission=log_emission,
        emission_prob=prob,
    )


# ---------------------------------------------------------------------------
# Filtering state and the forward recursion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PosteriorSnapshot:
    """Posterior quantities at one position, before conditioning on it."""

    task_posterior: np.ndarray  # (K,)
    predictive: np.ndarray  # (V,)
    entropy_nats: float


@dataclass(frozen=True)
class OracleState:
    ensemble: TaskEnsemble
    t: int
    log_prior: np.ndarray  # (K,)
    active: np.ndarray  # (A,) indices into [0, K)
    log_alpha: np.ndarray  # (A, N)
    log_evidence_active: np.ndarray  # (A,)
    impossible: bool = False
    # incoming-edge blocks gathered for the active tasks (refreshed on prune)
    _in_src: np.ndarray = field(default=None, repr=False)
    _in_logw: np.ndarray = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.log_prior.shape[0]

    @property
    def log_evidence(self) -> np.ndarray:
        """Per-task log p(x_{<t} | task) over the full subset; -inf when pruned."""
        out = np.full(self.size, NEG_INF)
        out[self.active] = self.log_evidence_active
        return out

    def _check_usable(self) -> None:
        if self.impossible:
            raise ImpossibleEvidenceError(
                f"all tasks assigned probability zero to the symbol at position {self.t - 1}"
            )


def oracle_init(
    source: EnvironmentBank | TaskEnsemble,
    task_subset: Sequence[int] | None = None,
    prior: np.ndarray | None = None,
) -> OracleState:
    """Fresh filtering state; posterior at t=0 equals the prior (uniform default)."""
    if isinstance(source, TaskEnsemble):
        ensemble = source
    else:
        ensemble = build_ensemble(source, task_subset)
    k = ensemble.size
    if prior is None:
        log_prior = np.full(k, -np.log(k))
    else:
        prior = np.asarray(prior, dtype=np.float64)
        if prior.shape != (k,):
            raise ValidationError(f"prior has shape {prior.shape}, expected ({k},)")
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-9:
            raise ValidationError("prior must be non-negative and sum to 1 within 1e-9")
        with np.errstate(divide="ignore"):
            log_prior = np.log(prior)
    active = np.nonzero(log_prior > NEG_INF)[0]
    return OracleState(
        ensemble=ensemble,
        t=0,
        log_prior=log_prior,
        active=active,
        log_alpha=ensemble.log_initial[active].copy(),
        log_evidence_active=np.zeros(len(active)),
        _in_src=ensemble.in_src[active],
        _in_logw=ensemble.in_logw[active],
    )


def _posterior_weights(state: OracleState) -> np.ndarray:
    z = state.log_prior[state.active] + state.log_evidence_active
    w = np.exp(z - np.max(z))
    return w / w.sum()


def _state_distribution(state: OracleState) -> np.ndarray:
    return np.exp(state.log_alpha - state.log_evidence_active[:, None])


def posterior_snapshot(state: OracleState) -> PosteriorSnapshot:
    state._check_usable()
    w = _posterior_weights(state)
    q = w[:, None] * _state_distribution(state)
    predictive = state.ensemble.mixture_predictive(state.active, q)
    task_posterior = np.zeros(state.size)
    task_posterior[state.active] = w
    nz = w > 0
    entropy = float(-(w[nz] * np.log(w[nz])).sum()) + 0.0  # +0.0 kills negative zero
    return PosteriorSnapshot(
        task_posterior=task_posterior, predictive=predictive, entropy_nats=entropy
    )


def advance(state: OracleState, symbol: int) -> OracleState:
    """Condition on ``symbol`` and push the forward messages one step."""
    ens = state.ensemble
    if not 0 <= symbol < ens.n_symbols:
        raise ValidationError(f"symbol {symbol} out of range [0, {ens.n_symbols})")

    log_alpha = state.log_alpha + ens.log_emission_column(state.active, symbol)
    evidence = logsumexp(log_alpha, axis=1)
    alive = evidence > NEG_INF
    if not alive.any():
        return OracleState(
            ensemble=ens,
            t=state.t + 1,
            log_prior=state.log_prior,
            active=state.active[:0],
            log_alpha=log_alpha[:0],
            log_evidence_active=evidence[:0],
            impossible=True,
            _in_src=state._in_src[:0],
            _in_logw=state._in_logw[:0],
        )
    if alive.all():
        active, in_src, in_logw = state.active, state._in_src, state._in_logw
    else:
        active = state.active[alive]
        log_alpha, evidence = log_alpha[alive], evidence[alive]
        in_src, in_logw = ens.in_src[active], ens.in_logw[active]

    gathered = log_alpha[np.arange(len(active))[:, None, None], in_src]
    with np.errstate(invalid="ignore"):
        advanced = np.logaddexp.reduce(gathered + in_logw, axis=2)

    return OracleState(
        ensemble=ens,
        t=state.t + 1,
        log_prior=state.log_prior,
        active=active,
        log_alpha=advanced,
        log_evidence_active=evidence,
        _in_src=in_src,
        _in_logw=in_logw,
    )


def oracle_step(state: OracleState, symbol: int) -> tuple[OracleState, PosteriorSnapshot]:
    """Snapshot the predictive for this position, then condition and advance."""
    state._check_usable()
    snapshot = posterior_snapshot(state)
    return advance(state, symbol), snapshot


def oracle_scan(
    ensemble: TaskEnsemble,
    symbols: Iterable[int],
    prior: np.ndarray | None = None,
) -> Iterator[PosteriorSnapshot]:
    """Stream one snapshot per symbol without retaining past positions."""
    state = oracle_init(ensemble, prior=prior)
    for symbol in symbols:
        state, snapshot = oracle_step(state, int(symbol))
        yield snapshot


def oracle_run(
    source: EnvironmentBank | TaskEnsemble,
    task_subset: Sequence[int] | None,
    symbols: Sequence[int],
    prior: np.ndarray | None = None,
) -> list[PosteriorSnapshot]:
    """Filter a whole sequence; returns one snapshot per position."""
    state = oracle_init(source, task_subset, prior)
    snapshots = []
    for symbol in symbols:
        state, snapshot = oracle_step(state, int(symbol))
        snapshots.append(snapshot)
    return snapshots


def conditional_predictive(
    bank: EnvironmentBank, code: LatentCode | int, symbols_prefix: Sequence[int]
) -> np.ndarray:
    """Single-task filtered predictive p(x_t | x_{<t}, task) after the prefix."""
    if isinstance(code, int):
        index = code
    else:
        index = code_to_index(slot_radices(bank.config), code)
    state = oracle_init(bank, [index])
    for pos, symbol in enumerate(symbols_prefix):
        state = advance(state, int(symbol))
        if state.impossible:
            raise ImpossiblePrefixError(
                f"prefix has probability zero under this task at position {pos}"
            )
    return posterior_snapshot(state).predictive


def mc_predict(
    state: OracleState,
    samples: int | None,
    rng_seed: int | str | tuple,
) -> np.ndarray:
    """Monte Carlo posterior predictive from the current filtering state.

    Draws ``samples`` tasks i.i.d. from the task posterior and averages their
    one-step conditional predictives; the per-task filtered states are already
    in ``state``, so each draw costs one emission mixture, not a re-filter.
    ``samples=None`` switches to exact enumeration (every active task weighted
    by its posterior), which reproduces the oracle predictive identically.
    """
    state._check_usable()
    w = _posterior_weights(state)
    if samples is None:
        weights = w
    else:
        if samples < 1:
            raise ValidationError(f"samples must be >= 1, got {samples}")
        parts = rng_seed if isinstance(rng_seed, tuple) else (rng_seed,)
        rng = HashRng("mc", *parts)
        counts = np.bincount(rng.choices(w, samples), minlength=len(w))
        weights = counts.astype(np.float64) / samples
    q = weights[:, None] * _state_distribution(state)
    return state.ensemble.mixture_predictive(state.active, q)
