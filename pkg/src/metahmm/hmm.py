"""Materializing one HMM from (bank, latent code), and sampling from it.

The transition matrix is the union of directed edges contributed by the
selected base cycle (stepped/reversed per the base coordinates) and, for
each family, the selected group's cycles (stepped/reversed per the shared
family coordinates). Duplicate edges collapse; each row is uniform over its
distinct targets. Emission rows are one-hot on the group mapping's symbol,
rotated inside the group block by the shift coordinate, optionally mixed
with uniform-over-block smoothing. The initial distribution is uniform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bank import EnvironmentBank
from .codes import LatentCode, slot_radices
from .errors import ValidationError
from .rng import HashRng

SeedParts = int | str | tuple


@dataclass(frozen=True)
class Hmm:
    transition: np.ndarray  # (N, N) row-stochastic
    emission: np.ndarray  # (N, V) row-stochastic
    initial: np.ndarray  # (N,)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.emission.shape[1]

    def validate(self, atol: float = 1e-12) -> "Hmm":
        for name, arr in (("transition", self.transition), ("emission", self.emission)):
            if np.any(arr < 0):
                raise ValidationError(f"{name} has negative entries")
            rows = arr.sum(axis=1)
            if np.max(np.abs(rows - 1.0)) > atol:
                raise ValidationError(f"{name} rows do not sum to 1 within {atol}")
        if np.any(self.initial < 0) or abs(self.initial.sum() - 1.0) > atol:
            raise ValidationError("initial is not a distribution")
        return self


@dataclass(frozen=True)
class DecodedCode:
    base_cycle: int
    base_step: int
    base_forward: bool
    group_choices: tuple[int, ...]
    family_step: int
    family_forward: bool
    mapping_choices: tuple[int, ...]
    shift: int


def decode(bank: EnvironmentBank, code: LatentCode) -> DecodedCode:
    cfg = bank.config
    radices = slot_radices(cfg)
    if len(code) != len(radices):
        raise ValidationError(f"code has {len(code)} coordinates, expected {len(radices)}")
    for slot, (c, r) in enumerate(zip(code, radices)):
        if not 0 <= c < r:
            raise ValidationError(f"coordinate {c} at slot {slot} out of range [0, {r})")
    pos = 3
    groups = tuple(code[pos : pos + cfg.families])
    pos += cfg.families
    fam_dir, fam_step = code[pos], code[pos + 1]
    pos += 2
    maps = tuple(code[pos : pos + cfg.emission_groups])
    shift = code[pos + cfg.emission_groups]
    return DecodedCode(
        base_cycle=code[0],
        base_step=code[1] + 1,
        base_forward=code[2] == 0,
        group_choices=groups,
        family_step=fam_step + 1,
        family_forward=fam_dir == 0,
        mapping_choices=maps,
        shift=shift,
    )


def _successors_on(order: np.ndarray, step: int, forward: bool, out: np.ndarray) -> None:
    n = len(order)
    shift = step if forward else -step
    out[order] = order[(np.arange(n) + shift) % n]


def base_successors(bank: EnvironmentBank, sel: DecodedCode) -> np.ndarray:
    n = bank.config.hidden_states
    order = np.asarray(bank.base_cycles[sel.base_cycle], dtype=np.int64)
    succ = np.empty(n, dtype=np.int64)
    _successors_on(order, sel.base_step, sel.base_forward, succ)
    return succ


def family_successors(bank: EnvironmentBank, sel: DecodedCode) -> np.ndarray:
    """Family-edge target per state; -1 for states on no selected cycle."""
    succ = np.full(bank.config.hidden_states, -1, dtype=np.int64)
    for f, choice in enumerate(sel.group_choices):
        for cycle in bank.family_groups[f][choice]:
            _successors_on(
                np.asarray(cycle, dtype=np.int64), sel.family_step, sel.family_forward, succ
            )
    return succ


def emission_symbols(bank: EnvironmentBank, sel: DecodedCode) -> np.ndarray:
    """Mapped (shift-rotated) symbol per state."""
    sym = np.empty(bank.config.hidden_states, dtype=np.int64)
    for g, (states, (start, size)) in enumerate(
        zip(bank.emission_group_states, bank.emission_blocks)
    ):
        mapping = bank.emission_mappings[g][sel.mapping_choices[g]]
        for state, mapped in zip(states, mapping):
            sym[state] = start + (mapped - start + sel.shift) % size
    return sym


def state_blocks(bank: EnvironmentBank) -> tuple[np.ndarray, np.ndarray]:
    """Per-state symbol block (start, size) arrays."""
    n = bank.config.hidden_states
    starts = np.empty(n, dtype=np.int64)
    sizes = np.empty(n, dtype=np.int64)
    for states, (start, size) in zip(bank.emission_group_states, bank.emission_blocks):
        for s in states:
            starts[s] = start
            sizes[s] = size
    return starts, sizes


def build_hmm(bank: EnvironmentBank, code: LatentCode) -> Hmm:
    cfg = bank.config
    n, v = cfg.hidden_states, cfg.symbols
    sel = decode(bank, code)

    succ_b = base_successors(bank, sel)
    succ_f = family_successors(bank, sel)
    transition = np.zeros((n, n), dtype=np.float64)
    for s in range(n):
        targets = {int(succ_b[s])}
        if succ_f[s] >= 0:
            targets.add(int(succ_f[s]))
        transition[s, sorted(targets)] = 1.0 / len(targets)

    eps = float(cfg.emission_smoothing)
    sym = emission_symbols(bank, sel)
    starts, sizes = state_blocks(bank)
    emission = np.zeros((n, v), dtype=np.float64)
    for s in range(n):
        emission[s, starts[s] : starts[s] + sizes[s]] = eps / sizes[s]
        emission[s, sym[s]] += 1.0 - eps

    initial = np.full(n, 1.0 / n)
    return Hmm(transition=transition, emission=emission, initial=initial)


def sample_sequence(
    hmm: Hmm, length: int, rng_seed: SeedParts
) -> tuple[np.ndarray, np.ndarray]:
    """Ancestral sampling: per step, emit from the current state, then move."""
    if length < 1:
        raise ValidationError(f"length must be >= 1, got {length}")
    parts = rng_seed if isinstance(rng_seed, tuple) else (rng_seed,)
    rng = HashRng("sample", *parts)
    states = np.empty(length, dtype=np.int64)
    symbols = np.empty(length, dtype=np.int64)
    state = rng.choice(hmm.initial)
    for t in range(length):
        states[t] = state
        symbols[t] = rng.choice(hmm.emission[state])
        state = rng.choice(hmm.transition[state])
    return states, symbols
