"""Shared building blocks: cycles and emission mappings drawn once per seed.

A bank holds everything the latent code chooses between:

- ``base_cycles``: full-length visit orders over all hidden states.
- ``family_groups``: per cycle family, alternative partitions of that
  family's state subset into short disjoint cycles. States are assigned to
  families round-robin (state ``s`` belongs to family ``s % families``), so
  family subsets are disjoint and every state carries at most one family
  edge. Cycle length is ``max(2, hidden_states // (2 * families))``; a
  length-1 remainder is merged into the preceding cycle.
- ``emission_mappings``: per emission group, alternative injective maps from
  the group's states into the group's private symbol block
  ``[g * (symbols // groups), (g + 1) * (symbols // groups))``. The shift
  coordinate later rotates mapped symbols inside the block.

Construction is a pure function of (config, seed): every random object is
drawn from its own ``HashRng`` stream keyed by purpose and index, and
rejection re-draws bump an attempt counter in the key. Rejection keeps the
*drawn* blocks pairwise distinguishable (no base cycle is a step/direction
variant of another; no family group duplicates another group's edge sets;
no emission mapping is a small rotation of a sibling). Degeneracies inside a
single block (e.g. step variants that coincide on very short cycles) are
inherent to the geometry and left as-is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import EnvironmentConfig
from .errors import GenerationError
from .rng import HashRng

_MAX_ATTEMPTS = 1000

Cycle = tuple[int, ...]


@dataclass(frozen=True)
class EnvironmentBank:
    config: EnvironmentConfig
    base_cycles: tuple[Cycle, ...]
    family_states: tuple[tuple[int, ...], ...]
    family_groups: tuple[tuple[tuple[Cycle, ...], ...], ...]
    emission_group_states: tuple[tuple[int, ...], ...]
    emission_blocks: tuple[tuple[int, int], ...]
    emission_mappings: tuple[tuple[tuple[int, ...], ...], ...]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "base_cycles": [list(c) for c in self.base_cycles],
            "family_states": [list(s) for s in self.family_states],
            "family_groups": [
                [[list(cycle) for cycle in group] for group in fam]
                for fam in self.family_groups
            ],
            "emission_group_states": [list(s) for s in self.emission_group_states],
            "emission_blocks": [list(b) for b in self.emission_blocks],
            "emission_mappings": [
                [list(m) for m in group] for group in self.emission_mappings
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _cycle_successors(order: np.ndarray, step: int, forward: bool) -> np.ndarray:
    """Successor of each state on a cycle visit order, stepping ``step`` positions."""
    n = len(order)
    shift = step if forward else -step
    succ = np.empty(n, dtype=np.int64)
    succ[order] = order[(np.arange(n) + shift) % n]
    return succ


def _base_variants(order: np.ndarray, config: EnvironmentConfig) -> list[bytes]:
    variants = []
    for step in range(1, config.base_step_sizes + 1):
        for direction in range(config.base_directions):
            variants.append(_cycle_successors(order, step, direction == 0).tobytes())
    return variants


def _draw_base_cycles(config: EnvironmentConfig) -> tuple[Cycle, ...]:
    n = config.hidden_states
    cycles: list[Cycle] = []
    seen: set[bytes] = set()
    for i in range(config.base_cycles):
        for attempt in range(_MAX_ATTEMPTS):
            rng = HashRng(config.seed, "base", i, attempt)
            order = rng.permutation(n)
            variants = _base_variants(order, config)
            if all(v not in seen for v in variants):
                seen.update(variants)
                cycles.append(tuple(int(s) for s in order))
                break
        else:
            raise GenerationError(
                f"could not draw base cycle {i} distinct from earlier cycles "
                f"after {_MAX_ATTEMPTS} attempts"
            )
    return tuple(cycles)


def _group_edge_sets(
    cycles: list[np.ndarray], config: EnvironmentConfig
) -> list[frozenset[tuple[int, int]]]:
    """Edge sets contributed by one group under every (step, direction) variant."""
    out = []
    for step in range(1, config.family_step_sizes + 1):
        for direction in range(config.family_directions):
            edges = set()
            for cyc in cycles:
                succ = cyc[(np.arange(len(cyc)) + (step if direction == 0 else -step)) % len(cyc)]
                edges.update(zip(cyc.tolist(), succ.tolist()))
            out.append(frozenset(edges))
    return out


def _draw_family_groups(
    config: EnvironmentConfig, family_states: tuple[tuple[int, ...], ...]
) -> tuple[tuple[tuple[Cycle, ...], ...], ...]:
    n = config.hidden_states
    cycle_len = max(2, n // (2 * config.families))
    families = []
    for f, states in enumerate(family_states):
        if len(states) < 2:
            raise GenerationError(
                f"family {f} has {len(states)} state(s); at least 2 are needed to "
                "form a cycle (reduce families or increase hidden_states)"
            )
        groups: list[tuple[Cycle, ...]] = []
        seen: list[frozenset[tuple[int, int]]] = []
        for g in range(config.groups_per_family):
            for attempt in range(_MAX_ATTEMPTS):
                rng = HashRng(config.seed, "family", f, g, attempt)
                shuffled = np.asarray(states, dtype=np.int64)[rng.permutation(len(states))]
                chunks = [shuffled[i : i + cycle_len] for i in range(0, len(shuffled), cycle_len)]
                if len(chunks) > 1 and len(chunks[-1]) == 1:
                    chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
                    chunks.pop()
                edge_sets = _group_edge_sets(chunks, config)
                if all(es not in seen for es in edge_sets):
                    seen.extend(edge_sets)
                    groups.append(tuple(tuple(int(s) for s in c) for c in chunks))
                    break
            else:
                raise GenerationError(
                    f"could not draw group {g} of family {f} with edge sets distinct "
                    f"from earlier groups after {_MAX_ATTEMPTS} attempts"
                )
        families.append(tuple(groups))
    return tuple(families)


def _rotations(mapping: tuple[int, ...], block: tuple[int, int], max_shift: int) -> set[Cycle]:
    start, size = block
    rots = set()
    for r in range(-(max_shift - 1), max_shift):
        rots.add(tuple(start + (m - start + r) % size for m in mapping))
    return rots


def _draw_emission_mappings(
    config: EnvironmentConfig,
    group_states: tuple[tuple[int, ...], ...],
    blocks: tuple[tuple[int, int], ...],
) -> tuple[tuple[tuple[int, ...], ...], ...]:
    mappings = []
    for g, (states, (start, size)) in enumerate(zip(group_states, blocks)):
        if size < len(states):
            raise GenerationError(
                f"emission group {g} has {len(states)} states but its symbol block "
                f"holds only {size} symbols; increase symbols or emission_groups"
            )
        if config.shifts > size:
            raise GenerationError(
                f"shifts ({config.shifts}) exceeds the symbol block size ({size}) of "
                f"group {g}; distinct shifts would wrap onto each other"
            )
        group_maps: list[tuple[int, ...]] = []
        forbidden: set[Cycle] = set()
        for a in range(config.emissions_per_group):
            for attempt in range(_MAX_ATTEMPTS):
                rng = HashRng(config.seed, "emission", g, a, attempt)
                picks = rng.permutation(size)[: len(states)]
                mapping = tuple(start + int(p) for p in picks)
                if mapping not in forbidden:
                    forbidden |= _rotations(mapping, (start, size), config.shifts)
                    group_maps.append(mapping)
                    break
            else:
                raise GenerationError(
                    f"could not draw mapping {a} of emission group {g} outside the "
                    f"rotation classes of earlier mappings after {_MAX_ATTEMPTS} attempts"
                )
        mappings.append(tuple(group_maps))
    return tuple(mappings)


def _emission_partition(config: EnvironmentConfig) -> tuple[tuple[int, ...], ...]:
    """Contiguous near-equal groups; sizes differ by at most one."""
    n, g = config.hidden_states, config.emission_groups
    base, rem = divmod(n, g)
    groups = []
    cursor = 0
    for j in range(g):
        size = base + (1 if j < rem else 0)
        groups.append(tuple(range(cursor, cursor + size)))
        cursor += size
    return tuple(groups)


def generate_bank(config: EnvironmentConfig) -> EnvironmentBank:
    """Materialize all shared building blocks for (config, seed)."""
    config.validate()
    n = config.hidden_states
    family_states = tuple(
        tuple(s for s in range(n) if s % config.families == f) for f in range(config.families)
    )
    group_states = _emission_partition(config)
    block_size = config.symbols // config.emission_groups
    blocks = tuple((j * block_size, block_size) for j in range(config.emission_groups))
    return EnvironmentBank(
        config=config,
        base_cycles=_draw_base_cycles(config),
        family_states=family_states,
        family_groups=_draw_family_groups(config, family_states),
        emission_group_states=group_states,
        emission_blocks=blocks,
        emission_mappings=_draw_emission_mappings(config, group_states, blocks),
    )
