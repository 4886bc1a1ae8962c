"""Latent codes: one coordinate per structural choice, mixed-radix indexed.

Slot order (most significant first):
  base cycle, base step-size, base direction,
  one group choice per family, family direction, family step-size,
  one mapping choice per emission group, emission shift.
"""

from __future__ import annotations

from typing import Sequence

from .config import EnvironmentConfig
from .errors import ValidationError

LatentCode = tuple[int, ...]


def slot_radices(config: EnvironmentConfig) -> tuple[int, ...]:
    """Cardinality of each choice slot, in canonical slot order."""
    return (
        (config.base_cycles, config.base_step_sizes, config.base_directions)
        + (config.groups_per_family,) * config.families
        + (config.family_directions, config.family_step_sizes)
        + (config.emissions_per_group,) * config.emission_groups
        + (config.shifts,)
    )


def slot_labels(config: EnvironmentConfig) -> tuple[str, ...]:
    return (
        ("base_cycle", "base_step", "base_direction")
        + tuple(f"family_{f}_group" for f in range(config.families))
        + ("family_direction", "family_step")
        + tuple(f"emission_group_{g}_mapping" for g in range(config.emission_groups))
        + ("shift",)
    )


def environment_size(config: EnvironmentConfig) -> int:
    """Total number of distinct latent codes for this configuration."""
    config.validate()
    base = config.base_cycles * config.base_step_sizes * config.base_directions
    families = (
        config.groups_per_family**config.families
        * config.family_directions
        * config.family_step_sizes
    )
    emissions = config.emissions_per_group**config.emission_groups * config.shifts
    return base * families * emissions


def index_to_code(radices: Sequence[int], index: int) -> LatentCode:
    """Mixed-radix decode, most-significant slot first."""
    total = 1
    for r in radices:
        total *= r
    if not 0 <= index < total:
        raise ValidationError(f"index {index} out of range [0, {total})")
    coords = [0] * len(radices)
    rem = index
    for slot in range(len(radices) - 1, -1, -1):
        coords[slot] = rem % radices[slot]
        rem //= radices[slot]
    return tuple(coords)


def code_to_index(radices: Sequence[int], code: Sequence[int]) -> int:
    """Inverse of :func:`index_to_code`."""
    if len(code) != len(radices):
        raise ValidationError(
            f"code has {len(code)} coordinates, expected {len(radices)} slots"
        )
    index = 0
    for slot, (r, c) in enumerate(zip(radices, code)):
        if not 0 <= c < r:
            raise ValidationError(
                f"coordinate {c} at slot {slot} out of range [0, {r})"
            )
        index = index * r + c
    return index
