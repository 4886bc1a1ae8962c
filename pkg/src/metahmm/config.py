"""Environment configuration: the knobs that define one task family.

A configuration fixes the shared state/symbol spaces, how many alternatives
exist for each structural choice (base cycles, cycle families, emission
mappings), and the seed all shared building blocks are drawn from.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .errors import ConfigError

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

_COUNT_FIELDS = (
    "hidden_states",
    "symbols",
    "base_cycles",
    "base_step_sizes",
    "base_directions",
    "families",
    "groups_per_family",
    "family_directions",
    "family_step_sizes",
    "emission_groups",
    "emissions_per_group",
    "shifts",
)


@dataclass(frozen=True)
class EnvironmentConfig:
    """All generation hyperparameters plus the bank seed.

    ``emission_smoothing`` mixes each one-hot emission row with the uniform
    distribution over its group's symbol block (0 keeps emissions
    deterministic). ``allow_unequal_groups`` opts into near-equal emission
    group sizes when ``emission_groups`` does not divide ``hidden_states``;
    the strict default rejects such configurations.
    """

    hidden_states: int
    symbols: int
    base_cycles: int
    base_step_sizes: int
    base_directions: int
    families: int
    groups_per_family: int
    family_directions: int
    family_step_sizes: int
    emission_groups: int
    emissions_per_group: int
    shifts: int
    seed: int
    emission_smoothing: float = 0.0
    allow_unequal_groups: bool = False

    def validate(self) -> "EnvironmentConfig":
        for name in _COUNT_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        for name in ("base_directions", "family_directions"):
            if getattr(self, name) not in (1, 2):
                raise ConfigError(f"{name} must be 1 or 2, got {getattr(self, name)}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an integer in [0, 2**64), got {self.seed!r}")
        if self.emission_groups > self.hidden_states:
            raise ConfigError(
                f"emission_groups ({self.emission_groups}) exceeds hidden_states "
                f"({self.hidden_states})"
            )
        if self.hidden_states % self.emission_groups != 0 and not self.allow_unequal_groups:
            raise ConfigError(
                f"emission_groups ({self.emission_groups}) does not divide hidden_states "
                f"({self.hidden_states}); set allow_unequal_groups for near-equal groups"
            )
        if self.symbols < self.hidden_states:
            raise ConfigError(
                f"symbols ({self.symbols}) must be >= hidden_states ({self.hidden_states}) "
                "so every state can map to a distinct symbol in its group block"
            )
        if not 0.0 <= float(self.emission_smoothing) <= 1.0:
            raise ConfigError(
                f"emission_smoothing must lie in [0, 1], got {self.emission_smoothing}"
            )
        return self

    def with_seed(self, seed: int) -> "EnvironmentConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        """Stable hex digest over every field; changes iff any field changes."""
        return hashlib.blake2b(self.canonical_json().encode("utf-8"), digest_size=16).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "EnvironmentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration fields: {sorted(unknown)}")
        missing = {f for f in _COUNT_FIELDS} | {"seed"}
        missing -= set(data)
        if missing:
            raise ConfigError(f"missing configuration fields: {sorted(missing)}")
        return cls(**data).validate()

    @classmethod
    def from_file(cls, path: str | Path) -> "EnvironmentConfig":
        path = Path(path)
        raw = path.read_bytes()
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a single configuration object")
        return cls.from_dict(data)
