import json
from pathlib import Path

import pytest

from metahmm import EnvironmentConfig, generate_bank


def tiny_config_dict(**overrides) -> dict:
    """48-task environment: (2*1*2) * (2*1*1) * (3*2)."""
    base = dict(
        hidden_states=4,
        symbols=6,
        base_cycles=2,
        base_step_sizes=1,
        base_directions=2,
        families=1,
        groups_per_family=2,
        family_directions=1,
        family_step_sizes=1,
        emission_groups=1,
        emissions_per_group=3,
        shifts=2,
        seed=7,
    )
    base.update(overrides)
    return base


def paper_config_dict(**overrides) -> dict:
    """The 12288-task reference configuration."""
    base = dict(
        hidden_states=20,
        symbols=50,
        base_cycles=4,
        base_step_sizes=2,
        base_directions=2,
        families=3,
        groups_per_family=2,
        family_directions=2,
        family_step_sizes=2,
        emission_groups=3,
        emissions_per_group=2,
        shifts=3,
        seed=0,
        allow_unequal_groups=True,
    )
    base.update(overrides)
    return base


@pytest.fixture(scope="session")
def tiny_config() -> EnvironmentConfig:
    return EnvironmentConfig.from_dict(tiny_config_dict())


@pytest.fixture(scope="session")
def tiny_bank(tiny_config):
    return generate_bank(tiny_config)


@pytest.fixture(scope="session")
def paper_config() -> EnvironmentConfig:
    return EnvironmentConfig.from_dict(paper_config_dict())


@pytest.fixture(scope="session")
def paper_bank(paper_config):
    return generate_bank(paper_config)


def write_config(path: Path, data: dict) -> Path:
    path.write_text(json.dumps(data), encoding="utf-8")
    return path
