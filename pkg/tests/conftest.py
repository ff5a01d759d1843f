from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from visil.backend import SyntheticBackend, ToyWorld  # noqa: E402


@pytest.fixture
def toy_world() -> ToyWorld:
    return ToyWorld(facts_per_video=10, p_hit=0.9, p_miss=0.1, seed=0)


@pytest.fixture
def toy_backend(toy_world) -> SyntheticBackend:
    return SyntheticBackend(toy_world)
