import json

import numpy as np
import pytest

from conekit.cli import preset_path
from conekit.grids import build_grid


def load_preset(name: str) -> dict:
    return json.loads(preset_path(name).read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_grid():
    """Two spatial sites, two marks: every enumeration is tiny and exact."""
    return build_grid(
        mark_window=(0.1, 3.0),
        theta=1.0,
        mark_nodes=2,
        box=((0.0, 1.0),),
        space_nodes=(2,),
    )


@pytest.fixture
def medium_grid():
    """Four spatial sites, two marks."""
    return build_grid(
        mark_window=(0.1, 3.0),
        theta=1.0,
        mark_nodes=2,
        box=((0.0, 1.0),),
        space_nodes=(4,),
    )
