import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from data.feature_reader import clear_cache  # noqa: E402
from data.metadata_reader import MetadataStore  # noqa: E402
from model.config import FeatureBundle  # noqa: E402


@pytest.fixture(autouse=True)
def _reset_stores():
    yield
    clear_cache()
    MetadataStore.clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_bundles(n, d_model, n_targets=12, seed=0, lengths=(3, 2, 4), users=None):
    """Random feature bundles with targets; clip i belongs to user i % users."""
    g = np.random.default_rng(seed)
    users = users or n
    return [FeatureBundle(clip_id=f"c{i:03d}",
                          text=g.standard_normal((lengths[0], d_model)),
                          audio=g.standard_normal((lengths[1], d_model)),
                          video=g.standard_normal((lengths[2], d_model)),
                          y=g.standard_normal(n_targets),
                          user_no=f"u{i % users}")
            for i in range(n)]
