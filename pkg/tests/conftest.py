import numpy as np
import pytest

from fuselab.fusion import HierarchyConfig, train_hierarchy
from fuselab.synthetic import CampaignSpec, generate_campaign


@pytest.fixture(scope="session")
def campaign():
    return generate_campaign(CampaignSpec(seed=0))


@pytest.fixture(scope="session")
def pipeline(campaign):
    cub, ten, _ = campaign
    return train_hierarchy(cub, ten, HierarchyConfig().with_overrides(n_starts=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
