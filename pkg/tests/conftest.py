import os
import sys
import warnings

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from procrustes_embed.datasets import gen_plane, gen_swissroll  # noqa: E402
from procrustes_embed.neighborhoods import knn_graph  # noqa: E402

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def plane():
    """Flat sample in general position in R^3 with exact coordinates ``Z``."""
    ds = gen_plane(200, rng=3)
    return ds, knn_graph(ds.X, 8)


@pytest.fixture(scope="session")
def swissroll():
    ds = gen_swissroll(1600, rng=7)
    return ds, knn_graph(ds.X, 12)


@pytest.fixture(scope="session")
def gp_swissroll(swissroll):
    from procrustes_embed.embed_gp import embed_gp
    ds, g = swissroll
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return embed_gp(ds.X, g, 2).Y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
