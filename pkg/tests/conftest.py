import pytest
from hypothesis import settings

from ipsmrf.graph import path_graph
from ipsmrf.marks import IndependentMarks
from ipsmrf.model import make_builtin

settings.register_profile("ipsmrf", max_examples=40, deadline=None)
settings.load_profile("ipsmrf")


@pytest.fixture
def path5():
    return path_graph(5, start=1, marks={v: v % 2 for v in range(1, 6)})


@pytest.fixture
def contact():
    return make_builtin("contact", {"lambda": 1.5, "mu": 1.0})


@pytest.fixture
def half():
    return IndependentMarks.bernoulli(0.5)
