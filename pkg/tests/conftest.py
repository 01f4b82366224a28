import pytest

from ncf2fd.linkmodel import SystemParams, complete_constellation


@pytest.fixture
def example_constellation():
    # alpha=0.5, eta1=0.1, eta2=1.5 -> eps2=2.2
    return complete_constellation(0.5, 0.1, 1.5)


@pytest.fixture
def params30():
    return SystemParams(30.0, n_r=2)
