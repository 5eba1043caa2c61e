"""Shared catalog families used across the test suite."""

import numpy as np
import pytest

from infinitas.familyspec import hypersurface_family, map_graph_family


@pytest.fixture
def linear_graph():
    return map_graph_family("x1", n=2)


@pytest.fixture
def product_graph():
    return map_graph_family("x1*x2", n=2)


@pytest.fixture
def circle_graph():
    return map_graph_family("x1^2 + x2^2", n=2)


@pytest.fixture
def broughton_graph():
    return map_graph_family("x1 + x1^2*x2", n=2)


@pytest.fixture
def circle_family():
    return hypersurface_family("x1^2 + x2^2 - y1", n=2)


@pytest.fixture
def hyperbola_family():
    return hypersurface_family("x1*x2 - y1", n=2)
