"""
Test setup: put the curlrec sources on the import path the way the application runs them
"""
import os
import sys

import numpy as np
import pytest

# Add curlrec to path
curlrec_path = os.path.join(os.path.dirname(__file__), 'curlrec')
sys.path.insert(0, curlrec_path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_cell_mesh():
    from models.mesh import uniform_square_mesh
    return uniform_square_mesh(1)


@pytest.fixture
def square2():
    from models.mesh import uniform_square_mesh
    return uniform_square_mesh(2)
