# tests/conftest.py
import textwrap

import pytest

from orlicz_var.models.grid import Grid
from orlicz_var.models.mo_function import power_function


@pytest.fixture
def unit_grid():
    return Grid.unit(9, 9)


@pytest.fixture
def square():
    return power_function(2.0, name="square")


@pytest.fixture
def write_config(tmp_path):
    """Write a problem file into tmp_path and return its path"""

    def write(body: str, name: str = "problem.cfg"):
        path = tmp_path / name
        path.write_text("orlicz-var v1\n" + textwrap.dedent(body), encoding="utf-8")
        return path

    return write
