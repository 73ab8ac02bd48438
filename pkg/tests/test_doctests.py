import doctest
import importlib

import pytest

MODULES = ["rulepack", "dsl", "renal", "engine", "ingest", "analytics", "reports", "cli"]


@pytest.mark.parametrize("name", MODULES)
def test_module_doctests(name):
    module = importlib.import_module(f"nephrodose.{name}")
    result = doctest.testmod(module, optionflags=doctest.ELLIPSIS)
    assert result.failed == 0
