import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running test (still part of the default run)")
    config.addinivalue_line("markers", "acceptance: acceptance-criterion test")
