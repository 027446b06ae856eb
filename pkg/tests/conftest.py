from fractions import Fraction

import pytest

from duallayer.config import apply_overrides, config_from_dict, example_dict
from duallayer.sim import run


def example_config(*overrides):
    return config_from_dict(apply_overrides(example_dict(), list(overrides)))


@pytest.fixture(scope="session")
def example():
    return example_config()


@pytest.fixture(scope="session")
def example_keyring(example):
    return example.provision()


@pytest.fixture(scope="session")
def run_m6(example, example_keyring):
    return run(example, keyring=example_keyring)


@pytest.fixture(scope="session")
def run_m9(example_keyring):
    return run(example_config("grid.m=9"), keyring=example_keyring)


def frac(x):
    return Fraction(x)
