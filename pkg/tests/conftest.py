"""Shared fixtures and helpers for the test suite."""

import pathlib

import pytest

from gapflow.fixtures import (
    chain_three_level,
    detuned_two_level,
    three_mode,
    two_level,
    two_mode_symmetric,
)

SCENARIO_DIR = pathlib.Path(__file__).resolve().parents[1] / "scenarios"


@pytest.fixture
def two_level_model():
    return two_level()


@pytest.fixture
def detuned_model():
    return detuned_two_level()


@pytest.fixture
def two_mode_model():
    return two_mode_symmetric()


@pytest.fixture
def three_mode_model():
    return three_mode()


@pytest.fixture
def chain_model():
    return chain_three_level()


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR


def scenario_path(name):
    return SCENARIO_DIR / f"{name}.json"
