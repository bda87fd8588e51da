from pathlib import Path

import pytest

from varfield.modeldsl import ModelSpec, parse_model
from varfield.ymcase import YMModel, build_ym

MODELS = Path(__file__).resolve().parents[1] / "varfield" / "models"


def load(name: str) -> ModelSpec:
    return parse_model((MODELS / name).read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def models_dir() -> Path:
    return MODELS


@pytest.fixture(scope="session")
def free_particle() -> ModelSpec:
    return load("free_particle.vf")


@pytest.fixture(scope="session")
def wave() -> ModelSpec:
    return load("wave.vf")


@pytest.fixture(scope="session")
def ym2() -> YMModel:
    return build_ym("su2", 2)
