from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from robust_gcc.model.examples import four_output_system, state_feedback_system, unit_cost
from robust_gcc.synthesis.gcc import GccSynthesizer
from robust_gcc.synthesis.lqr import lqr

DEMO_DIR = Path(__file__).resolve().parents[2] / "demo_examples"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def demo_dir():
    return DEMO_DIR


@pytest.fixture(scope="session")
def plant():
    return state_feedback_system(structured=True)


@pytest.fixture(scope="session")
def four_output_plant():
    return four_output_system(structured=True)


@pytest.fixture(scope="session")
def cost():
    return unit_cost()


@pytest.fixture(scope="session")
def synthesizer(plant, cost):
    return GccSynthesizer(plant, cost)


@pytest.fixture(scope="session")
def lqr_result(plant, cost):
    return lqr(plant, cost)


@pytest.fixture(scope="session")
def lemma_structured(synthesizer):
    return synthesizer.synth_lemma(structured=True)


@pytest.fixture(scope="session")
def dilated_structured(synthesizer):
    return synthesizer.synth_dilated(structured=True)


@pytest.fixture(scope="session")
def four_output_result(four_output_plant, cost):
    return GccSynthesizer(four_output_plant, cost).synth_dilated(structured=True)


@pytest.fixture(scope="session")
def mild_plant(plant):
    # Bw shrunk until the single full block admits a controller
    return replace(plant, bw=0.6 * plant.bw)


@pytest.fixture(scope="session")
def mild_synthesizer(mild_plant, cost):
    return GccSynthesizer(mild_plant, cost)


@pytest.fixture(scope="session")
def mild_lemma_unstructured(mild_synthesizer):
    return mild_synthesizer.synth_lemma(structured=False)
