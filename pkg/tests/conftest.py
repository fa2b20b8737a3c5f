import numpy as np
import pytest

from app.models.contact import ContactModel, FourierSeries
from app.services.exact_heisenberg import enumerate_spectrum
from app.storage.artifacts import ArtifactStore


@pytest.fixture(scope="session")
def flat_spectrum():
    return enumerate_spectrum(2000.0)


@pytest.fixture
def flat_model():
    return ContactModel.flat()


@pytest.fixture
def perturbed_model():
    """eps = 0.1 with a = cos(2 pi x/Lx), b = cos(2 pi y/Ly)"""
    return ContactModel(
        epsilon=0.1,
        coeff_a=FourierSeries.from_pairs([(1, 0, 1.0)]),
        coeff_b=FourierSeries.from_pairs([(0, 1, 1.0)]),
    )


@pytest.fixture
def store(tmp_path):
    return ArtifactStore(str(tmp_path / "out"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
