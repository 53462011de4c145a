import numpy as np
import pytest

from darkmix.model import (
    ComponentParameters,
    MixtureModel,
    MixtureWeights,
    NPMMean,
    build_design,
)
from darkmix.simulate import atik_design
from darkmix.structcov import StructuredCov


def random_cov(rng, E=None, r=None, zero_tau=False):
    E = E or int(rng.integers(1, 11))
    r = r or int(rng.integers(1, 11))
    sigma = rng.uniform(0.3, 3.0, E)
    tau = np.zeros(E) if zero_tau else rng.uniform(0.0, 2.0, E)
    return StructuredCov(sigma, tau, r)


def single_component(design, mu, alpha, gamma):
    comp = ComponentParameters(NPMMean(mu), alpha, gamma)
    return MixtureModel(design, (comp,), MixtureWeights(np.empty(0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def atik10():
    return atik_design(10)


@pytest.fixture
def small_design():
    # affinely independent covariate rows: the three log-sigma values are free
    return build_design([(-10.0, 3.0), (0.0, 300.0), (10.0, 3.0)], 4)


def two_component(design, gap=40.0, pi=(0.8, 0.2)):
    """Two well-separated NPM components on ``design``."""
    E = design.n_conditions
    base = np.linspace(100.0, 110.0, E)
    comps = (
        ComponentParameters(NPMMean(base), np.array([np.log(2.0), 0.01, 0.0]), np.array([0.0, 0.02, 0.0])),
        ComponentParameters(NPMMean(base + gap), np.array([np.log(3.0), 0.01, 0.0]), np.array([np.log(2.0), 0.0, 0.0])),
    )
    return MixtureModel(design, comps, MixtureWeights.from_proportions(pi))
