import numpy as np
import pytest

from raremix import Dataset, LabeledDataset, MixtureParams
from raremix.simlab import generate_dataset, generate_labeled


def random_spd(rng, p, scale=1.0):
    a = rng.standard_normal((p, p))
    return scale * (a @ a.T / p + (0.3 + rng.random()) * np.eye(p))


def random_theta(rng, p, require_ratio_pd=False, alpha=None):
    """Random valid parameters; optionally reject until the squared-ratio
    integral condition 2*inv(sigma1) - inv(sigma0) > 0 holds."""
    for _ in range(500):
        theta = MixtureParams(
            alpha=float(rng.uniform(0.05, 0.95)) if alpha is None else alpha,
            mu0=rng.uniform(-2.0, 2.0, p),
            sigma0=random_spd(rng, p),
            mu1=rng.uniform(-2.0, 2.0, p),
            sigma1=random_spd(rng, p),
        )
        if not require_ratio_pd:
            return theta
        a = 2.0 * np.linalg.inv(theta.sigma1) - np.linalg.inv(theta.sigma0)
        if np.all(np.linalg.eigvalsh(0.5 * (a + a.T)) > 1e-6):
            return theta
    raise RuntimeError("rejection sampling for a valid parameter point failed")


def well_separated_1d(alpha=0.3):
    """The unit-variance, +-1.5 mean pair used throughout the examples."""
    return MixtureParams(
        alpha=alpha, mu0=[1.5], sigma0=[[1.0]], mu1=[-1.5], sigma1=[[1.0]]
    )


def mild_1d(alpha=0.3):
    """Close components with unequal variances; the squared-ratio mass is
    small here (c ~ 2.1), so finite-alpha Jacobians sit near their limit."""
    return MixtureParams(
        alpha=alpha, mu0=[0.5], sigma0=[[1.1]], mu1=[-0.5], sigma1=[[0.8]]
    )


def draw_instance(rng, p, n, alpha=None, m=0):
    """Random theta plus a dataset drawn from it; labeled subset optional."""
    theta = random_theta(rng, p, alpha=alpha)
    data, _ = generate_dataset(theta.alpha, theta, n, rng)
    labeled = (
        generate_labeled(theta.alpha, theta, m, rng)
        if m
        else LabeledDataset.empty(p)
    )
    return theta, data, labeled


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)
