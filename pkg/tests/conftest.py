import numpy as np
import pytest

from trotterchain.chain import (build_chain, cosine_potential, custom_potential,
                                experimental_potential, hamiltonian_matrix)


def expm_hermitian(H: np.ndarray, t: float) -> np.ndarray:
    """Independent oracle: exp(-i t H) via eigendecomposition."""
    E, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * E * t)) @ V.conj().T


def random_smooth_chain(L: int, seed: int, amplitude: float = 1.0):
    """Chain with a random low-harmonic (smooth) potential."""
    rng = np.random.Generator(np.random.PCG64(seed))
    n = np.arange(L)
    h = np.zeros(L)
    for k in range(1, 4):
        h += rng.normal(0, amplitude / k) * np.cos(np.pi * k * n / (L - 1) + rng.uniform(0, 2 * np.pi))
    return build_chain(L, 1.0, custom_potential(h))


@pytest.fixture(scope="session")
def cosine_chain_50():
    return build_chain(50, 1.0, cosine_potential(1.25))


@pytest.fixture(scope="session")
def cosine_chain_200():
    return build_chain(200, 1.0, cosine_potential(1.25))


@pytest.fixture(scope="session")
def experiment_chain():
    return build_chain(50, 1.0, experimental_potential(P=1.25, w=8))


@pytest.fixture(scope="session")
def experiment_spectrum(experiment_chain):
    from trotterchain.spectral import diagonalize

    return diagonalize(hamiltonian_matrix(experiment_chain), chain=experiment_chain)
