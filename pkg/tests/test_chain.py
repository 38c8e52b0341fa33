import numpy as np
import pytest

from trotterchain.chain import (ChainSpec, build_chain, cosine_potential, custom_potential,
                                custom_potential_from_file, experimental_potential,
                                hamiltonian_matrix, linear_potential, wigner_transform)


def test_flat_chain_matrix():
    spec = build_chain(3, 1.0, custom_potential([0, 0, 0]))
    H = hamiltonian_matrix(spec).entries
    expected = np.array([[0, -0.5, 0], [-0.5, 0, -0.5], [0, -0.5, 0]])
    assert np.allclose(H, expected, atol=0)


def test_cosine_first_site():
    spec = build_chain(50, 1.0, cosine_potential(1.25))
    assert spec.h[0] == pytest.approx(1.25, abs=1e-15)


def test_experimental_endpoints_and_normalization():
    h = build_chain(50, 1.0, experimental_potential(P=1.25, w=8)).h
    assert h[0] == 0.0 and h[-1] == 0.0
    n0 = 25  # floor((L+1)/2), 1-based
    assert h[n0 - 1] == pytest.approx(1.25, abs=1e-15)


def test_experimental_mirror_symmetry():
    h = build_chain(50, 1.0, experimental_potential(P=1.25, w=8)).h
    assert np.abs(h - h[::-1]).max() < 1e-12 * 1.25


def test_custom_potential_from_file(tmp_path):
    values = np.linspace(-0.3, 0.7, 11)
    path = tmp_path / "pot.txt"
    np.savetxt(path, values)
    spec = build_chain(11, 1.0, custom_potential_from_file(path))
    assert np.allclose(spec.h, values, atol=0)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        build_chain(1, 1.0, custom_potential([0.0]))
    with pytest.raises(ValueError):
        build_chain(3, 1.0, custom_potential([0.0, np.nan, 0.0]))
    with pytest.raises(ValueError):
        ChainSpec(L=3, J=-1.0, h=np.zeros(3))
    with pytest.raises(ValueError):
        build_chain(4, 1.0, custom_potential([0.0, 0.0]))


def test_two_site_eigenvalues():
    spec = build_chain(2, 1.0, custom_potential([0, 0]))
    E = np.linalg.eigvalsh(hamiltonian_matrix(spec).entries)
    assert np.allclose(E, [-0.5, 0.5], atol=1e-14)


def test_matrix_exact_symmetry_and_spectral_range():
    for seed in range(3):
        rng = np.random.Generator(np.random.PCG64(seed))
        h = rng.normal(0, 1, 40)
        spec = build_chain(40, 1.0, custom_potential(h))
        H = hamiltonian_matrix(spec).entries
        assert np.array_equal(H, H.T)
        E = np.linalg.eigvalsh(H)
        assert E.min() >= h.min() - 1.0 - 1e-12
        assert E.max() <= h.max() + 1.0 + 1e-12


def test_spectral_range_cosine_200():
    spec = build_chain(200, 1.0, cosine_potential(1.25))
    E = np.linalg.eigvalsh(hamiltonian_matrix(spec).entries)
    assert E.min() >= -1.0 + spec.h.min() - 1e-12
    assert E.max() <= 1.0 + spec.h.max() + 1e-12


def test_wannier_stark_ladder_spacing():
    alpha = 0.05
    spec = build_chain(200, 1.0, linear_potential(alpha))
    E = np.linalg.eigvalsh(hamiltonian_matrix(spec).entries)
    interior = E[(E > alpha * 30) & (E < alpha * 170)]
    spacings = np.diff(interior)
    assert np.abs(spacings - alpha).max() < 1e-6


def test_wigner_values():
    spec = build_chain(10, 1.0, custom_potential(np.zeros(10)))
    assert wigner_transform(spec, 5.0, 0.0) == pytest.approx(-1.0, abs=1e-14)
    assert wigner_transform(spec, 5.0, np.arccosh(2.0) * 1j) == pytest.approx(-2.0, abs=1e-12)
    spec2 = build_chain(10, 1.0, custom_potential(np.linspace(0, 1, 10)))
    x = 4.3
    assert wigner_transform(spec2, x, np.pi / 2) == pytest.approx(
        float(spec2.smooth_potential()(x)), abs=1e-12)


def test_wigner_matches_row_sum():
    # the transform at integer sites must reproduce sum_m H[n,m] e^{ip(m-n)}
    rng = np.random.Generator(np.random.PCG64(7))
    h = np.cos(np.linspace(0, 3, 30))
    spec = build_chain(30, 1.0, custom_potential(h))
    H = hamiltonian_matrix(spec).entries
    for n in rng.integers(5, 25, size=5):
        p = rng.uniform(0, np.pi)
        row_sum = sum(H[n, m] * np.exp(1j * p * (m - n)) for m in range(30))
        assert wigner_transform(spec, float(n + 1), p) == pytest.approx(row_sum.real, abs=1e-10)
        assert abs(row_sum.imag) < 1e-10
