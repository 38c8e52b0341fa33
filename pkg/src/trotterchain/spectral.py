"""Exact diagonalization and everything built on it.

Covers: spectrum reports, tunnel-doublet extraction with detuning
recovery, the two-level resonant model, eigenstate overlap maps between
exact and Trotterized Hamiltonians, the second-order probability defect,
the rigorous one-step error bound, and the Wannier-Stark analytic oracle
(Bessel eigenfunctions of the linear-potential chain).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.special import jv

from .chain import ChainSpec
from .operators import DenseOperator


@dataclass
class SpectrumReport:
    energies: np.ndarray          # ascending
    states: np.ndarray            # states[:, k] belongs to energies[k]
    source: str                   # "exact" or "effective(dt=..., ordering=...)"
    chain: Optional[ChainSpec] = None
    meta: dict = field(default_factory=dict)


@dataclass
class DoubletReport:
    index: int                    # 1-based ordinal among accepted pairs
    E_mean: float
    eta: float                    # half-splitting (E_upper - E_lower)/2
    epsilon: float                # detuning read off in the localized basis
    left_weight: float            # left/right occupancy of the lower (symmetric-
    right_weight: float           # combination) member of the pair
    level_indices: Tuple[int, int] = (0, 0)


def diagonalize(H: DenseOperator, chain: ChainSpec | None = None, source: str = "exact") -> SpectrumReport:
    """Full eigensystem of a hermitian operator, ascending energies."""
    if H.tag != "hermitian":
        raise ValueError("diagonalize expects a hermitian operator")
    energies, states = np.linalg.eigh(H.entries)
    return SpectrumReport(energies=energies, states=states, source=source, chain=chain)


def spectrum_of_effective(H_eff: DenseOperator, chain: ChainSpec) -> SpectrumReport:
    dt = H_eff.meta.get("dt")
    ordering = H_eff.meta.get("ordering", "?")
    rep = diagonalize(H_eff, chain=chain, source=f"effective(dt={dt}, ordering={ordering})")
    rep.meta.update(H_eff.meta)
    return rep


def _localized_mixing(v1: np.ndarray, v2: np.ndarray, left_mask: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """Rotation angle that maximizes the left-well weight within span{v1, v2}.

    Returns (theta, vL, vR) with vL = cos(t) v1 + sin(t) v2 the most
    left-localized combination and vR its orthogonal partner."""
    a = float(np.sum(np.abs(v1[left_mask]) ** 2))
    b = float(np.sum(np.abs(v2[left_mask]) ** 2))
    c = float(np.real(np.sum(np.conj(v1[left_mask]) * v2[left_mask])))
    theta = 0.5 * np.arctan2(2 * c, a - b)
    vL = np.cos(theta) * v1 + np.sin(theta) * v2
    vR = -np.sin(theta) * v1 + np.cos(theta) * v2
    # arctan2 picks an extremum; make sure it is the maximum
    if np.sum(np.abs(vL[left_mask]) ** 2) < np.sum(np.abs(vR[left_mask]) ** 2):
        vL, vR = vR, -vL
    return theta, vL, vR


def find_doublets(report: SpectrumReport, barrier_center: float) -> List[DoubletReport]:
    """Pair consecutive levels below the barrier top into tunnel doublets.

    The barrier top is h(barrier_center) - J (the energy above which the
    forbidden region at the barrier disappears).  For each candidate pair
    the optimally localized combinations are formed; the pair is accepted
    when one combination holds >50% of its weight left of the barrier and
    the other >50% right of it, otherwise the lower level is flagged as
    unpairable and skipped.  The detuning follows from the pair Hamiltonian
    in the localized basis: eps = H_RR - H_LL.
    """
    if report.chain is None:
        raise ValueError("find_doublets needs the ChainSpec attached to the report")
    spec = report.chain
    h = spec.smooth_potential()
    barrier_top = float(h(barrier_center)) - spec.J
    sites = np.arange(1, spec.L + 1)
    left_mask = sites < barrier_center
    right_mask = sites > barrier_center

    idx = [k for k, E in enumerate(report.energies) if E < barrier_top]
    doublets: List[DoubletReport] = []
    k = 0
    while k + 1 < len(idx):
        i, j = idx[k], idx[k + 1]
        v1, v2 = report.states[:, i], report.states[:, j]
        _, vL, vR = _localized_mixing(v1, v2, left_mask)
        wL = float(np.sum(np.abs(vL[left_mask]) ** 2))
        wR = float(np.sum(np.abs(vR[right_mask]) ** 2))
        if wL <= 0.5 or wR <= 0.5:
            k += 1  # unpairable level, excluded
            continue
        E1, E2 = report.energies[i], report.energies[j]
        # pair Hamiltonian in the localized basis {vL, vR}
        H_LL = float(np.real(np.vdot(vL, E1 * np.vdot(v1, vL) * v1 + E2 * np.vdot(v2, vL) * v2)))
        H_RR = float(np.real(np.vdot(vR, E1 * np.vdot(v1, vR) * v1 + E2 * np.vdot(v2, vR) * v2)))
        lower = report.states[:, i]
        doublets.append(
            DoubletReport(
                index=len(doublets) + 1,
                E_mean=float(0.5 * (E1 + E2)),
                eta=float(0.5 * (E2 - E1)),
                epsilon=H_RR - H_LL,
                left_weight=float(np.sum(np.abs(lower[left_mask]) ** 2)),
                right_weight=float(np.sum(np.abs(lower[right_mask]) ** 2)),
                level_indices=(i, j),
            )
        )
        k += 2
    return doublets


def resonant_model(epsilon: float, eta: float) -> Tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Two-level resonant subspace H = [[-eps/2, eta], [eta, eps/2]].

    Returns the eigenvalues (-Omega, +Omega) with Omega = sqrt(eta^2 +
    eps^2/4) and the left-well occupancy of a state prepared in the left
    basis vector:

        <N_left(t)> = (eps/2 Omega)^2 + [1 - (eps/2 Omega)^2] cos^2(Omega t).
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    omega = float(np.hypot(eta, 0.5 * epsilon))
    if omega == 0.0:
        return np.array([0.0, 0.0]), lambda t: np.ones_like(np.asarray(t, dtype=float))
    floor = (0.5 * epsilon / omega) ** 2

    def occupancy(t):
        return floor + (1.0 - floor) * np.cos(omega * np.asarray(t)) ** 2

    return np.array([-omega, omega]), occupancy


def _match_by_overlap(states_a: np.ndarray, states_b: np.ndarray) -> np.ndarray:
    """For each column of states_a, index of the best-overlap column of states_b."""
    O = np.abs(states_a.conj().T @ states_b)
    return np.argmax(O, axis=1)


@dataclass
class OverlapMap:
    grid: np.ndarray              # |<M_eff|N>| / (J dt)^2, diagonal replaced
    exact_energies: np.ndarray
    effective_energies: np.ndarray
    normalization: float          # (J dt)^2
    ridge_lines: dict             # name -> callable E_N -> E_M


def overlap_map(exact: SpectrumReport, effective: SpectrumReport, dt: float,
                well_mask: np.ndarray | None = None, h_ref: float | None = None) -> OverlapMap:
    """Eigenstate distortion map |<M_eff|N>| normalized by (J dt)^2.

    Rows M run over effective eigenstates, columns N over exact ones; the
    diagonal (pairing by energy order within the selected well) is replaced
    by sqrt(1 - |<N_eff|N>|^2).  `well_mask` restricts both spectra to
    states with >50% weight on the selected sites.  Ridge reference lines
    (with h_ref the well-bottom potential by default):

        E_M = E_N,   E_M = 2J - (E_N + h_ref),   E_M = 2J + (E_N + h_ref).
    """
    if exact.chain is None:
        raise ValueError("overlap_map needs the ChainSpec attached to the exact report")
    spec = exact.chain
    if h_ref is None:
        h_ref = float(spec.h.min())

    def select(rep: SpectrumReport) -> np.ndarray:
        if well_mask is None:
            return np.arange(rep.energies.size)
        w = np.sum(np.abs(rep.states[well_mask, :]) ** 2, axis=0)
        return np.nonzero(w > 0.5)[0]

    ie = select(exact)
    if_ = select(effective)
    n = min(ie.size, if_.size)
    ie, if_ = ie[:n], if_[:n]
    A = exact.states[:, ie]
    B = effective.states[:, if_]
    O = np.abs(B.conj().T @ A)      # rows M (effective), columns N (exact)
    diag = np.sqrt(np.clip(1.0 - np.diag(O) ** 2, 0.0, None))
    np.fill_diagonal(O, diag)
    norm = (spec.J * dt) ** 2
    lines = {
        "elastic": lambda EN: EN,
        "reflected": lambda EN, h=h_ref, J=spec.J: 2 * J - (EN + h),
        "band_shifted": lambda EN, h=h_ref, J=spec.J: 2 * J + (EN + h),
    }
    return OverlapMap(
        grid=O / norm,
        exact_energies=exact.energies[ie],
        effective_energies=effective.energies[if_],
        normalization=norm,
        ridge_lines=lines,
    )


@dataclass
class ProbabilityDefect:
    delta_p: float
    C_N: float                    # delta_p / (J dt)^4
    flagged: list                 # (N', |<N'|dH|N>|^2) with near-degenerate denominators


def probability_defect(N: int, exact: SpectrumReport, deltaH: DenseOperator,
                       dt: float | None = None) -> ProbabilityDefect:
    """Second-order defect of eigenstate N under the perturbation deltaH:

        dP = sum_{N' != N} |<N'|dH|N>|^2 / (E_N - E_N')^2.

    Near-degenerate denominators (|E_N - E_N'| < 1e-10 J) are excluded from
    the sum and reported separately.  C_N = dP/(J dt)^4 uses dt from the
    argument or from deltaH.meta.
    """
    E = exact.energies
    V = exact.states
    J = exact.chain.J if exact.chain is not None else 1.0
    amps = V.conj().T @ (deltaH.entries @ V[:, N])
    dp = 0.0
    flagged = []
    for Np in range(E.size):
        if Np == N:
            continue
        dE = E[N] - E[Np]
        w = float(np.abs(amps[Np]) ** 2)
        if abs(dE) < 1e-10 * J:
            flagged.append((Np, w))
            continue
        dp += w / dE**2
    if dt is None:
        dt = deltaH.meta.get("dt", 0.0)
    C_N = dp / (J * dt) ** 4 if dt else float("nan")
    return ProbabilityDefect(delta_p=dp, C_N=C_N, flagged=flagged)


@dataclass
class RigorousBound:
    one_step: float
    accumulated: float
    t_bound: float


def rigorous_bound(n: int, Lambda: float, dt: float, t: float, C: float = 0.25) -> RigorousBound:
    """Rigorous upper bounds on the second-order product-formula error.

    One step:  |U(dt) - U_appr(dt)| <= C x^3/n + x^4/12 e^x,  x = 3 n Lambda dt
    (C = 1/4, the upper value of the known constant).  Accumulated over
    t/dt steps; t_bound = 1/dE with the eigenvalue-shift bound
    dE = 3 C Lambda x^2, the time at which the accumulated bound reaches
    order unity.
    """
    if n <= 0 or Lambda <= 0:
        raise ValueError("n and Lambda must be positive")
    if dt == 0:
        return RigorousBound(0.0, 0.0, float("inf"))
    x = 3.0 * n * Lambda * dt
    one = C * x**3 / n + x**4 / 12.0 * np.exp(x)
    acc = (t / dt) * one
    dE = 3.0 * C * Lambda * x**2
    return RigorousBound(float(one), float(acc), float(1.0 / dE))


def lambda_scale(spec: ChainSpec) -> float:
    """Maximum magnitude of local terms: max{|h|, J/2}."""
    return float(max(np.abs(spec.h).max(), spec.J / 2.0))


@dataclass
class WannierStark:
    energies: np.ndarray          # ladder alpha*(N), interior levels
    amplitudes: Callable[[int], np.ndarray]
    spacing: float


def wannier_stark_oracle(alpha: float, spec: ChainSpec) -> WannierStark:
    """Analytic eigensystem of the linear-potential chain h_n = alpha*n.

    Bulk eigenfunctions are Bessel functions, <n|N> = J_{n-N}(J/alpha),
    and the spectrum is the equally spaced ladder E_N = alpha*N (spacing
    alpha per level).  Valid away from the chain ends.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    z = spec.J / alpha
    sites = np.arange(1, spec.L + 1)

    def amplitudes(N: int) -> np.ndarray:
        v = jv(sites - N, z)
        return v / np.linalg.norm(v)

    energies = alpha * sites.astype(float)
    return WannierStark(energies=energies, amplitudes=amplitudes, spacing=float(alpha))
