"""1D hopping chain with a position-dependent potential.

The single-particle Hamiltonian on an open chain of L sites is

    H = sum_k h_k |k><k|  -  (J/2) sum_k ( |k><k+1| + |k+1><k| ),

with sites numbered 1..L.  Everything downstream (Trotter circuits,
effective Hamiltonians, semiclassics) is built on top of this matrix and
on the classical symbol obtained from its Wigner transform,

    H(x, p) = -J cos p + h(x),

where h(x) interpolates the per-site potential smoothly between sites.

Units: energies are quoted in units of J (J=1 by default) and times in
units of 1/J; the lattice constant is a=1, so positions are measured in
site-index units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline


@dataclass(frozen=True)
class PotentialFamily:
    """A named potential profile evaluated on demand for a given L.

    Supported kinds:
      - "cosine":       h_n = P * cos(4*pi*(n-1)/(L-1))
      - "linear":       h_n = alpha * n            (Wannier-Stark ladder)
      - "experimental": engineered double well, see :func:`experimental_profile`
      - "custom":       explicit per-site values
    """

    kind: str
    params: dict = field(default_factory=dict)

    def evaluate(self, L: int) -> np.ndarray:
        if self.kind == "cosine":
            P = float(self.params["P"])
            n = np.arange(1, L + 1, dtype=float)
            return P * np.cos(4.0 * np.pi * (n - 1.0) / (L - 1.0))
        if self.kind == "linear":
            alpha = float(self.params["alpha"])
            return alpha * np.arange(1, L + 1, dtype=float)
        if self.kind == "experimental":
            return experimental_profile(
                L,
                P=float(self.params["P"]),
                w=float(self.params["w"]),
                dn=float(self.params.get("dn", 0.0)),
                alpha=float(self.params.get("alpha", 0.0)),
            )
        if self.kind == "custom":
            values = np.asarray(self.params["values"], dtype=float)
            if values.size != L:
                raise ValueError(f"custom potential has {values.size} values, chain has L={L}")
            return values.copy()
        raise ValueError(f"unknown potential kind {self.kind!r}")


def cosine_potential(P: float) -> PotentialFamily:
    return PotentialFamily("cosine", {"P": P})


def linear_potential(alpha: float) -> PotentialFamily:
    return PotentialFamily("linear", {"alpha": alpha})


def experimental_potential(P: float, w: float, dn: float = 0.0, alpha: float = 0.0) -> PotentialFamily:
    return PotentialFamily("experimental", {"P": P, "w": w, "dn": dn, "alpha": alpha})


def custom_potential(values) -> PotentialFamily:
    return PotentialFamily("custom", {"values": np.asarray(values, dtype=float)})


def custom_potential_from_file(path) -> PotentialFamily:
    """Load a custom potential from a one-column text file (one h_n per line)."""
    values = np.loadtxt(path, dtype=float, ndmin=1)
    return custom_potential(values)


def experimental_profile(L: int, P: float, w: float, dn: float = 0.0, alpha: float = 0.0) -> np.ndarray:
    """Engineered double-well profile used in the tunneling experiment.

        h_n = P f(n, dn)/f(n0, dn) + alpha*(n - (L+1)/2)/L,
        f(n, dn) = exp{ -1/2 ((n - dn - (L+1)/2)/w)^4 - (L/2)/sqrt((n-1)(L-n)) }

    with n0 = floor((L+1)/2).  The second term in the exponent forces
    h -> 0 at the chain ends; at n = 1 and n = L the 0/0 expression is
    replaced by its analytic limit f = 0.  dn shifts the central barrier
    (breaking mirror symmetry), alpha tilts the chain to re-tune an
    accidental resonance.
    """
    if w <= 0:
        raise ValueError("w must be positive")
    if L < 4:
        raise ValueError("L must be at least 4")
    n = np.arange(1, L + 1, dtype=float)
    mid = (L + 1) / 2.0

    def f(nv: np.ndarray, shift: float) -> np.ndarray:
        out = np.zeros_like(nv)
        interior = (nv > 1.0) & (nv < float(L))
        ni = nv[interior]
        edge = (L / 2.0) / np.sqrt((ni - 1.0) * (L - ni))
        out[interior] = np.exp(-0.5 * ((ni - shift - mid) / w) ** 4 - edge)
        return out

    n0 = float(np.floor((L + 1) / 2))
    f_n = f(n, dn)
    f_n0 = f(np.array([n0]), dn)[0]
    if f_n0 == 0.0:
        raise ValueError("normalization site sits at the chain edge; increase L")
    return P * f_n / f_n0 + alpha * (n - mid) / L


@dataclass(frozen=True)
class ChainSpec:
    """Raw data of the target Hamiltonian: site count, hopping, potential."""

    L: int
    J: float
    h: np.ndarray
    a: float = 1.0

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("chain needs at least 2 sites")
        # J = 0 is admitted as the degenerate hopping-free edge case
        if not np.isfinite(self.J) or self.J < 0:
            raise ValueError("J must be nonnegative and finite")
        h = np.asarray(self.h, dtype=float)
        if h.shape != (self.L,):
            raise ValueError(f"potential has shape {h.shape}, expected ({self.L},)")
        if not np.all(np.isfinite(h)):
            raise ValueError("potential values must be finite")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "h", self.h.copy())
        self.h.setflags(write=False)

    @property
    def potential_span(self) -> float:
        """P = max h - min h, the magnitude of the potential term."""
        return float(self.h.max() - self.h.min())

    def smooth_potential(self) -> Callable[[np.ndarray], np.ndarray]:
        """Cubic interpolation of (n, h_n); also used outside [1, L] by
        cubic extrapolation so that integrals can reach the hard walls at
        x = 0 and x = L + 1."""
        return CubicSpline(np.arange(1, self.L + 1, dtype=float), self.h)


def build_chain(L: int, J: float, family: PotentialFamily) -> ChainSpec:
    """Evaluate a potential family on L sites and package the chain data."""
    return ChainSpec(L=int(L), J=float(J), h=family.evaluate(int(L)))


def hamiltonian_matrix(spec: ChainSpec):
    """Real symmetric L x L matrix of the chain Hamiltonian (open ends)."""
    from .operators import DenseOperator

    H = np.diag(spec.h.astype(float)).astype(complex)
    off = -0.5 * spec.J * np.ones(spec.L - 1)
    H += np.diag(off, 1) + np.diag(off, -1)
    return DenseOperator(H, tag="hermitian")


def wigner_transform(spec: ChainSpec, x, p):
    """Classical symbol -J cos(p) + h(x); accepts complex momentum."""
    h = spec.smooth_potential()
    return -spec.J * np.cos(p) + h(x)
