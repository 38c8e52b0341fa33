"""Hot evolution kernels: compiled extension with pure-python fallback.

A Trotter step is a short sequence of *layers*; each layer multiplies the
state by per-site phases and/or applies 2x2 rotations to disjoint site
pairs (bonds).  Long evolutions (10^4..10^5 steps) spend essentially all
their time in this loop, so it is implemented twice:

  - ``_evolve_cy``  : Cython extension (built by setup.py),
  - ``_evolve_py``  : vectorized numpy fallback,

with the backend selected at import time.  ``benchmarks/bench_kernels.py``
compares the two.  Both operate on the same packed layer program and agree
to floating-point roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

try:  # pragma: no cover - exercised indirectly via BACKEND
    from . import _evolve_cy as _impl

    BACKEND = "cython"
except ImportError:  # pragma: no cover
    from . import _evolve_py as _impl

    BACKEND = "python"


@dataclass
class Layer:
    """One layer of a Trotter step: optional site phases, optional bonds.

    The phase part multiplies psi[i] by z[i]; the bond part applies the
    2x2 matrix mats[j] to the amplitude pair (offset+2j, offset+2j+1).
    Phase and bond parts always act on disjoint sites here, so their
    order inside the layer is immaterial.
    """

    L: int
    z: Optional[np.ndarray] = None          # (L,) complex or None
    offset: int = 0
    mats: Optional[np.ndarray] = None       # (nb, 2, 2) complex or None

    def merged_with(self, other: "Layer") -> "Layer":
        """Layer representing `self` followed by `other` (same support)."""
        if (self.z is None) != (other.z is None) or (self.mats is None) != (other.mats is None):
            raise ValueError("can only merge layers with identical structure")
        z = None if self.z is None else self.z * other.z
        mats = None
        if self.mats is not None:
            if self.offset != other.offset or self.mats.shape != other.mats.shape:
                raise ValueError("bond layouts differ")
            mats = np.einsum("nij,njk->nik", other.mats, self.mats)
        return Layer(self.L, z=z, offset=self.offset, mats=mats)

    def inverse(self) -> "Layer":
        z = None if self.z is None else self.z.conj()
        mats = None if self.mats is None else self.mats.conj().transpose(0, 2, 1).copy()
        return Layer(self.L, z=z, offset=self.offset, mats=mats)

    def dense(self) -> np.ndarray:
        """Dense matrix of the layer (used by the analysis path)."""
        M = np.eye(self.L, dtype=complex)
        if self.mats is not None:
            for j, m in enumerate(self.mats):
                i = self.offset + 2 * j
                M[i : i + 2, i : i + 2] = m
        if self.z is not None:
            M = self.z[:, None] * M
        return M


def pack_program(layers: Sequence[Layer], L: int):
    """Pack a layer list into flat arrays digestible by both kernels."""
    n = len(layers)
    maxnb = max((0 if ly.mats is None else ly.mats.shape[0]) for ly in layers) if n else 0
    kinds = np.zeros(n, dtype=np.int32)
    zbuf = np.ones((n, L), dtype=complex)
    offs = np.zeros(n, dtype=np.int32)
    nbs = np.zeros(n, dtype=np.int32)
    mats = np.zeros((n, max(maxnb, 1), 4), dtype=complex)
    for i, ly in enumerate(layers):
        if ly.z is not None:
            kinds[i] |= 1
            zbuf[i] = ly.z
        if ly.mats is not None:
            kinds[i] |= 2
            nb = ly.mats.shape[0]
            offs[i] = ly.offset
            nbs[i] = nb
            mats[i, :nb] = ly.mats.reshape(nb, 4)
    return (kinds, zbuf, offs, nbs, mats)


_EMPTY_CACHE = {}


def empty_program(L: int):
    if L not in _EMPTY_CACHE:
        _EMPTY_CACHE[L] = pack_program([], L)
    return _EMPTY_CACHE[L]


def run_program(psi, head, body, tail, rec_inv, M, dM, half, occ):
    """Apply `head` once, then `body` M times, then `tail` once, in place.

    After body repetition k (1-based, k % dM == 0, k < M) the occupancy
    sum_{i<half} |psi_i|^2 is recorded into occ[k/dM - 1]; when `rec_inv`
    is non-empty it is applied to a scratch copy first (it undoes the
    boundary-layer merge so the recorded value refers to the true state).
    Pass an empty occ array to skip recording.
    """
    return _impl.run_program(psi, head, body, tail, rec_inv, M, dM, half, occ)
