"""Pure-python (numpy) twin of the compiled evolution kernel."""

from __future__ import annotations

import numpy as np


def _apply(psi: np.ndarray, prog) -> None:
    kinds, zbuf, offs, nbs, mats = prog
    for i in range(kinds.shape[0]):
        k = kinds[i]
        if k & 1:
            psi *= zbuf[i]
        if k & 2:
            nb = int(nbs[i])
            o = int(offs[i])
            m = mats[i, :nb]
            s0 = psi[o : o + 2 * nb : 2].copy()
            s1 = psi[o + 1 : o + 1 + 2 * nb : 2]
            psi[o : o + 2 * nb : 2] = m[:, 0] * s0 + m[:, 1] * s1
            psi[o + 1 : o + 1 + 2 * nb : 2] = m[:, 2] * s0 + m[:, 3] * s1


def run_program(psi, head, body, tail, rec_inv, M, dM, half, occ):
    psi = np.asarray(psi)
    record = occ.shape[0] > 0
    _apply(psi, head)
    for step in range(1, M + 1):
        _apply(psi, body)
        if record and step % dM == 0 and step < M:
            if rec_inv[0].shape[0] > 0:
                tmp = psi.copy()
                _apply(tmp, rec_inv)
            else:
                tmp = psi
            left = tmp[:half]
            occ[step // dM - 1] = float(np.real(np.vdot(left, left)))
    _apply(psi, tail)
    return psi
