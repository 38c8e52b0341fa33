"""Dense complex operators with a unitarity/hermiticity tag.

All evolution operators, Hamiltonians and eigenvector stacks are carried
around as plain L x L complex arrays wrapped in :class:`DenseOperator`.
The tag encodes which structural invariant the matrix is supposed to
satisfy and `check()` enforces it:

    unitary:    max|U^dag U - 1| < 1e-10
    hermitian:  max|A - A^dag|   < 1e-12
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNITARY_TOL = 1e-10
HERMITIAN_TOL = 1e-12


@dataclass
class DenseOperator:
    entries: np.ndarray
    tag: str = "general"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        M = np.asarray(self.entries, dtype=complex)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {M.shape}")
        if self.tag not in ("unitary", "hermitian", "general"):
            raise ValueError(f"unknown tag {self.tag!r}")
        self.entries = M
        self.check()

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def check(self) -> None:
        if self.tag == "unitary":
            defect = np.abs(self.entries.conj().T @ self.entries - np.eye(self.dim)).max()
            if defect >= UNITARY_TOL:
                raise ValueError(f"unitarity defect {defect:.3e} exceeds {UNITARY_TOL}")
        elif self.tag == "hermitian":
            defect = np.abs(self.entries - self.entries.conj().T).max()
            if defect >= HERMITIAN_TOL:
                raise ValueError(f"hermiticity defect {defect:.3e} exceeds {HERMITIAN_TOL}")

    def dagger(self) -> "DenseOperator":
        return DenseOperator(self.entries.conj().T, tag=self.tag)


_HEADER = "trotterchain-matrix v1"


def save_operator(op: DenseOperator, path) -> None:
    """Text serialization: header line `trotterchain-matrix v1 dim=<L> tag=<tag>`
    followed by dim rows of interleaved `re im` pairs (row-major)."""
    with open(path, "w") as fh:
        fh.write(f"{_HEADER} dim={op.dim} tag={op.tag}\n")
        for row in op.entries:
            fields = []
            for z in row:
                fields.append(f"{z.real:.17g}")
                fields.append(f"{z.imag:.17g}")
            fh.write(" ".join(fields) + "\n")


def load_operator(path) -> DenseOperator:
    with open(path) as fh:
        header = fh.readline().split()
        if " ".join(header[:2]) != _HEADER:
            raise ValueError("not a trotterchain matrix file")
        info = dict(kv.split("=") for kv in header[2:])
        dim = int(info["dim"])
        tag = info["tag"]
        data = np.loadtxt(fh, dtype=float, ndmin=2)
    if data.shape != (dim, 2 * dim):
        raise ValueError(f"matrix body has shape {data.shape}, expected ({dim}, {2 * dim})")
    return DenseOperator(data[:, 0::2] + 1j * data[:, 1::2], tag=tag)
