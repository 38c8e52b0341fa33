"""Second-order Trotter circuits for the hopping chain.

One Trotter step of length dt approximates exp(-i dt H) by the symmetric
(palindromic) product

    U(dt) = e^{-i A_n dt/2} ... e^{-i A_1 dt/2} * e^{-i A_1 dt/2} ... e^{-i A_n dt/2}

over an ordered operator list (A_1, ..., A_n).  Three inequivalent
groupings of H = K_even + K_odd + P are supported (ordering lists run
innermost-first):

    "kkp"       : (K_even, K_odd, P)
    "kpk"       : (K_even, P, K_odd)        -- the experiment's circuit
    "split"     : (K_even + alpha*P, K_odd + (1-alpha)*P)

K_odd collects the bonds (k, k+1) starting at odd sites k (1-based), so
its first bond couples sites 1-2; K_even starts at site 2.  Every factor
exponentiates exactly: bond terms as closed-form 2x2 rotations, diagonal
terms as phases, so each step is unitary to machine precision for any dt.

The exact generator of one step, H_eff = (i/dt) Log U(dt), is extracted
by eigendecomposition with eigenphases folded to (-pi, pi]; its leading
O(dt^2) deviation from H follows the nested-commutator recursion
implemented in :func:`bch_defect`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from . import kernels
from .chain import ChainSpec, hamiltonian_matrix
from .operators import DenseOperator

ORDERINGS = ("kkp", "kpk", "split")


@dataclass(frozen=True)
class TrotterPlan:
    """Step length, operator ordering and (for "split") the potential weight."""

    dt: float
    ordering: str = "kpk"
    alpha: float = 0.5

    def __post_init__(self):
        if self.dt < 0 or not np.isfinite(self.dt):
            raise ValueError("dt must be a nonnegative finite number")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}")
        if self.ordering == "split" and not (0.0 <= self.alpha <= 1.0):
            raise ValueError("split weight alpha must lie in [0, 1]")


def kinetic_parts(spec: ChainSpec) -> Tuple[DenseOperator, DenseOperator, DenseOperator]:
    """Split H into (K_even, K_odd, P); the three parts sum to H exactly."""
    L = spec.L
    K_even = np.zeros((L, L), dtype=complex)
    K_odd = np.zeros((L, L), dtype=complex)
    for k in range(1, L):  # bond (k, k+1), 1-based site k
        tgt = K_odd if k % 2 == 1 else K_even
        tgt[k - 1, k] = tgt[k, k - 1] = -0.5 * spec.J
    P = np.diag(spec.h.astype(complex))
    return (
        DenseOperator(K_even, tag="hermitian"),
        DenseOperator(K_odd, tag="hermitian"),
        DenseOperator(P, tag="hermitian"),
    )


def _bond_exponential(theta: float, J: float, d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
    """exp(-i theta M) for the 2x2 blocks M = [[d1, -J/2], [-J/2, d2]].

    d1, d2 are arrays over bonds; returns (nb, 2, 2)."""
    m0 = 0.5 * (d1 + d2)
    mz = 0.5 * (d1 - d2)
    mx = -0.5 * J * np.ones_like(d1)
    r = np.hypot(mx, mz)
    out = np.zeros(d1.shape + (2, 2), dtype=complex)
    phase = np.exp(-1j * theta * m0)
    with np.errstate(invalid="ignore", divide="ignore"):
        nx = np.where(r > 0, mx / np.where(r > 0, r, 1.0), 0.0)
        nz = np.where(r > 0, mz / np.where(r > 0, r, 1.0), 0.0)
    c = np.cos(theta * r)
    s = np.sin(theta * r)
    out[:, 0, 0] = phase * (c - 1j * s * nz)
    out[:, 1, 1] = phase * (c + 1j * s * nz)
    out[:, 0, 1] = phase * (-1j * s * nx)
    out[:, 1, 0] = phase * (-1j * s * nx)
    return out


def _operator_layers(spec: ChainSpec, name: str, theta: float, alpha: float) -> List[kernels.Layer]:
    """Layers of exp(-i theta A) for one operator A of the ordering list."""
    L = spec.L
    h = spec.h
    if name == "P":
        return [kernels.Layer(L, z=np.exp(-1j * theta * h))]
    parity = 1 if name.startswith("Ke") else 0  # python offset of first bond
    starts = np.arange(parity, L - 1, 2)
    weight = 0.0
    if name.endswith("+aP"):
        weight = alpha if name.startswith("Ke") else 1.0 - alpha
    d1 = weight * h[starts]
    d2 = weight * h[starts + 1]
    mats = _bond_exponential(theta, spec.J, d1, d2)
    z = None
    if weight != 0.0:
        covered = np.zeros(L, dtype=bool)
        covered[starts] = True
        covered[starts + 1] = True
        z = np.where(covered, 1.0 + 0j, np.exp(-1j * theta * weight * h))
    layers = []
    if z is not None:
        return [kernels.Layer(L, z=z, offset=int(starts[0]) if starts.size else 0, mats=mats)]
    if starts.size:
        layers.append(kernels.Layer(L, offset=int(starts[0]), mats=mats))
    return layers


def _ordering_list(plan: TrotterPlan) -> List[str]:
    if plan.ordering == "kkp":
        return ["Ke", "Ko", "P"]
    if plan.ordering == "kpk":
        return ["Ke", "P", "Ko"]
    return ["Ke+aP", "Ko+aP"]


def step_layers(spec: ChainSpec, plan: TrotterPlan) -> List[kernels.Layer]:
    """Layer sequence of one step, in application order (palindromic)."""
    ops = _ordering_list(plan)
    half_out = []
    for name in ops[1:]:
        half_out.extend(_operator_layers(spec, name, 0.5 * plan.dt, plan.alpha))
    inner = _operator_layers(spec, ops[0], plan.dt, plan.alpha)
    return half_out[::-1] + inner + half_out


def step_unitary(spec: ChainSpec, plan: TrotterPlan) -> DenseOperator:
    """Dense one-step unitary, exactly the palindromic product of exponentials."""
    U = np.eye(spec.L, dtype=complex)
    for layer in step_layers(spec, plan):
        U = layer.dense() @ U
    op = DenseOperator(U, tag="unitary")
    op.meta["layers"] = step_layers(spec, plan)
    op.meta["dt"] = plan.dt
    op.meta["ordering"] = plan.ordering
    return op


def _compiled_program(layers: Sequence[kernels.Layer], L: int):
    """Merge the identical first/last half-layers of consecutive steps.

    One step is B, R..., B (palindromic); M steps equal
    B (R B^2)^(M-1) R B, so the loop body becomes [R..., B^2] with a single
    leading B and a trailing B^{-1} correction.  The recorded state between
    steps then differs from the true one by a factor B, undone on a scratch
    copy (skipped when B is diagonal: occupancies are phase-insensitive).
    """
    B = layers[0]
    body = list(layers[1:-1]) + [B.merged_with(B)]
    head = kernels.pack_program([B], L)
    tail = kernels.pack_program([B.inverse()], L)
    if B.mats is None:
        rec = kernels.empty_program(L)
    else:
        rec = kernels.pack_program([B.inverse()], L)
    return head, kernels.pack_program(body, L), tail, rec


def evolve(state: np.ndarray, U: DenseOperator, steps: int) -> np.ndarray:
    """Apply U^steps to a normalized state.

    When U carries its gate decomposition (any unitary from
    :func:`step_unitary`) the evolution runs through the O(L)-per-layer
    kernel with adjacent half-layers of consecutive steps merged; otherwise
    the dense matrix is applied repeatedly.
    """
    psi = np.asarray(state, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-8:
        raise ValueError("state must be normalized")
    psi = psi.copy()
    if steps == 0:
        return psi
    layers = U.meta.get("layers")
    if layers is None:
        for _ in range(steps):
            psi = U.entries @ psi
        return psi
    L = psi.shape[0]
    head, body, tail, rec = _compiled_program(layers, L)
    occ = np.empty(0, dtype=float)
    kernels.run_program(psi, head, body, tail, rec, int(steps), int(steps) + 1, 0, occ)
    return psi


def evolve_trace(state: np.ndarray, U: DenseOperator, M: int, dM: int, half: int) -> Tuple[np.ndarray, np.ndarray]:
    """Evolve M steps recording sum_{i<half} |psi_i|^2 every dM steps.

    Returns (occupancies at steps 0, dM, ..., M-dM; final state)."""
    if M % dM != 0:
        raise ValueError("M must be divisible by dM")
    psi = np.asarray(state, dtype=complex).copy()
    layers = U.meta.get("layers")
    if layers is None:
        raise ValueError("gate-path evolution needs a unitary built by step_unitary")
    L = psi.shape[0]
    head, body, tail, rec = _compiled_program(layers, L)
    nt = M // dM
    occ = np.empty(nt, dtype=float)
    occ[0] = float(np.real(np.vdot(psi[:half], psi[:half])))
    kernels.run_program(psi, head, body, tail, rec, int(M), int(dM), int(half), occ[1:])
    return occ, psi


def effective_hamiltonian(U: DenseOperator, dt: float, spectral_width: float | None = None) -> DenseOperator:
    """Exact generator H_eff = (i/dt) Log U via eigendecomposition.

    Eigenphases are taken in (-pi, pi] (energies in (-pi/dt, pi/dt], with
    the exact boundary phase assigned the positive branch).  Eigenvectors
    inside a degenerate phase cluster (gap < 1e-12) are re-orthonormalized
    so the reassembled matrix stays hermitian.  meta["folded"] records
    whether `spectral_width` (e.g. 2J + P of the target) exceeds the
    Floquet window 2*pi/dt; phase pairs straddling the branch cut closer
    than 1e-12 raise a degenerate-branch warning and are counted in
    meta["branch_warnings"].
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    lam, V = np.linalg.eig(U.entries)
    phases = np.angle(lam)  # (-pi, pi]
    order = np.argsort(phases)
    phases = phases[order]
    V = V[:, order]

    # orthonormalize within degenerate clusters
    gaps = np.diff(phases)
    boundaries = [0] + [i + 1 for i, g in enumerate(gaps) if g >= 1e-12] + [len(phases)]
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        if b - a > 1:
            Q, _ = np.linalg.qr(V[:, a:b])
            V[:, a:b] = Q
    # lone vectors can still be slightly non-orthogonal after eig; polish
    # the full frame once (exact for already-orthonormal columns)
    Q, R = np.linalg.qr(V)
    V = Q * np.sign(np.diag(R))

    branch_warnings = 0
    if phases.size >= 2 and (np.pi - phases[-1]) < 1e-12 and (phases[0] + np.pi) < 1e-12:
        branch_warnings += 1
        warnings.warn(
            "eigenphase pair closer than 1e-12 across the +/-pi branch cut; "
            "energy assignment is ambiguous by 2*pi/dt",
            RuntimeWarning,
        )

    energies = -phases / dt
    energies[phases >= np.pi * (1 - 1e-15)] = np.pi / dt  # boundary -> positive branch

    H = (V * energies) @ V.conj().T
    H = 0.5 * (H + H.conj().T)
    op = DenseOperator(H, tag="hermitian")
    op.meta["dt"] = dt
    op.meta["branch_warnings"] = branch_warnings
    if spectral_width is not None:
        op.meta["folded"] = bool(spectral_width > 2 * np.pi / dt)
    return op


def effective_hamiltonian_for(spec: ChainSpec, plan: TrotterPlan) -> DenseOperator:
    """Convenience: H_eff of one Trotter step for (spec, plan)."""
    U = step_unitary(spec, plan)
    width = 2 * spec.J + spec.potential_span
    op = effective_hamiltonian(U, plan.dt, spectral_width=width)
    op.meta["ordering"] = plan.ordering
    return op


def ordering_operators(spec: ChainSpec, plan: TrotterPlan) -> List[DenseOperator]:
    """The ordered hermitian list (A_1, ..., A_n) entering the step."""
    K_even, K_odd, P = kinetic_parts(spec)
    if plan.ordering == "kkp":
        return [K_even, K_odd, P]
    if plan.ordering == "kpk":
        return [K_even, P, K_odd]
    a = plan.alpha
    A1 = DenseOperator(K_even.entries + a * P.entries, tag="hermitian")
    A2 = DenseOperator(K_odd.entries + (1 - a) * P.entries, tag="hermitian")
    return [A1, A2]


def bch_defect(operators: Sequence[DenseOperator]) -> DenseOperator:
    """Leading-order defect D with H_eff = sum A_k + dt^2 D + O(dt^4).

    Recursion over the ordered list:  D_0 = 0 and

        D_{k+1} - D_k = -1/12 { [H_k,[H_k,A_{k+1}]] - 1/2 [A_{k+1},[A_{k+1},H_k]] },

    where H_k = A_1 + ... + A_k.
    """
    if not operators:
        raise ValueError("operator list must be nonempty")
    dims = {op.dim for op in operators}
    if len(dims) != 1:
        raise ValueError("operators must share one dimension")
    L = dims.pop()
    D = np.zeros((L, L), dtype=complex)
    Hk = np.zeros((L, L), dtype=complex)

    def comm(X, Y):
        return X @ Y - Y @ X

    for op in operators:
        A = op.entries
        D -= (comm(Hk, comm(Hk, A)) - 0.5 * comm(A, comm(A, Hk))) / 12.0
        Hk = Hk + A
    return DenseOperator(D, tag="hermitian")


def locality_profile(H_eff: DenseOperator, fit_min: int = 4, floor: float = 1e-14):
    """Decay of matrix elements with distance: m_k = max_n |H[n, n+k]|.

    Returns (k values, m_k, fitted geometric ratio for k > 3).  The fit is a
    least-squares line through log m_k over k >= fit_min, cut off where m_k
    falls below `floor` (numerical noise).
    """
    if H_eff.tag != "hermitian":
        raise ValueError("locality profile expects a hermitian operator")
    M = np.abs(H_eff.entries)
    L = H_eff.dim
    ks = np.arange(L)
    mk = np.array([M.diagonal(k).max() if k < L else 0.0 for k in ks])
    sel = (ks >= fit_min) & (mk > floor)
    if sel.sum() >= 2:
        coef = np.polyfit(ks[sel], np.log(mk[sel]), 1)
        ratio = float(np.exp(coef[0]))
    else:
        ratio = float("nan")
    return ks, mk, ratio
