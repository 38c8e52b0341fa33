"""Discrete WKB machinery for the hopping chain.

Classical symbols handled (all with the smooth interpolated potential
h(x), lattice constant a = 1):

    bare:       H(x,p) = -J cos p + h(x)
    corrected:  H(x,p) = -J cos p + J (J dt)^2/24 cos p sin^2 p + h(x)
    large_step: H(x,p) = -(2/dt) arcsin( sin(J dt/2) cos p ) + h(x)

In every case the classical equation of motion can be written as
cos p = R(E, x) with

    bare/corrected turning structure:  R = (h - E)/J,
    large_step:                        R = -sin((E - h) dt/2) / sin(J dt/2),

so allowed regions are |R| <= 1, standard turning points (p = 0) sit at
R = +1 and anomalous ones (p = +/-pi) at R = -1.  Forbidden-region momenta
take the branch continuous with the adjacent allowed region: p = i|p| off
a standard point and p = pi + i|p| off an anomalous one.

Bound states obey the quantization rule

    S12(E) = pi (N + 1/2) + theta_2 - theta_1,
    theta_i = 0 (standard)  or  -pi/2 + pi x_i (anomalous),

where the anomalous phase depends on the exact fractional position of the
turning point between sites.  Wells terminated by the hard wall of the
open chain (psi_0 = psi_{L+1} = 0) instead satisfy

    S(E) = integral_wall^{x_t} p dx = pi (n - 1/4),  n = 1, 2, ...

Tunneling amplitudes and decay rates follow from the under-barrier action
S_B = int |Im p| dx:

    eta   = sqrt(Delta_L Delta_R)/(2 pi) exp(-S_B),
    Gamma = Delta/(2 pi) exp(-2 S_B),

and the Trotterization correction enters through first-order shifts of
the actions, dS = -int dH/v dx with dH = J (J dt)^2 / 24 cos p sin^2 p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .chain import ChainSpec

QUAD_OPTS = dict(epsabs=1e-10, epsrel=1e-10, limit=200)
KINDS = ("bare", "corrected", "large_step")


@dataclass(frozen=True)
class PhaseSpaceModel:
    kind: str
    h: Callable[[float], float]
    J: float
    dt: float = 0.0
    x_lo: float = 0.0
    x_hi: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.kind != "bare" and self.dt <= 0:
            raise ValueError(f"{self.kind} model needs dt > 0")
        if self.kind == "large_step" and self.J * self.dt >= 2 * np.pi:
            raise ValueError("large_step model requires J dt < 2 pi")

    @property
    def kappa(self) -> float:
        """Dimensionless strength (J dt)^2 / 24 of the leading correction."""
        return (self.J * self.dt) ** 2 / 24.0

    def kinetic_min(self) -> float:
        """Bottom of the kinetic band, T(p=0)."""
        if self.kind == "large_step":
            g = 0.5 * self.J * self.dt
            return -(2.0 / self.dt) * math.asin(math.sin(g))
        return -self.J


def phase_space_model(spec: ChainSpec, kind: str = "bare", dt: float = 0.0) -> PhaseSpaceModel:
    """Classical model of a chain; positions run over [0, L+1] (hard walls)."""
    return PhaseSpaceModel(kind=kind, h=spec.smooth_potential(), J=spec.J, dt=dt,
                           x_lo=0.0, x_hi=spec.L + 1.0)


@dataclass(frozen=True)
class TurningPoint:
    x: float
    kind: str        # "standard" (p=0) or "anomalous" (p=+/-pi)
    delta: float     # fractional position between sites, in [0, 1)

    @property
    def quantization_phase(self) -> float:
        """theta_i entering the quantization rule."""
        if self.kind == "standard":
            return 0.0
        return -0.5 * np.pi + np.pi * self.x


@dataclass
class AllowedInterval:
    x1: float
    x2: float
    left: Optional[TurningPoint]    # None = hard wall
    right: Optional[TurningPoint]


@dataclass
class LevelPrediction:
    N: int
    E: float
    spacing: float                 # Delta = 2 pi / T12
    S12: float
    T12: float
    x1: float
    x2: float
    boundary: str
    n_cl: float = 0.0              # sites in the allowed region
    left_kind: Optional[str] = None
    right_kind: Optional[str] = None
    S_B: float = float("nan")
    eta: float = float("nan")
    Gamma: float = float("nan")
    shifts: Optional["PerturbationShifts"] = None


def _R(model: PhaseSpaceModel, E: float, x) -> np.ndarray:
    h = model.h(x)
    if model.kind == "large_step":
        g = 0.5 * model.J * model.dt
        return -np.sin(0.5 * (E - h) * model.dt) / np.sin(g)
    return (h - E) / model.J


def _corrected_kin(model: PhaseSpaceModel, p):
    """Kinetic symbol of the corrected model, valid for complex p."""
    k = model.kappa
    return -model.J * np.cos(p) * (1.0 - k * np.sin(p) ** 2)


def classical_momentum(model: PhaseSpaceModel, E: float, x: float) -> complex:
    """Momentum p(E, x) with Re p in [0, pi] and Im p >= 0.

    Real in allowed regions; i|p| in forbidden regions adjacent to a
    standard turning point and pi + i|p| adjacent to an anomalous one.
    """
    if model.kind == "corrected":
        return _corrected_momentum(model, E, x)
    R = float(_R(model, E, x))
    if -1.0 <= R <= 1.0:
        return complex(math.acos(R))
    if R > 1.0:
        return complex(0.0, math.acosh(R))
    return complex(math.pi, math.acosh(-R))


def _corrected_momentum(model: PhaseSpaceModel, E: float, x: float) -> complex:
    t = E - float(model.h(x))          # required kinetic energy
    J, k = model.J, model.kappa
    if abs(t) <= J:
        f = lambda p: _corrected_kin(model, p) - t
        return complex(brentq(f, 0.0, np.pi, xtol=1e-14, rtol=8.9e-16))
    if t < -J:                          # below band bottom: p = i q
        g = lambda q: -J * math.cosh(q) * (1.0 + k * math.sinh(q) ** 2) - t
        q_hi = math.acosh(-t / J) + 1.0
        return complex(0.0, brentq(g, 0.0, q_hi, xtol=1e-14, rtol=8.9e-16))
    g = lambda q: J * math.cosh(q) * (1.0 + k * math.sinh(q) ** 2) - t
    q_hi = math.acosh(t / J) + 1.0
    return complex(math.pi, brentq(g, 0.0, q_hi, xtol=1e-14, rtol=8.9e-16))


def group_velocity(model: PhaseSpaceModel, E: float, x: float) -> complex:
    """dH/dp along the trajectory (complex in forbidden regions)."""
    p = classical_momentum(model, E, x)
    return group_velocity_at(model, p)


def group_velocity_at(model: PhaseSpaceModel, p) -> complex:
    if model.kind == "large_step":
        g = 0.5 * model.J * model.dt
        sg = np.sin(g)
        return (2.0 / model.dt) * sg * np.sin(p) / np.sqrt(1.0 - (sg * np.cos(p)) ** 2)
    if model.kind == "corrected":
        k = model.kappa
        return model.J * np.sin(p) * (1.0 + k * (3.0 * np.cos(p) ** 2 - 1.0))
    return model.J * np.sin(p)


def hamiltonian_value(model: PhaseSpaceModel, x: float, p) -> complex:
    """The classical symbol H(x, p) of the model."""
    h = model.h(x)
    if model.kind == "large_step":
        g = 0.5 * model.J * model.dt
        return -(2.0 / model.dt) * np.arcsin(np.sin(g) * np.cos(p) + 0j) + h
    if model.kind == "corrected":
        return _corrected_kin(model, p) + h
    return -model.J * np.cos(p) + h


def turning_points(model: PhaseSpaceModel, E: float,
                   x_lo: float | None = None, x_hi: float | None = None,
                   grid: int = 0) -> List[TurningPoint]:
    """All roots of v(x) = 0 in [x_lo, x_hi], refined to |dx| < 1e-8.

    Roots are located as solutions of R(x) = +1 (standard) and R(x) = -1
    (anomalous) bracketed on a dense grid."""
    x_lo = model.x_lo if x_lo is None else x_lo
    x_hi = model.x_hi if x_hi is None else x_hi
    if grid <= 0:
        grid = max(1000, int(16 * (x_hi - x_lo)))
    xs = np.linspace(x_lo, x_hi, grid)
    Rs = _R(model, E, xs)
    out: List[TurningPoint] = []
    for target, kind in ((1.0, "standard"), (-1.0, "anomalous")):
        f = Rs - target
        sign_change = np.nonzero(f[:-1] * f[1:] < 0)[0]
        for i in sign_change:
            x0 = brentq(lambda x: float(_R(model, E, x)) - target,
                        xs[i], xs[i + 1], xtol=1e-10)
            out.append(TurningPoint(x=float(x0), kind=kind, delta=float(x0 % 1.0)))
        for i in np.nonzero(f == 0.0)[0]:
            out.append(TurningPoint(x=float(xs[i]), kind=kind, delta=float(xs[i] % 1.0)))
    out.sort(key=lambda tp: tp.x)
    return out


def allowed_intervals(model: PhaseSpaceModel, E: float,
                      x_lo: float | None = None, x_hi: float | None = None) -> List[AllowedInterval]:
    """Maximal classically allowed intervals, with boundary metadata."""
    x_lo = model.x_lo if x_lo is None else x_lo
    x_hi = model.x_hi if x_hi is None else x_hi
    tps = turning_points(model, E, x_lo, x_hi)
    edges = [x_lo] + [tp.x for tp in tps] + [x_hi]
    bounds: List[Optional[TurningPoint]] = [None] + list(tps) + [None]
    out = []
    for i in range(len(edges) - 1):
        a, b = edges[i], edges[i + 1]
        if b - a < 1e-9:
            continue
        if abs(float(_R(model, E, 0.5 * (a + b)))) <= 1.0:
            out.append(AllowedInterval(a, b, bounds[i], bounds[i + 1]))
    return out


def forbidden_intervals(model: PhaseSpaceModel, E: float,
                        x_lo: float | None = None, x_hi: float | None = None):
    x_lo = model.x_lo if x_lo is None else x_lo
    x_hi = model.x_hi if x_hi is None else x_hi
    tps = turning_points(model, E, x_lo, x_hi)
    edges = [x_lo] + [tp.x for tp in tps] + [x_hi]
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a < 1e-9:
            continue
        if abs(float(_R(model, E, 0.5 * (a + b)))) > 1.0:
            out.append((a, b))
    return out


def _integrate(f: Callable[[float], float], a: float, b: float,
               sqrt_left: bool, sqrt_right: bool) -> float:
    """Integrate f over [a, b] with optional sqrt regularization of the
    endpoints (substitution u = sqrt(x - x_t) within each half)."""
    if b <= a:
        return 0.0
    m = 0.5 * (a + b)
    total = 0.0
    if sqrt_left:
        um = math.sqrt(m - a)
        total += quad(lambda u: 2.0 * u * f(a + u * u), 0.0, um, **QUAD_OPTS)[0]
    else:
        total += quad(f, a, m, **QUAD_OPTS)[0]
    if sqrt_right:
        um = math.sqrt(b - m)
        total += quad(lambda u: 2.0 * u * f(b - u * u), 0.0, um, **QUAD_OPTS)[0]
    else:
        total += quad(f, m, b, **QUAD_OPTS)[0]
    return total


def _is_turning(model: PhaseSpaceModel, E: float, x: float, tol: float = 1e-6) -> bool:
    return abs(abs(float(_R(model, E, x))) - 1.0) < tol


def action_allowed(model: PhaseSpaceModel, E: float, x1: float, x2: float,
                   dE: float = 1e-4) -> Tuple[float, float]:
    """Allowed-region action S12 = int p dx and classical period T12.

    T12 = 2 dS12/dE by Richardson-refined centered differences (step dE).
    Raises if the claimed interval is not classically allowed."""
    probe = classical_momentum(model, E, 0.5 * (x1 + x2))
    if abs(probe.imag) > 1e-9:
        raise ValueError("interval is not classically allowed at this energy")

    def S(Ev: float) -> float:
        f = lambda x: classical_momentum(model, Ev, x).real
        return _integrate(f, x1, x2, _is_turning(model, Ev, x1), _is_turning(model, Ev, x2))

    S12 = S(E)
    d1 = (S(E + dE) - S(E - dE)) / (2 * dE)
    d2 = (S(E + 0.5 * dE) - S(E - 0.5 * dE)) / dE
    T12 = 2.0 * (4.0 * d2 - d1) / 3.0
    return S12, T12


def _tracked_interval(model: PhaseSpaceModel, E: float, anchor: float) -> AllowedInterval:
    for iv in allowed_intervals(model, E):
        if iv.x1 <= anchor <= iv.x2:
            return iv
    raise ValueError(f"anchor x={anchor} is not classically allowed at E={E}")


@dataclass
class BarrierAction:
    S_B: float
    interior_allowed: bool         # True: an allowed pocket exists inside the
                                   # barrier; S_B covers only the first leg


def barrier_action(model: PhaseSpaceModel, E: float,
                   x_left: float, x_right: float) -> BarrierAction:
    """Under-barrier action S_B = int |Im p| dx over [x_left, x_right].

    The window should span the forbidden region between two wells (its
    endpoints are typically turning points of the adjacent wells).  If the
    window contains an interior allowed pocket (large-step regime), only
    the first forbidden leg is integrated and the result is flagged."""
    segs = forbidden_intervals(model, E, x_left, x_right)
    if not segs:
        return BarrierAction(0.0, False)
    interior = len(segs) > 1 or any(
        iv.x1 > x_left + 1e-9 and iv.x2 < x_right - 1e-9
        for iv in allowed_intervals(model, E, x_left, x_right)
    )
    a, b = segs[0]
    f = lambda x: classical_momentum(model, E, x).imag
    S_B = _integrate(f, a, b, _is_turning(model, E, a), _is_turning(model, E, b))
    return BarrierAction(S_B, interior)


# -- quantization ---------------------------------------------------------

def _phase_target(interval: AllowedInterval, boundary: str, N: int) -> float:
    """Right-hand side of the quantization rule for quantum number N."""
    if boundary == "two_turning_points":
        if interval.left is None or interval.right is None:
            raise ValueError("interval is not bounded by two turning points")
        th1 = interval.left.quantization_phase
        th2 = interval.right.quantization_phase
        return np.pi * (N + 0.5) + th2 - th1
    if boundary in ("hard_wall_left", "hard_wall_right"):
        return np.pi * (N - 0.25)
    raise ValueError(f"unknown boundary {boundary!r}")


def _well_interval(model: PhaseSpaceModel, E: float, anchor: float, boundary: str) -> AllowedInterval:
    iv = _tracked_interval(model, E, anchor)
    if boundary == "two_turning_points":
        if iv.left is None or iv.right is None:
            raise ValueError("well is not bounded by two turning points at this energy")
    elif boundary == "hard_wall_left":
        if iv.left is not None or iv.right is None or iv.right.kind != "standard":
            raise ValueError("well is not wall/standard-turning-point bounded at this energy")
    elif boundary == "hard_wall_right":
        if iv.right is not None or iv.left is None or iv.left.kind != "standard":
            raise ValueError("well is not standard-turning-point/wall bounded at this energy")
    else:
        raise ValueError(f"unknown boundary {boundary!r}")
    return iv


def _topology_signature(iv: AllowedInterval) -> tuple:
    lk = None if iv.left is None else iv.left.kind
    rk = None if iv.right is None else iv.right.kind
    return (lk, rk)


def bohr_levels(model: PhaseSpaceModel, well_anchor: float,
                boundary: str = "two_turning_points",
                e_min: float | None = None, e_max: float | None = None,
                n_scan: int = 400) -> List[LevelPrediction]:
    """Semiclassical bound states of the well containing `well_anchor`.

    The quantization condition is root-solved in energy for every integer
    quantum number with a root inside (e_min, e_max); the scan brackets
    sign changes on an energy grid and refines them by bisection, so no
    level between the brackets is missed.  Wells are tracked by their
    anchor point; energies at which the anchor turns classically forbidden
    are skipped (topology change).
    """
    if e_min is None:
        e_min = model.kinetic_min() + float(model.h(well_anchor))
    if e_max is None:
        xs = np.linspace(model.x_lo, model.x_hi, 2000)
        e_max = float(np.max(model.h(xs))) + (-model.kinetic_min())

    Es = np.linspace(e_min + 1e-9 + (e_max - e_min) * 1e-6, e_max - 1e-12, n_scan)
    vals = np.full(n_scan, np.nan)
    sigs: List[Optional[tuple]] = [None] * n_scan
    ivs: List[Optional[AllowedInterval]] = [None] * n_scan
    for i, E in enumerate(Es):
        try:
            iv = _well_interval(model, float(E), well_anchor, boundary)
        except ValueError:
            continue
        f = lambda x: classical_momentum(model, float(E), x).real
        S = _integrate(f, iv.x1, iv.x2, iv.left is not None, iv.right is not None)
        th = 0.0
        if boundary == "two_turning_points":
            th = iv.right.quantization_phase - iv.left.quantization_phase
        vals[i] = S - th
        sigs[i] = _topology_signature(iv)
        ivs[i] = iv

    levels: List[LevelPrediction] = []
    for i in range(n_scan - 1):
        if sigs[i] is None or sigs[i] != sigs[i + 1]:
            continue
        lo, hi = vals[i], vals[i + 1]
        if boundary == "two_turning_points":
            n_lo = (lo / np.pi - 0.5)
            n_hi = (hi / np.pi - 0.5)
        else:
            n_lo = (lo / np.pi + 0.25)
            n_hi = (hi / np.pi + 0.25)
        for N in range(int(np.floor(min(n_lo, n_hi))) + 1, int(np.floor(max(n_lo, n_hi))) + 1):
            if boundary != "two_turning_points" and N < 1:
                continue
            target = np.pi * (N + 0.5) if boundary == "two_turning_points" else np.pi * (N - 0.25)

            def F(E: float) -> float:
                iv = _well_interval(model, E, well_anchor, boundary)
                f = lambda x: classical_momentum(model, E, x).real
                S = _integrate(f, iv.x1, iv.x2, iv.left is not None, iv.right is not None)
                th = 0.0
                if boundary == "two_turning_points":
                    th = iv.right.quantization_phase - iv.left.quantization_phase
                return S - th - target

            E_root = brentq(F, float(Es[i]), float(Es[i + 1]), xtol=1e-10)
            iv = _well_interval(model, E_root, well_anchor, boundary)
            S12, T12 = action_allowed(model, E_root, iv.x1, iv.x2)
            levels.append(
                LevelPrediction(
                    N=N,
                    E=float(E_root),
                    spacing=2 * np.pi / T12,
                    S12=S12,
                    T12=T12,
                    x1=iv.x1,
                    x2=iv.x2,
                    boundary=boundary,
                    n_cl=iv.x2 - iv.x1,
                    left_kind=None if iv.left is None else iv.left.kind,
                    right_kind=None if iv.right is None else iv.right.kind,
                )
            )
    levels.sort(key=lambda lv: lv.E)
    return levels


# -- tunneling ------------------------------------------------------------

def tunneling_rates(left: LevelPrediction, right: LevelPrediction,
                    model: PhaseSpaceModel) -> Tuple[float, float]:
    """Tunnel splitting eta and decay rate Gamma of a resonant pair.

        eta   = sqrt(Delta_L Delta_R)/(2 pi) exp(-S_B((E_L + E_R)/2)),
        Gamma = Delta_L/(2 pi) exp(-2 S_B(E_L)).

    The barrier is the forbidden region between the two wells."""
    E_mean = 0.5 * (left.E + right.E)
    ba = barrier_action(model, E_mean, left.x2, right.x1)
    eta = math.sqrt(left.spacing * right.spacing) / (2 * np.pi) * math.exp(-ba.S_B)
    ba_l = barrier_action(model, left.E, left.x2, right.x1)
    gamma = left.spacing / (2 * np.pi) * math.exp(-2.0 * ba_l.S_B)
    return float(eta), float(gamma)


def correction_dH(x: float, p, dt: float, J: float = 1.0):
    """Leading smooth correction to the classical symbol:
    dH = J (J dt)^2 / 24 cos p sin^2 p (vanishes at p = 0, +/-pi)."""
    return J * (J * dt) ** 2 / 24.0 * np.cos(p) * np.sin(p) ** 2


@dataclass
class PerturbationShifts:
    dt: float
    dS12: float                   # allowed-region action shift
    dE: float                     # own-well energy shift, -2 dS12/T12
    dS_B: float                   # direct under-barrier action shift
    dSB_dE: float                 # dS_B/dE at the level energy
    dE_resonance: float           # energy shift of the resonant subspace
    eta_ratio: float              # eta_eff / eta
    gamma_ratio: float            # Gamma_eff / Gamma
    perturbative_regime_exceeded: bool = False
    T12: float = float("nan")
    n_cl: float = float("nan")
    spacing: float = float("nan")


def _dS_allowed(model: PhaseSpaceModel, E: float, x1: float, x2: float, dt: float) -> float:
    """dS = -int dH/v dx = -(kappa/2) int sin(2 p(x)) dx over the allowed region."""
    kappa = (model.J * dt) ** 2 / 24.0
    f = lambda x: -0.5 * kappa * math.sin(2.0 * classical_momentum(model, E, x).real)
    return _integrate(f, x1, x2, _is_turning(model, E, x1), _is_turning(model, E, x2))


def _dS_barrier(model: PhaseSpaceModel, E: float, x1: float, x2: float, dt: float) -> float:
    """dS_B = -(J dt)^2/24 int sinh(2|p|)/2 dx over the forbidden region."""
    kappa = (model.J * dt) ** 2 / 24.0
    f = lambda x: -0.5 * kappa * math.sinh(2.0 * classical_momentum(model, E, x).imag)
    return _integrate(f, x1, x2, _is_turning(model, E, x1), _is_turning(model, E, x2))


def perturbation_shifts(level: LevelPrediction, model: PhaseSpaceModel, dt: float,
                        barrier: Tuple[float, float] | None = None,
                        partner: LevelPrediction | None = None,
                        dE_step: float = 1e-4) -> PerturbationShifts:
    """First-order Trotterization shifts for one bound level.

    Fills dS12, the well energy shift dE = -2 dS12/T12, the under-barrier
    action shift dS_B, and the tunneling-amplitude ratio

        eta_eff/eta = exp{ -(dS_B + (dS_B/dE) dE_res) },
        Gamma_eff/Gamma = (eta_eff/eta)^2,

    with dE_res = -dS_L/T_L - dS_R/T_R the shift of the resonant subspace
    (the partner well's shift defaults to this level's, i.e. a symmetric
    pair).  `barrier` is the forbidden window (x_left, x_right); by default
    the one starting at the level's right turning point.  dt values outside
    the perturbative window ((J dt)^2 > J/P_barr for tall barriers) are
    flagged, not rejected.
    """
    if dt == 0.0:
        return PerturbationShifts(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0,
                                  False, level.T12, level.n_cl, level.spacing)
    dS12 = _dS_allowed(model, level.E, level.x1, level.x2, dt)
    dE = -2.0 * dS12 / level.T12

    if partner is None:
        dE_res = dE
    else:
        dS_R = _dS_allowed(model, partner.E, partner.x1, partner.x2, dt)
        dE_res = -dS12 / level.T12 - dS_R / partner.T12

    if barrier is None:
        b_lo, b_hi = level.x2, model.x_hi
        segs = forbidden_intervals(model, level.E, b_lo, b_hi)
        if segs:
            b_lo, b_hi = segs[0]
    else:
        b_lo, b_hi = barrier

    dS_B = _dS_barrier(model, level.E, b_lo, b_hi, dt)

    def SB(E: float) -> float:
        segs = forbidden_intervals(model, E, b_lo - 2.0, b_hi + 2.0)
        if not segs:
            return 0.0
        a, b = max(segs, key=lambda s: s[1] - s[0])
        f = lambda x: classical_momentum(model, E, x).imag
        return _integrate(f, a, b, _is_turning(model, E, a), _is_turning(model, E, b))

    d1 = (SB(level.E + dE_step) - SB(level.E - dE_step)) / (2 * dE_step)
    d2 = (SB(level.E + 0.5 * dE_step) - SB(level.E - 0.5 * dE_step)) / dE_step
    dSB_dE = (4.0 * d2 - d1) / 3.0

    exponent = dS_B + dSB_dE * dE_res
    eta_ratio = math.exp(-exponent)

    xs = np.linspace(b_lo, b_hi, 201)
    P_barr = float(np.max(model.h(xs))) - level.E - model.J
    Jdt2 = (model.J * dt) ** 2
    exceeded = Jdt2 > (model.J / P_barr if P_barr > model.J else 1.0)

    return PerturbationShifts(
        dt=dt, dS12=dS12, dE=dE, dS_B=dS_B, dSB_dE=dSB_dE, dE_resonance=dE_res,
        eta_ratio=eta_ratio, gamma_ratio=eta_ratio**2,
        perturbative_regime_exceeded=bool(exceeded),
        T12=level.T12, n_cl=level.n_cl, spacing=level.spacing,
    )


@dataclass
class DetuningReport:
    eps_eff: float
    criterion_ok: Optional[bool]
    dt_star: float                 # step at which (J dt)^2 = eta n_cl / Delta


def detuning_effective(eps0: float, left_shift: PerturbationShifts,
                       right_shift: PerturbationShifts,
                       eta: float | None = None) -> DetuningReport:
    """Effective detuning of the resonant pair:

        eps_eff = eps + ( -dS_L/T_L + dS_R/T_R ),

    plus the no-detuning criterion (J dt)^2 <= eta n_cl / Delta evaluated
    with the left level's n_cl and Delta (pass eta = tunnel splitting)."""
    eps_eff = eps0 + (-left_shift.dS12 / left_shift.T12 + right_shift.dS12 / right_shift.T12)
    dt = left_shift.dt
    if eta is None or not np.isfinite(left_shift.spacing):
        return DetuningReport(float(eps_eff), None, float("nan"))
    thresh = eta * left_shift.n_cl / left_shift.spacing
    dt_star = math.sqrt(thresh)
    return DetuningReport(float(eps_eff), bool(dt**2 <= thresh), dt_star)


# -- large Trotter steps --------------------------------------------------

def large_step_kinetic(p, dt: float, J: float = 1.0):
    """Kinetic data of the large-step classical Hamiltonian.

    Returns (T(p), theta_p, v_p, p_c):

        T(p)    = -(2/dt) arcsin( sin(J dt/2) cos p ),
        theta_p : mixing angle of the smooth/oscillating wave components,
                  sin 2theta = sin^2(J dt/4) sin 2p / sqrt(1 - (cos p sin(J dt/2))^2),
        v_p     = dT/dp cos 4theta + (T/2) d(cos 4theta)/dp,
        p_c     = +/- i arccosh(1 / sin(J dt/2))   (kinetic branch point).
    """
    if not 0 < J * dt < 2 * np.pi:
        raise ValueError("large-step kinetics require 0 < J dt < 2 pi")
    p = np.asarray(p, dtype=float)
    g = 0.5 * J * dt

    def T(pv):
        return -(2.0 / dt) * np.arcsin(np.sin(g) * np.cos(pv))

    def theta(pv):
        den = np.sqrt(1.0 - (np.cos(pv) * np.sin(g)) ** 2)
        s2 = np.sin(0.5 * g) ** 2 * np.sin(2.0 * pv) / den
        c2 = (1.0 - 2.0 * np.cos(pv) ** 2 * np.sin(0.5 * g) ** 2) / den
        return 0.5 * np.arctan2(s2, c2) % np.pi

    Tp = T(p)
    th = theta(p)
    dTdp = (2.0 / dt) * np.sin(g) * np.sin(p) / np.sqrt(1.0 - (np.sin(g) * np.cos(p)) ** 2)
    eps = 1e-6
    c4 = np.cos(4.0 * theta(p + eps)) - np.cos(4.0 * theta(p - eps))
    dc4dp = c4 / (2.0 * eps)
    v = dTdp * np.cos(4.0 * th) + 0.5 * Tp * dc4dp
    p_c = 1j * np.arccosh(1.0 / np.sin(g))
    if p.ndim == 0:
        return float(Tp), float(th), float(v), complex(p_c)
    return Tp, th, v, complex(p_c)


@dataclass
class PortraitContour:
    E: float
    segments: List[Tuple[np.ndarray, np.ndarray]]   # (x, p>0 branch)
    areas: List[float]                               # 2 int p dx per segment


def phase_portrait(model: PhaseSpaceModel, energies: Sequence[float],
                   n_x: int = 2000) -> List[PortraitContour]:
    """Real-momentum contours H(x, p) = E of the model, per energy.

    Each allowed interval contributes a segment (x, p(x)); the closed
    contour is the segment mirrored in p.  Enclosed areas 2 int p dx serve
    as quantization diagnostics (resonances between separate regions show
    up as matching areas)."""
    out = []
    for E in energies:
        segments = []
        areas = []
        for iv in allowed_intervals(model, float(E)):
            xs = np.linspace(iv.x1, iv.x2, max(16, int(n_x * (iv.x2 - iv.x1) / (model.x_hi - model.x_lo))))
            ps = np.array([classical_momentum(model, float(E), float(x)).real for x in xs])
            segments.append((xs, ps))
            areas.append(2.0 * float(np.trapezoid(ps, xs)))
        out.append(PortraitContour(E=float(E), segments=segments, areas=areas))
    return out


def period_change(level: LevelPrediction, model: PhaseSpaceModel, dt: float,
                  dE_step: float = 1e-4) -> Tuple[float, float]:
    """Relative change of the classical period, split into the direct
    quadrature term and the energy-shift term:

        dT1/T = -(2/T) int dx/v  d/dp[ dH/v ],   d/dp[dH/v] = kappa cos 2p,
        dT2/T = (1/T) (dT/dE) dE,

    so the neglect of subexponential prefactors in the tunneling ratios
    can be audited.  Returns (dT1/T, dT2/T)."""
    if dt == 0.0:
        return 0.0, 0.0
    kappa = (model.J * dt) ** 2 / 24.0
    E = level.E

    def f(x: float) -> float:
        p = classical_momentum(model, E, x).real
        v = group_velocity_at(model, p).real
        return kappa * math.cos(2.0 * p) / v

    dT1 = -2.0 * _integrate(f, level.x1, level.x2,
                            _is_turning(model, E, level.x1), _is_turning(model, E, level.x2))

    def T_of(E: float) -> float:
        iv = _tracked_interval(model, E, 0.5 * (level.x1 + level.x2))
        return action_allowed(model, E, iv.x1, iv.x2)[1]

    dTdE = (T_of(E + dE_step) - T_of(E - dE_step)) / (2 * dE_step)
    shifts = level.shifts or perturbation_shifts(level, model, dt)
    dT2 = dTdE * shifts.dE
    return float(dT1 / level.T12), float(dT2 / level.T12)


# -- Rabi-period prediction (well + barrier combined) ----------------------

@dataclass
class RabiPeriodPrediction:
    E: float
    T_cl: float
    S_B: float
    interior_allowed: bool
    period: float                  # pi T_cl exp(S_B): period of the occupancy
                                   # signal, i.e. of the Fourier peak
    period_full_cycle: float       # 2 pi T_cl exp(S_B): full two-level cycle


def rabi_period(model: PhaseSpaceModel, E: float, well_anchor: float) -> RabiPeriodPrediction:
    """Semiclassical Rabi period at energy E for a symmetric double well.

    T_cl is the classical period in the well containing `well_anchor`;
    S_B the under-barrier action across the forbidden region to its right.
    Both the occupancy-signal period pi T_cl e^{S_B} (the inverse of the
    level splitting 2 eta) and its doubled variant are reported.
    """
    intervals = allowed_intervals(model, E)
    idx = next(i for i, iv in enumerate(intervals) if iv.x1 <= well_anchor <= iv.x2)
    iv = intervals[idx]
    _, T_cl = action_allowed(model, E, iv.x1, iv.x2)
    # the Rabi barrier spans from this well to the partner well; interior
    # allowed pockets (large-step regime) are excluded from the imaginary
    # action but flagged.  The partner is taken as the last allowed
    # interval of comparable size (pockets are much narrower).
    partners = [jv for jv in intervals[idx + 1:] if (jv.x2 - jv.x1) > 0.5 * (iv.x2 - iv.x1)]
    if not partners:
        raise ValueError("no partner well to the right of the anchor at this energy")
    window_lo, window_hi = iv.x2, partners[-1].x1
    legs = forbidden_intervals(model, E, window_lo, window_hi)
    S_B = 0.0
    for a, b in legs:
        f = lambda x: classical_momentum(model, E, x).imag
        S_B += _integrate(f, a, b, _is_turning(model, E, a), _is_turning(model, E, b))
    period = np.pi * T_cl * math.exp(S_B)
    return RabiPeriodPrediction(E=float(E), T_cl=float(T_cl), S_B=float(S_B),
                                interior_allowed=len(legs) > 1,
                                period=float(period), period_full_cycle=float(2 * period))
