"""Configuration-driven command-line front end.

A run is a single JSON document; ``--set key=value`` overrides individual
fields by dotted path.  Every run writes a self-describing artifact
directory containing a ``manifest.json`` that echoes the fully resolved
configuration (re-running from the manifest reproduces the artifacts
byte for byte, given the same build).

Commands: spectrum, effective-ham, defect, semiclassics, portrait,
overlap-map, rabi, sweep, noise.
Exit codes: 0 ok, 1 config error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

import numpy as np

from . import __version__, kernel_backend
from . import semiclassics as sc
from .chain import (ChainSpec, PotentialFamily, build_chain, custom_potential_from_file,
                    hamiltonian_matrix)
from .io import ensure_dir, fmt, write_csv, write_json
from .operators import save_operator
from .rabi import (ExperimentConfig, detuning_fit, doublet_pair, gate_noise_ensemble,
                   prepare_initial_state, rabi_density_map, run_trace,
                   tune_alpha_for_resonance, visibility_curve)
from .spectral import diagonalize, find_doublets, overlap_map, spectrum_of_effective
from .trotter import (TrotterPlan, bch_defect, effective_hamiltonian_for, locality_profile,
                      ordering_operators, step_unitary)

COMMANDS = ("spectrum", "effective-ham", "defect", "semiclassics", "portrait",
            "overlap-map", "rabi", "sweep", "noise")


class ConfigError(Exception):
    pass


_SCHEMA = {
    "command": None,
    "output_dir": None,
    "seed": None,
    "workers": None,
    "chain": {
        "L": None,
        "J": None,
        "potential": {"kind": None, "P": None, "alpha": None, "w": None, "dn": None,
                      "values": None, "file": None},
    },
    "plan": {"dt": None, "ordering": None, "alpha": None},
    "experiment": {"P": None, "w": None, "dn": None, "alpha": None, "L": None, "J": None,
                   "doublet_index": None, "noise_level": None, "M": None, "dM": None,
                   "dt_grid": None, "ordering": None, "split_alpha": None, "dt": None,
                   "tune_alpha": None},
    "semiclassics": {"kind": None, "well_anchor": None, "boundary": None,
                     "e_min": None, "e_max": None, "shifts": None},
    "portrait": {"kind": None, "energies": None},
    "overlap": {"well_sites": None, "h_ref": None},
    "noise": {"phase_sigma": None, "trials": None, "dt": None},
}

_DEFAULTS = {
    "output_dir": "out",
    "seed": 2024,
    "workers": 1,
}


def _check_keys(cfg: dict, schema: dict, path: str = "") -> None:
    for key, val in cfg.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(schema[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {path + key!r} must be an object")
            _check_keys(val, schema[key], path + key + ".")


def _set_path(cfg: dict, dotted: str, raw: str) -> None:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot descend into {dotted!r}")
    node[keys[-1]] = value


def resolve_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if "config" in cfg and isinstance(cfg["config"], dict):
            cfg = cfg["config"]  # accept a manifest as input
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        _set_path(cfg, key, val)
    if args.command_pos:
        cfg["command"] = args.command_pos
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.workers is not None:
        cfg["workers"] = args.workers
    if args.out is not None:
        cfg["output_dir"] = args.out
    for k, v in _DEFAULTS.items():
        cfg.setdefault(k, v)
    _check_keys(cfg, _SCHEMA)
    if cfg.get("command") not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {cfg.get('command')!r}")
    return cfg


def _potential_from_config(pot: dict) -> PotentialFamily:
    kind = pot.get("kind")
    if kind == "cosine":
        return PotentialFamily("cosine", {"P": pot["P"]})
    if kind == "linear":
        return PotentialFamily("linear", {"alpha": pot["alpha"]})
    if kind == "experimental":
        return PotentialFamily("experimental", {k: pot[k] for k in ("P", "w") } |
                               {k: pot.get(k, 0.0) for k in ("dn", "alpha")})
    if kind == "custom":
        if "file" in pot:
            return custom_potential_from_file(pot["file"])
        return PotentialFamily("custom", {"values": pot["values"]})
    raise ConfigError(f"unknown potential kind {kind!r}")


def _chain_from_config(cfg: dict) -> ChainSpec:
    try:
        chain = cfg["chain"]
        return build_chain(int(chain["L"]), float(chain.get("J", 1.0)),
                           _potential_from_config(chain["potential"]))
    except KeyError as exc:
        raise ConfigError(f"chain config is missing {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"chain: {exc}") from None


def _plan_from_config(cfg: dict) -> TrotterPlan:
    try:
        plan = cfg["plan"]
        return TrotterPlan(dt=float(plan["dt"]), ordering=plan.get("ordering", "kpk"),
                           alpha=float(plan.get("alpha", 0.5)))
    except KeyError as exc:
        raise ConfigError(f"plan config is missing {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"plan: {exc}") from None


def _experiment_from_config(cfg: dict) -> ExperimentConfig:
    exp = dict(cfg.get("experiment", {}))
    exp.pop("dt", None)
    exp.pop("tune_alpha", None)
    exp.setdefault("seed", cfg["seed"])
    try:
        return ExperimentConfig(**exp)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"experiment: {exc}") from None


def validate(cfg: dict) -> dict:
    """Dry-run parse plus physical sanity checks.

    Advisory: J dt < 1 and P dt < 1 (naive step-size criteria).
    Hard warning: J dt / 4 < 1 (locality of the effective Hamiltonian).
    """
    diags = {"errors": [], "warnings": [], "advisories": []}
    spec = plan = None
    if "chain" in cfg:
        try:
            spec = _chain_from_config(cfg)
        except ConfigError as exc:
            diags["errors"].append(str(exc))
    if "plan" in cfg:
        try:
            plan = _plan_from_config(cfg)
        except ConfigError as exc:
            diags["errors"].append(str(exc))
    if spec is not None and plan is not None and plan.dt > 0:
        Jdt = spec.J * plan.dt
        Pdt = spec.potential_span * plan.dt
        if Jdt >= 1:
            diags["advisories"].append(f"J dt = {Jdt:.3g} >= 1: naive step-size criterion violated")
        if Pdt >= 1:
            diags["advisories"].append(f"P dt = {Pdt:.3g} >= 1: naive step-size criterion violated")
        if Jdt / 4 >= 1:
            diags["warnings"].append(
                f"J dt / 4 = {Jdt / 4:.3g} >= 1: effective Hamiltonian loses locality")
    if cfg.get("command") == "noise":
        n = cfg.get("noise", {})
        if "phase_sigma" not in n:
            diags["errors"].append("noise.phase_sigma is required")
    return diags


# -- command implementations ------------------------------------------------

def _cmd_spectrum(cfg, out, manifest):
    spec = _chain_from_config(cfg)
    rep = diagonalize(hamiltonian_matrix(spec), chain=spec)
    write_csv(f"{out}/energies.csv", ["index", "energy"],
              [(k, E) for k, E in enumerate(rep.energies)])
    manifest["artifacts"].append("energies.csv")
    manifest["summary"] = {"L": spec.L, "E_min": float(rep.energies[0]),
                           "E_max": float(rep.energies[-1])}


def _cmd_effective_ham(cfg, out, manifest):
    spec = _chain_from_config(cfg)
    plan = _plan_from_config(cfg)
    U = step_unitary(spec, plan)
    Heff = effective_hamiltonian_for(spec, plan)
    save_operator(U, f"{out}/step_unitary.txt")
    save_operator(Heff, f"{out}/heff.txt")
    manifest["artifacts"] += ["step_unitary.txt", "heff.txt"]
    H = hamiltonian_matrix(spec)
    manifest["summary"] = {
        "folded": bool(Heff.meta.get("folded", False)),
        "norm_Heff_minus_H": float(np.linalg.norm(Heff.entries - H.entries, 2)),
    }
    if Heff.meta.get("folded"):
        manifest["warnings"].append("Floquet folding: target spectral width exceeds 2 pi/dt")


def _cmd_defect(cfg, out, manifest):
    spec = _chain_from_config(cfg)
    plan = _plan_from_config(cfg)
    D = bch_defect(ordering_operators(spec, plan))
    Heff = effective_hamiltonian_for(spec, plan)
    H = hamiltonian_matrix(spec)
    save_operator(D, f"{out}/defect.txt")
    ks, mk, ratio = locality_profile(Heff)
    write_csv(f"{out}/locality.csv", ["k", "max_abs", "fit_ratio"],
              [(int(k), m, ratio) for k, m in zip(ks, mk)])
    manifest["artifacts"] += ["defect.txt", "locality.csv"]
    resid = float(np.linalg.norm(Heff.entries - H.entries - plan.dt**2 * D.entries, 2))
    manifest["summary"] = {"residual_vs_dt2_defect": resid, "locality_ratio": ratio,
                           "reference_ratio_Jdt_over_4": spec.J * plan.dt / 4.0}


def _cmd_semiclassics(cfg, out, manifest):
    spec = _chain_from_config(cfg)
    s = cfg.get("semiclassics", {})
    kind = s.get("kind", "bare")
    dt = float(cfg.get("plan", {}).get("dt", 0.0))
    model = sc.phase_space_model(spec, kind, dt)
    anchor = float(s.get("well_anchor", (spec.L + 1) / 4.0))
    levels = sc.bohr_levels(model, anchor, boundary=s.get("boundary", "two_turning_points"),
                            e_min=s.get("e_min"), e_max=s.get("e_max"))
    rows = []
    want_shifts = bool(s.get("shifts", False)) and dt > 0
    for lv in levels:
        row = [lv.N, lv.E, lv.spacing, lv.S12, lv.T12, lv.x1, lv.x2, lv.n_cl]
        if want_shifts:
            sh = sc.perturbation_shifts(lv, model, dt)
            lv.shifts = sh
            row += [sh.dS12, sh.dE, sh.dS_B, sh.eta_ratio, sh.gamma_ratio]
            if sh.perturbative_regime_exceeded:
                manifest["warnings"].append(f"level N={lv.N}: perturbative regime exceeded")
        rows.append(row)
    header = ["N", "E", "spacing", "S12", "T12", "x1", "x2", "n_cl"]
    if want_shifts:
        header += ["dS12", "dE", "dS_B", "eta_ratio", "gamma_ratio"]
    write_csv(f"{out}/levels.csv", header, rows)
    manifest["artifacts"].append("levels.csv")
    manifest["summary"] = {"n_levels": len(levels), "kind": kind}


def _cmd_portrait(cfg, out, manifest):
    spec = _chain_from_config(cfg)
    s = cfg.get("portrait", {})
    dt = float(cfg.get("plan", {}).get("dt", 0.0))
    model = sc.phase_space_model(spec, s.get("kind", "large_step"), dt)
    energies = s.get("energies")
    if energies is None:
        raise ConfigError("portrait.energies is required")
    contours = sc.phase_portrait(model, [float(E) for E in energies])
    rows = []
    areas = []
    for c in contours:
        for xs, ps in c.segments:
            for x, p in zip(xs, ps):
                rows.append((c.E, x, p))
        areas.append({"E": c.E, "areas": c.areas})
    write_csv(f"{out}/portrait.csv", ["E", "x", "p"], rows)
    write_json(f"{out}/portrait_areas.json", {"contours": areas})
    manifest["artifacts"] += ["portrait.csv", "portrait_areas.json"]


def _cmd_overlap_map(cfg, out, manifest):
    spec = _chain_from_config(cfg)
    plan = _plan_from_config(cfg)
    exact = diagonalize(hamiltonian_matrix(spec), chain=spec)
    eff = spectrum_of_effective(effective_hamiltonian_for(spec, plan), spec)
    o = cfg.get("overlap", {})
    mask = None
    if o.get("well_sites"):
        mask = np.zeros(spec.L, dtype=bool)
        mask[[int(i) - 1 for i in o["well_sites"]]] = True
    omap = overlap_map(exact, eff, plan.dt, well_mask=mask, h_ref=o.get("h_ref"))
    n = omap.grid.shape[0]
    rows = [(M, N, omap.effective_energies[M], omap.exact_energies[N], omap.grid[M, N])
            for M in range(n) for N in range(n)]
    write_csv(f"{out}/overlap.csv", ["M", "N", "E_eff", "E_exact", "value"], rows)
    write_json(f"{out}/overlap_meta.json", {
        "L": spec.L, "dt": plan.dt, "ordering": plan.ordering,
        "normalization": omap.normalization,
        "ridge_lines": {name: [[float(E), float(f(E))] for E in omap.exact_energies]
                        for name, f in omap.ridge_lines.items()},
    })
    manifest["artifacts"] += ["overlap.csv", "overlap_meta.json"]


def _resolve_experiment(cfg, manifest):
    exp_cfg = _experiment_from_config(cfg)
    if cfg.get("experiment", {}).get("tune_alpha"):
        alpha_star, eps = tune_alpha_for_resonance(
            exp_cfg.P, exp_cfg.w, exp_cfg.dn, exp_cfg.L, exp_cfg.doublet_index, exp_cfg.J)
        exp_cfg.alpha = alpha_star
        manifest["summary"]["alpha_star"] = alpha_star
        manifest["summary"]["eps_at_alpha_star"] = eps
    return exp_cfg


def _cmd_rabi(cfg, out, manifest):
    exp_cfg = _resolve_experiment(cfg, manifest)
    dt = cfg.get("experiment", {}).get("dt")
    if dt is None:
        dt = exp_cfg.dt_grid[0]
    spec = exp_cfg.chain()
    rep = diagonalize(hamiltonian_matrix(spec), chain=spec)
    _, v1, v2 = doublet_pair(rep, (exp_cfg.L + 1) / 2.0, exp_cfg.doublet_index)
    psi = prepare_initial_state(v1, v2, exp_cfg.noise_level,
                                np.random.SeedSequence([exp_cfg.seed, 0]))
    trace = run_trace(psi, spec, exp_cfg.plan(float(dt)), exp_cfg.M, exp_cfg.dM)
    write_csv(f"{out}/trace.csv", ["step", "time", "n_left"],
              [(k * exp_cfg.dM, t, v) for k, (t, v) in enumerate(zip(trace.times, trace.n_left))])
    write_csv(f"{out}/spectrum.csv", ["omega", "power"],
              list(zip(trace.omegas, trace.power)))
    manifest["artifacts"] += ["trace.csv", "spectrum.csv"]
    manifest["summary"].update({
        "dt": float(dt), "peak_omega": trace.peak_omega, "peak_amp": trace.peak_amp,
        "peak_period": 2 * np.pi / trace.peak_omega,
    })


def _cmd_sweep(cfg, out, manifest):
    exp_cfg = _resolve_experiment(cfg, manifest)
    dm = rabi_density_map(exp_cfg, workers=int(cfg.get("workers", 1)))
    rows = []
    for i, dt in enumerate(dm.dts):
        for w, p in zip(dm.omegas[i], dm.powers[i]):
            rows.append((dt, w, p))
    write_csv(f"{out}/density.csv", ["dt", "omega", "power"], rows)
    write_csv(f"{out}/peaks.csv", ["dt", "omega_peak", "amp", "period"],
              [(dt, w, a, 2 * np.pi / w) for dt, w, a in dm.peaks])
    write_json(f"{out}/overlay.json", {
        "fixed_energy": [[dt, T] for dt, T in dm.overlay_fixed],
        "requantized": [[dt, T] for dt, T in dm.overlay_requantized],
    })
    manifest["artifacts"] += ["density.csv", "peaks.csv", "overlay.json"]
    manifest["summary"]["n_cells"] = len(dm.peaks)


def _cmd_noise(cfg, out, manifest):
    exp_cfg = _resolve_experiment(cfg, manifest)
    n = cfg.get("noise", {})
    if "phase_sigma" not in n:
        raise ConfigError("noise.phase_sigma is required")
    ens = gate_noise_ensemble(exp_cfg, float(n["phase_sigma"]), int(n.get("trials", 20)),
                              dt=n.get("dt"))
    write_csv(f"{out}/noise.csv", ["trial", "visibility", "period", "energy_shift"],
              [(t, v, p, d) for t, (v, p, d) in
               enumerate(zip(ens.visibilities, ens.periods, ens.energy_shifts))])
    write_json(f"{out}/noise_stats.json", {
        "phase_sigma": ens.phase_sigma, "dt": ens.dt, "threshold": ens.threshold,
        "n_cl": ens.n_cl, "base_visibility": ens.base_visibility,
        "mean_visibility": float(np.mean(ens.visibilities)),
        "median_visibility": float(np.median(ens.visibilities)),
        "std_visibility": float(np.std(ens.visibilities)),
        "std_energy_shift": float(np.std(ens.energy_shifts)),
        "within_threshold": bool(ens.phase_sigma <= ens.threshold),
    })
    manifest["artifacts"] += ["noise.csv", "noise_stats.json"]


_IMPLS = {
    "spectrum": _cmd_spectrum,
    "effective-ham": _cmd_effective_ham,
    "defect": _cmd_defect,
    "semiclassics": _cmd_semiclassics,
    "portrait": _cmd_portrait,
    "overlap-map": _cmd_overlap_map,
    "rabi": _cmd_rabi,
    "sweep": _cmd_sweep,
    "noise": _cmd_noise,
}


def run(cfg: dict) -> str:
    """Execute a resolved configuration; returns the artifact directory."""
    diags = validate(cfg)
    if diags["errors"]:
        raise ConfigError("; ".join(diags["errors"]))
    out = ensure_dir(cfg["output_dir"])
    manifest = {
        "command": cfg["command"],
        "config": cfg,
        "seed": cfg["seed"],
        "rng": "pcg64",
        "version": __version__,
        "kernel_backend": kernel_backend(),
        "warnings": list(diags["warnings"]),
        "advisories": list(diags["advisories"]),
        "artifacts": [],
        "summary": {},
    }
    _IMPLS[cfg["command"]](cfg, out, manifest)
    manifest["artifacts"].append("manifest.json")
    write_json(f"{out}/manifest.json", manifest)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="trotterchain",
                                     description="Trotterized chain dynamics runner")
    parser.add_argument("command_pos", nargs="?", choices=COMMANDS + ("validate",),
                        help="command (may also come from the config file)")
    parser.add_argument("--config", help="JSON config (or a previous manifest.json)")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config field by dotted path (repeatable)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", help="output directory")
    args = parser.parse_args(argv)

    validate_only = args.command_pos == "validate"
    if validate_only:
        args.command_pos = None

    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    if validate_only:
        diags = validate(cfg)
        print(json.dumps(diags, indent=2, sort_keys=True))
        return 1 if diags["errors"] else 0

    diags = validate(cfg)
    if diags["errors"]:
        for e in diags["errors"]:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        out = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # numerical failure
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
